//! Bit-stable CSV rendering of solver outputs.
//!
//! All floating-point fields are printed with 17 significant digits
//! (`{:.16e}`), enough to reconstruct the exact double, so outputs from
//! different engines or thread counts can be compared byte for byte.
//! Rendering never reorders rows: surfaces emit stage-major then
//! regime-major then node-major, paths emit in time order.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::lsmc::{PathRecord, RegressionModel, ValueEstimate};
use crate::market::Regime;
use crate::mca::{Lattice, RegionCell, ValueSurface};

/// Exact decimal form of one double.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `content` to `path`, creating parent directories.
pub fn write_text(path: &Path, content: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// One law's value estimates in a comparison table.
#[derive(Clone, Debug)]
pub struct LawRow {
    pub law: String,
    pub v1: f64,
    pub se1: f64,
    pub v2: f64,
    pub se2: f64,
}

impl LawRow {
    /// Extracts the starting-regime-(0,0) entries of an estimate.
    pub fn from_estimate(law: &str, est: &ValueEstimate) -> Self {
        LawRow {
            law: law.to_string(),
            v1: est.mean[0][0],
            se1: est.se[0][0],
            v2: est.mean[1][0],
            se2: est.se[1][0],
        }
    }
}

/// Law-comparison table: `law,v1,se1,v2,se2`.
pub fn compare_laws_csv(rows: &[LawRow]) -> String {
    let mut out = String::from("law,v1,se1,v2,se2\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.law,
            fmt_float(r.v1),
            fmt_float(r.se1),
            fmt_float(r.v2),
            fmt_float(r.se2)
        );
    }
    out
}

/// Value surface rows for the requested stages:
/// `t,logp,logx,regime,v1,v2,g00,g01,g10,g11,class`. Policy columns are
/// blank at the terminal stage, which stores values only.
pub fn surface_csv(lat: &Lattice, vs: &ValueSurface, stages: &[usize]) -> String {
    let mut out = String::from("t,logp,logx,regime,v1,v2,g00,g01,g10,g11,class\n");
    for &t in stages {
        for regime in 0..4 {
            for node in 0..vs.nodes {
                let (ip, ix) = lat.coords(node);
                let z = Regime::from_index(regime);
                let (v1, v2) = vs.at(t, z, node);
                let _ = write!(
                    out,
                    "{t},{},{},{regime},{},{}",
                    fmt_float(lat.logp[ip]),
                    fmt_float(lat.logx[ix]),
                    fmt_float(v1),
                    fmt_float(v2)
                );
                if t < vs.stages {
                    let g = vs.gammas[t][regime][node].as_array();
                    let kind = vs.kinds[t][regime][node];
                    let _ = writeln!(
                        out,
                        ",{},{},{},{},{}",
                        fmt_float(g[0]),
                        fmt_float(g[1]),
                        fmt_float(g[2]),
                        fmt_float(g[3]),
                        kind.as_str()
                    );
                } else {
                    out.push_str(",,,,,\n");
                }
            }
        }
    }
    out
}

/// Region map at one (stage, regime):
/// `logp,logx,class,action1,action2,g00,g01,g10,g11`.
pub fn region_map_csv(lat: &Lattice, cells: &[RegionCell]) -> String {
    let mut out = String::from("logp,logx,class,action1,action2,g00,g01,g10,g11\n");
    for (node, cell) in cells.iter().enumerate() {
        let (ip, ix) = lat.coords(node);
        let g = cell.gamma.as_array();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_float(lat.logp[ip]),
            fmt_float(lat.logx[ix]),
            cell.kind.as_str(),
            cell.action.0,
            cell.action.1,
            fmt_float(g[0]),
            fmt_float(g[1]),
            fmt_float(g[2]),
            fmt_float(g[3])
        );
    }
    out
}

/// Sample path rows: `t,p,x,regime,spread1,spread2,pnl1,pnl2`, where
/// `regime` is the implemented regime's one-based index among
/// {00, 01, 10, 11}.
pub fn path_csv(rec: &PathRecord) -> String {
    let mut out = String::from("t,p,x,regime,spread1,spread2,pnl1,pnl2\n");
    for s in &rec.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.t,
            fmt_float(s.p),
            fmt_float(s.x),
            s.regime.index() + 1,
            fmt_float(s.spread1),
            fmt_float(s.spread2),
            fmt_float(s.pnl1),
            fmt_float(s.pnl2)
        );
    }
    out
}

/// Fitted coefficient dump: `t,regime,player,term,alpha`, one row per
/// coefficient, players one-based.
pub fn coefficients_csv(model: &RegressionModel) -> String {
    let mut out = String::from("t,regime,player,term,alpha\n");
    for t in 0..model.stages {
        for regime in 0..4 {
            for player in 0..2 {
                for (term, a) in model.alpha[player][t][regime].iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{t},{regime},{},{term},{}",
                        player + 1,
                        fmt_float(*a)
                    );
                }
            }
        }
    }
    out
}
