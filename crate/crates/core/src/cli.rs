//! Command-line interface.
//!
//! Every command is a pure function of the configuration file and the
//! seed: outputs are written as bit-stable CSV so identical inputs give
//! identical bytes regardless of `--threads`. Exit codes: 0 on success,
//! 2 for configuration or i/o problems, 3 for numeric failures inside a
//! solve. On failure the message is also appended to `error.txt` in the
//! output directory when possible.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{parse_law, EngineChoice, ModelConfig};
use crate::error::Error;
use crate::lsmc::{simulate_cashflow_path, solve_lsmc, LsmcParams};
use crate::market::Regime;
use crate::mca::{build_lattice, region_map, solve_mca};
use crate::report;
use crate::stage_game::LawSpec;

#[derive(Parser)]
#[command(
    name = "switchgame",
    about = "Correlated-equilibrium solver for a two-producer switching game",
    version
)]
struct Cli {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides engine.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides engine.law (utilitarian, egalitarian, preferential-1,
    /// preferential-2, green, lex-first).
    #[arg(long, global = true)]
    law: Option<String>,
    /// Overrides engine.kind (mca, lsmc, both).
    #[arg(long, global = true)]
    engine: Option<String>,
    /// Overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solves the four reference correlation laws and writes the value
    /// comparison table.
    CompareLaws,
    /// Exports the lattice equilibrium map at one stage and incoming
    /// regime.
    RegionMap {
        /// Stage index, 0-based, strictly before the horizon.
        #[arg(long)]
        stage: usize,
        /// Incoming regime as two bits, e.g. 00, 01, 10, 11.
        #[arg(long, default_value = "00")]
        regime: String,
    },
    /// Simulates one equilibrium path under the fitted policy and
    /// writes its record plus the coefficient dump.
    SamplePath {
        /// Which noise stream to realize.
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
}

fn parse_regime(s: &str) -> Result<Regime, Error> {
    let bits: Vec<char> = s.trim().chars().collect();
    if bits.len() == 2 && bits.iter().all(|c| *c == '0' || *c == '1') {
        return Ok(Regime::new(
            if bits[0] == '1' { 1 } else { 0 },
            if bits[1] == '1' { 1 } else { 0 },
        ));
    }
    Err(Error::config(format!(
        "regime `{s}` must be two bits such as 00 or 10"
    )))
}

/// The four laws of the reference comparison, in table order.
fn reference_laws(cfg: &ModelConfig) -> Vec<LawSpec> {
    let utilitarian = match &cfg.law {
        LawSpec::Utilitarian { w1, w2 } => LawSpec::Utilitarian { w1: *w1, w2: *w2 },
        _ => LawSpec::Utilitarian { w1: 1.0, w2: 1.0 },
    };
    vec![
        utilitarian,
        LawSpec::Egalitarian,
        LawSpec::Preferential(1),
        LawSpec::Preferential(2),
    ]
}

fn cmd_compare_laws(cfg: &ModelConfig) -> Result<(), Error> {
    let laws = reference_laws(cfg);
    let mut timings = String::new();
    if cfg.engine.runs_lsmc() {
        let mut rows = Vec::new();
        for law in &laws {
            let started = Instant::now();
            let prm = LsmcParams {
                paths: cfg.paths,
                outer_iters: cfg.outer_iters,
                seed: cfg.seed,
                audit_paths: 0,
                anterior: cfg.anterior,
            };
            let sol = solve_lsmc(
                &cfg.market,
                &cfg.producer1,
                &cfg.producer2,
                cfg.payoff_cap,
                law,
                &cfg.basis,
                &prm,
            )?;
            timings.push_str(&format!(
                "lsmc {} {:.3}s\n",
                law.name(),
                started.elapsed().as_secs_f64()
            ));
            rows.push(report::LawRow::from_estimate(law.name(), &sol.estimate));
        }
        report::write_text(&cfg.out_dir.join("compare_laws.csv"), &report::compare_laws_csv(&rows))?;
    }
    if cfg.engine.runs_mca() {
        let lat = build_lattice(
            &cfg.market,
            &cfg.producer1,
            &cfg.producer2,
            cfg.grid_span,
            (cfg.grid_np, cfg.grid_nx),
        )?;
        let mut rows = Vec::new();
        for law in &laws {
            let started = Instant::now();
            let vs = solve_mca(&lat, law, &cfg.producer1, &cfg.producer2, cfg.payoff_cap)?;
            timings.push_str(&format!(
                "mca {} {:.3}s\n",
                law.name(),
                started.elapsed().as_secs_f64()
            ));
            let (v1, v2) = vs.at(0, Regime::new(0, 0), lat.anchor_node());
            rows.push(report::LawRow { law: law.name().into(), v1, se1: 0.0, v2, se2: 0.0 });
        }
        report::write_text(
            &cfg.out_dir.join("compare_laws_mca.csv"),
            &report::compare_laws_csv(&rows),
        )?;
    }
    // Wall-clock timings are environment dependent and deliberately kept
    // out of the byte-stable tables.
    report::write_text(&cfg.out_dir.join("timings.txt"), &timings)?;
    Ok(())
}

fn cmd_region_map(cfg: &ModelConfig, stage: usize, regime: &str) -> Result<(), Error> {
    let zeta = parse_regime(regime)?;
    let lat = build_lattice(
        &cfg.market,
        &cfg.producer1,
        &cfg.producer2,
        cfg.grid_span,
        (cfg.grid_np, cfg.grid_nx),
    )?;
    let vs = solve_mca(&lat, &cfg.law, &cfg.producer1, &cfg.producer2, cfg.payoff_cap)?;
    let cells = region_map(&vs, stage, zeta)?;
    report::write_text(&cfg.out_dir.join("region_map.csv"), &report::region_map_csv(&lat, &cells))
}

fn cmd_sample_path(cfg: &ModelConfig, path: u64) -> Result<(), Error> {
    let prm = LsmcParams {
        paths: cfg.paths,
        outer_iters: cfg.outer_iters,
        seed: cfg.seed,
        audit_paths: 0,
        anterior: cfg.anterior,
    };
    let sol = solve_lsmc(
        &cfg.market,
        &cfg.producer1,
        &cfg.producer2,
        cfg.payoff_cap,
        &cfg.law,
        &cfg.basis,
        &prm,
    )?;
    let rec = simulate_cashflow_path(
        &cfg.market,
        &cfg.producer1,
        &cfg.producer2,
        cfg.payoff_cap,
        &cfg.law,
        &cfg.basis,
        &sol.model,
        Regime::new(0, 0),
        cfg.seed,
        path,
    )?;
    report::write_text(&cfg.out_dir.join("sample_path.csv"), &report::path_csv(&rec))?;
    report::write_text(
        &cfg.out_dir.join("coefficients.csv"),
        &report::coefficients_csv(&sol.model),
    )
}

fn load_config(cli: &Cli) -> Result<ModelConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ModelConfig::from_file(path)?,
        None => ModelConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(law) = &cli.law {
        let (w1, w2) = match &cfg.law {
            LawSpec::Utilitarian { w1, w2 } => (*w1, *w2),
            _ => (1.0, 1.0),
        };
        cfg.law = parse_law(law, w1, w2)?;
    }
    if let Some(engine) = &cli.engine {
        cfg.engine = EngineChoice::parse(engine)?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        Error::Config(_) | Error::Io(_) => 2,
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        // Ignore the error when a pool already exists (e.g. in-process
        // reuse); the contract is value invariance, not pool ownership.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.cmd {
        Command::CompareLaws => cmd_compare_laws(&cfg),
        Command::RegionMap { stage, regime } => cmd_region_map(&cfg, *stage, regime),
        Command::SamplePath { path } => cmd_sample_path(&cfg, *path),
    }
}

/// Parses arguments from the environment, runs the command, and returns
/// the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            let out_dir = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            let _ = report::write_text(&out_dir.join("error.txt"), &format!("{err}\n"));
            exit_code(&err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_parse_as_two_bits() {
        assert_eq!(parse_regime("00").unwrap(), Regime::new(0, 0));
        assert_eq!(parse_regime("01").unwrap(), Regime::new(0, 1));
        assert_eq!(parse_regime("10").unwrap(), Regime::new(1, 0));
        assert_eq!(parse_regime("11").unwrap(), Regime::new(1, 1));
        assert!(parse_regime("2").is_err());
        assert!(parse_regime("111").is_err());
    }

    #[test]
    fn numeric_failures_use_a_distinct_exit_code() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::numeric("x")), 3);
    }
}
