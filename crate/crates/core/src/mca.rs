//! Lattice engine: a Markov chain approximation of the two log prices
//! with locally matched moments, plus the full backward recursion of the
//! switching game on that chain.
//!
//! The state (log P, log X) lives on a regular grid. Each axis transition
//! uses a three-point stencil at {m-k, m, m+k}, where m is the node
//! nearest the one-step conditional mean and the reach k is the smallest
//! integer with (k·h)² ≥ variance + (h/2)²; the weights
//!
//! ```text
//! pu - pd = e / (k·h)            e = mean offset from node m
//! pu + pd = (v + e²) / (k·h)²    v = one-step variance
//! ```
//!
//! reproduce the conditional mean and variance exactly at interior nodes.
//! A plain neighbor stencil (k = 1) cannot carry the step variance of a
//! weekly-sampled price on a usefully fine grid, so the reach scales with
//! the variance instead; supports stay local in price space (k·h barely
//! exceeds the one-step standard deviation). The two axes combine as a
//! product chain; correlation is injected by moving a weight
//!
//! ```text
//! delta = cov(step) / (4 · kp·hp · kx·hx)
//! ```
//!
//! from the (up,down) and (down,up) corner pairs to (up,up) and
//! (down,down), which adds the exact covariance and leaves every marginal
//! moment untouched. Rows that would need negative mass abort lattice
//! construction with a configuration error.
//!
//! The price stencil is regime independent; the allowance stencil is
//! built once per joint regime, since the regime only moves the drift
//! target. Boundary nodes clamp stencil indices onto the grid (mass
//! merges at the edge), the standard truncation of chain approximations.

use rayon::prelude::*;

use crate::error::Error;
use crate::market::{mean_levels, spread, MarketParams, ProducerParams, Regime};
use crate::matrix_game::{self, GameKind, JointDistribution};
use crate::stage_game::{build_stage_game, ContinuationQuad, LawSpec, RationalityReport};

/// One-axis transition: probabilities over the clamped node indices
/// {m-k, m, m+k}, ordered down, mid, up.
#[derive(Clone, Copy, Debug)]
pub struct AxisStencil {
    pub idx: [u32; 3],
    pub prob: [f64; 3],
}

/// Discretized market: grids, spacings, per-axis stencils and the corner
/// correlation weight.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub mp: MarketParams,
    pub logp: Vec<f64>,
    pub logx: Vec<f64>,
    pub hp: f64,
    pub hx: f64,
    pub kp: usize,
    pub kx: usize,
    /// Corner weight moving covariance into the product chain.
    pub delta: f64,
    /// Price stencil per p-index (regime independent).
    pub p_sten: Vec<AxisStencil>,
    /// Allowance stencil per regime per x-index.
    pub x_sten: [Vec<AxisStencil>; 4],
    /// Grid indices of (log p0, log x0); the grid is shifted so these are
    /// exact nodes.
    pub anchor: (usize, usize),
}

impl Lattice {
    pub fn node_count(&self) -> usize {
        self.logp.len() * self.logx.len()
    }

    pub fn node_of(&self, ip: usize, ix: usize) -> usize {
        ip * self.logx.len() + ix
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.logx.len(), node % self.logx.len())
    }

    pub fn anchor_node(&self) -> usize {
        self.node_of(self.anchor.0, self.anchor.1)
    }

    /// Writes E[values(next) | node, regime] for every node.
    pub fn expect_into(&self, regime: usize, values: &[f64], out: &mut [f64]) {
        let nx = self.logx.len();
        out.par_iter_mut().enumerate().for_each(|(n, o)| {
            let sp = &self.p_sten[n / nx];
            let sx = &self.x_sten[regime][n % nx];
            let mut acc = 0.0;
            for a in 0..3 {
                let base = sp.idx[a] as usize * nx;
                let w = sp.prob[a];
                for b in 0..3 {
                    acc += w * sx.prob[b] * values[base + sx.idx[b] as usize];
                }
            }
            if self.delta != 0.0 {
                let (pd, pu) = (sp.idx[0] as usize * nx, sp.idx[2] as usize * nx);
                let (xd, xu) = (sx.idx[0] as usize, sx.idx[2] as usize);
                acc += self.delta
                    * (values[pu + xu] + values[pd + xd] - values[pu + xd] - values[pd + xu]);
            }
            *o = acc;
        });
    }

    /// Materializes one transition row as (node, probability) pairs with
    /// merged duplicates, for audits and tests.
    pub fn row_entries(&self, regime: usize, node: usize) -> Vec<(usize, f64)> {
        let nx = self.logx.len();
        let (ip, ix) = self.coords(node);
        let sp = &self.p_sten[ip];
        let sx = &self.x_sten[regime][ix];
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(9);
        let mut add = |target: usize, w: f64| {
            if let Some(e) = entries.iter_mut().find(|(n, _)| *n == target) {
                e.1 += w;
            } else {
                entries.push((target, w));
            }
        };
        for a in 0..3 {
            for b in 0..3 {
                add(
                    sp.idx[a] as usize * nx + sx.idx[b] as usize,
                    sp.prob[a] * sx.prob[b],
                );
            }
        }
        if self.delta != 0.0 {
            let (pd, pu) = (sp.idx[0] as usize * nx, sp.idx[2] as usize * nx);
            let (xd, xu) = (sx.idx[0] as usize, sx.idx[2] as usize);
            add(pu + xu, self.delta);
            add(pd + xd, self.delta);
            add(pu + xd, -self.delta);
            add(pd + xu, -self.delta);
        }
        entries.retain(|(_, w)| *w != 0.0);
        entries
    }
}

// Axis grid covering [lo, hi] whose spacing is chosen so `anchor` falls
// exactly on a node after a sub-spacing shift.
fn axis_grid(mut lo: f64, mut hi: f64, anchor: f64, n: usize) -> (Vec<f64>, f64, usize) {
    lo = lo.min(anchor);
    hi = hi.max(anchor);
    if hi - lo < 1e-6 {
        // Degenerate span (deterministic axis anchored at its target).
        lo -= 5e-7;
        hi += 5e-7;
    }
    let h = (hi - lo) / (n - 1) as f64;
    let q = ((anchor - lo) / h).round();
    lo += (anchor - lo) - h * q;
    let grid = (0..n).map(|i| lo + i as f64 * h).collect();
    let idx = (q as usize).min(n - 1);
    (grid, h, idx)
}

// Stationary standard deviation of the discrete AR(1) log price, falling
// back to the horizon-accumulated deviation when mean reversion is too
// weak or too strong for a stationary law.
fn stationary_std(step_var: f64, kappa_dt: f64, periods: usize) -> f64 {
    let phi = 1.0 - kappa_dt;
    let den = 1.0 - phi * phi;
    if den > 1e-12 {
        (step_var / den).sqrt()
    } else {
        (step_var * periods as f64).sqrt()
    }
}

// Smallest stencil reach able to carry the step variance.
fn stencil_reach(var: f64, h: f64) -> usize {
    let k = ((var + 0.25 * h * h).sqrt() / h).ceil();
    (k as usize).max(1)
}

fn build_axis_stencils(
    grid: &[f64],
    h: f64,
    k: usize,
    var: f64,
    drift_to: impl Fn(f64) -> f64,
    axis: &str,
) -> Result<Vec<AxisStencil>, Error> {
    let n = grid.len();
    let lo = grid[0];
    let last = (n - 1) as isize;
    let mut out = Vec::with_capacity(n);
    for &y in grid {
        let mu = drift_to(y);
        let m = (((mu - lo) / h).round() as isize).clamp(0, last);
        let down = (m - k as isize).clamp(0, last) as u32;
        let up = (m + k as isize).clamp(0, last) as u32;
        let idx = [down, m as u32, up];
        if var == 0.0 {
            out.push(AxisStencil { idx, prob: [0.0, 1.0, 0.0] });
            continue;
        }
        // Mean offset from the center node; clamping only bites at the
        // boundary, where truncation error is accepted.
        let e = (mu - grid[m as usize]).clamp(-0.5 * h, 0.5 * h);
        let kh = k as f64 * h;
        let r = (var + e * e) / (kh * kh);
        let du = e / kh;
        let mut pu = 0.5 * (r + du);
        let mut pd = 0.5 * (r - du);
        if pu < -1e-12 || pd < -1e-12 || r > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "{axis} transition probabilities go negative (variance {var:.3e}, \
                 spacing {h:.3e}): refine the grid or adjust dt/volatility"
            )));
        }
        pu = pu.max(0.0);
        pd = pd.max(0.0);
        out.push(AxisStencil { idx, prob: [pd, 1.0 - pu - pd, pu] });
    }
    Ok(out)
}

/// Builds the lattice for the given market, covering `span` stationary
/// standard deviations around the long-run levels on each axis (the
/// allowance axis uses the lowest and highest drift targets across
/// regimes) and always containing the initial prices as exact nodes.
pub fn build_lattice(
    mp: &MarketParams,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    span: f64,
    sizes: (usize, usize),
) -> Result<Lattice, Error> {
    mp.validate()?;
    pp1.validate()?;
    pp2.validate()?;
    if sizes.0 < 3 || sizes.1 < 3 {
        return Err(Error::config("lattice sizes must be at least 3 per axis"));
    }
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::config("lattice span must be positive"));
    }

    let var_p = mp.step_variance_p();
    let var_x = mp.step_variance_x();
    let std_p = stationary_std(var_p, mp.kappa_p * mp.dt, mp.periods);
    let std_x = stationary_std(var_x, mp.kappa_x * mp.dt, mp.periods);

    let levels = mean_levels(mp, pp1, pp2)?;
    let f_lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let f_hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let center_p = mp.pbar.ln();
    let (logp, hp, aip) = axis_grid(
        center_p - span * std_p,
        center_p + span * std_p,
        mp.p0.ln(),
        sizes.0,
    );
    let (logx, hx, aix) = axis_grid(f_lo - span * std_x, f_hi + span * std_x, mp.x0.ln(), sizes.1);

    let kp = stencil_reach(var_p, hp);
    let kx = stencil_reach(var_x, hx);
    if kp >= sizes.0 || kx >= sizes.1 {
        return Err(Error::config(
            "stencil reach exceeds the grid: widen the span or refine the grid",
        ));
    }

    let kap_p = mp.kappa_p * mp.dt;
    let p_sten = build_axis_stencils(
        &logp,
        hp,
        kp,
        var_p,
        |y| y + kap_p * (center_p - y),
        "price",
    )?;

    let kap_x = mp.kappa_x * mp.dt;
    let mut x_sten_vec = Vec::with_capacity(4);
    for r in 0..4 {
        let f = levels[r];
        x_sten_vec.push(build_axis_stencils(
            &logx,
            hx,
            kx,
            var_x,
            |y| y + kap_x * (f - y),
            "allowance",
        )?);
    }
    let x_sten: [Vec<AxisStencil>; 4] = match x_sten_vec.try_into() {
        Ok(a) => a,
        Err(_) => unreachable!("four regimes"),
    };

    let cov = mp.step_covariance();
    let delta = if cov == 0.0 {
        0.0
    } else {
        cov / (4.0 * kp as f64 * hp * kx as f64 * hx)
    };
    if delta != 0.0 {
        // The corner pairs losing weight must be able to afford it; the
        // factors are independent, so the minimum product is the product
        // of minima.
        let min3 = |s: &[AxisStencil], i: usize| {
            s.iter().map(|a| a.prob[i]).fold(f64::INFINITY, f64::min)
        };
        let (pd, pu) = (min3(&p_sten, 0), min3(&p_sten, 2));
        for xs in &x_sten {
            let (xd, xu) = (min3(xs, 0), min3(xs, 2));
            let afford = if delta > 0.0 {
                (pu * xd).min(pd * xu)
            } else {
                (pu * xu).min(pd * xd)
            };
            if afford < delta.abs() {
                return Err(Error::config(
                    "correlation weight exceeds corner mass: refine the grid, \
                     lower |rho| or shrink dt",
                ));
            }
        }
    }

    Ok(Lattice {
        mp: mp.clone(),
        logp,
        logx,
        hp,
        hx,
        kp,
        kx,
        delta,
        p_sten,
        x_sten,
        anchor: (aip, aix),
    })
}

/// Backward solution of the switching game on the lattice. Stage `t`
/// slices of `v1`/`v2` run 0..=stages with zero terminal values; policies
/// cover 0..stages.
#[derive(Clone, Debug)]
pub struct ValueSurface {
    pub stages: usize,
    pub nodes: usize,
    pub v1: Vec<[Vec<f64>; 4]>,
    pub v2: Vec<[Vec<f64>; 4]>,
    pub gammas: Vec<[Vec<JointDistribution>; 4]>,
    pub kinds: Vec<[Vec<GameKind>; 4]>,
}

impl ValueSurface {
    /// Value pair at one (stage, regime, node).
    pub fn at(&self, t: usize, zeta: Regime, node: usize) -> (f64, f64) {
        (self.v1[t][zeta.index()][node], self.v2[t][zeta.index()][node])
    }
}

// Capped per-node spreads for both producers over all lattice nodes.
fn spread_fields(
    lat: &Lattice,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
) -> (Vec<f64>, Vec<f64>) {
    let nx = lat.logx.len();
    let p: Vec<f64> = lat.logp.iter().map(|l| l.exp()).collect();
    let x: Vec<f64> = lat.logx.iter().map(|l| l.exp()).collect();
    let nodes = lat.node_count();
    let mut psi1 = vec![0.0; nodes];
    let mut psi2 = vec![0.0; nodes];
    for n in 0..nodes {
        let (ip, ix) = (n / nx, n % nx);
        psi1[n] = spread(pp1, p[ip], x[ix], cap);
        psi2[n] = spread(pp2, p[ip], x[ix], cap);
    }
    (psi1, psi2)
}

/// Solves the full switching game by backward recursion over the lattice.
/// `cap` truncates the per-year spread from above.
pub fn solve_mca(
    lat: &Lattice,
    law: &LawSpec,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
) -> Result<ValueSurface, Error> {
    law.validate()?;
    let stages = lat.mp.periods;
    let nodes = lat.node_count();
    let dt = lat.mp.dt;
    let laws = Regime::ALL.map(|z| law.resolve(z, pp1, pp2));
    let (psi1, psi2) = spread_fields(lat, pp1, pp2, cap);

    let zero4 = || [vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]];
    let mut v1 = vec![zero4(); stages + 1];
    let mut v2 = vec![zero4(); stages + 1];
    let mut gammas = Vec::with_capacity(stages);
    let mut kinds = Vec::with_capacity(stages);
    for _ in 0..stages {
        gammas.push([(); 4].map(|_| vec![JointDistribution::uniform(); nodes]));
        kinds.push([(); 4].map(|_| vec![GameKind::Degenerate; nodes]));
    }

    let mut e1 = zero4();
    let mut e2 = zero4();
    for t in (0..stages).rev() {
        for r in 0..4 {
            lat.expect_into(r, &v1[t + 1][r], &mut e1[r]);
            lat.expect_into(r, &v2[t + 1][r], &mut e2[r]);
        }
        for zi in 0..4 {
            let zeta = Regime::from_index(zi);
            let law_z = &laws[zi];
            let cells: Vec<(f64, f64, JointDistribution, GameKind)> = (0..nodes)
                .into_par_iter()
                .map(|n| {
                    let exp = [
                        [e1[0][n], e1[1][n], e1[2][n], e1[3][n]],
                        [e2[0][n], e2[1][n], e2[2][n], e2[3][n]],
                    ];
                    let quad = ContinuationQuad::from_expectations(exp, psi1[n], psi2[n], dt);
                    let game = build_stage_game(zeta, &quad, pp1, pp2);
                    let sol = matrix_game::select_ce(&game, law_z);
                    (sol.v1, sol.v2, sol.gamma, sol.kind)
                })
                .collect();
            for (n, (a, b, g, k)) in cells.into_iter().enumerate() {
                v1[t][zi][n] = a;
                v2[t][zi][n] = b;
                gammas[t][zi][n] = g;
                kinds[t][zi][n] = k;
            }
        }
    }
    Ok(ValueSurface { stages, nodes, v1, v2, gammas, kinds })
}

/// One cell of a stage/regime classification map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionCell {
    pub kind: GameKind,
    /// Modal recommended action pair (first maximum in cell order).
    pub action: (u8, u8),
    pub gamma: JointDistribution,
}

/// Extracts the per-node classification and modal action pair of one
/// (stage, regime) slice for plotting.
pub fn region_map(vs: &ValueSurface, t: usize, zeta: Regime) -> Result<Vec<RegionCell>, Error> {
    if t >= vs.stages {
        return Err(Error::config(format!(
            "stage {t} out of range: policies exist for stages 0..{}",
            vs.stages
        )));
    }
    let zi = zeta.index();
    Ok((0..vs.nodes)
        .map(|n| {
            let gamma = vs.gammas[t][zi][n];
            let g = gamma.as_array();
            let mut best = 0;
            for c in 1..4 {
                if g[c] > g[best] {
                    best = c;
                }
            }
            RegionCell {
                kind: vs.kinds[t][zi][n],
                action: ((best / 2) as u8, (best % 2) as u8),
                gamma,
            }
        })
        .collect())
}

/// Re-derives every stage game of a lattice solution from the stored
/// next-stage values and audits the recorded γ against the incentive
/// constraints. The report's node field encodes regime and node as
/// `regime * nodes + node`.
pub fn verify_surface_rationality(
    lat: &Lattice,
    vs: &ValueSurface,
    law: &LawSpec,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
    tol: f64,
) -> RationalityReport {
    let _ = law;
    let nodes = vs.nodes;
    let dt = lat.mp.dt;
    let (psi1, psi2) = spread_fields(lat, pp1, pp2, cap);
    let zero4 = || [vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]];
    let mut e1 = zero4();
    let mut e2 = zero4();
    let mut report = RationalityReport::new();
    for t in 0..vs.stages {
        for r in 0..4 {
            lat.expect_into(r, &vs.v1[t + 1][r], &mut e1[r]);
            lat.expect_into(r, &vs.v2[t + 1][r], &mut e2[r]);
        }
        for zi in 0..4 {
            let zeta = Regime::from_index(zi);
            for n in 0..nodes {
                let exp = [
                    [e1[0][n], e1[1][n], e1[2][n], e1[3][n]],
                    [e2[0][n], e2[1][n], e2[2][n], e2[3][n]],
                ];
                let quad = ContinuationQuad::from_expectations(exp, psi1[n], psi2[n], dt);
                let game = build_stage_game(zeta, &quad, pp1, pp2);
                let slacks = matrix_game::ce_slacks(&game, &vs.gammas[t][zi][n]);
                report.record(t, zi * nodes + n, slacks, tol);
            }
        }
    }
    report
}

/// Switch-capped backward solution: `v1[t][b1][b2][regime][node]` is the
/// value when player i may still switch b_i times.
#[derive(Clone, Debug)]
pub struct CappedSolution {
    pub caps: (usize, usize),
    pub stages: usize,
    pub nodes: usize,
    pub v1: Vec<Vec<Vec<[Vec<f64>; 4]>>>,
    pub v2: Vec<Vec<Vec<[Vec<f64>; 4]>>>,
}

/// Solves the recursion with at most `caps.i` switches per player.
/// Within a stage game a blocked player is frozen on "stay" and exact
/// ties resolve toward staying; cell payoffs read the continuation layer
/// with the spent budget.
pub fn solve_capped(
    lat: &Lattice,
    law: &LawSpec,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
    caps: (usize, usize),
) -> Result<CappedSolution, Error> {
    law.validate()?;
    let stages = lat.mp.periods;
    let nodes = lat.node_count();
    let dt = lat.mp.dt;
    let laws = Regime::ALL.map(|z| law.resolve(z, pp1, pp2));
    let (psi1, psi2) = spread_fields(lat, pp1, pp2, cap);
    let (c1, c2) = caps;

    let zero4 = || [vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]];
    let layer = |_: usize| -> Vec<Vec<[Vec<f64>; 4]>> {
        (0..=c1).map(|_| (0..=c2).map(|_| zero4()).collect()).collect()
    };
    let mut v1: Vec<_> = (0..=stages).map(layer).collect();
    let mut v2: Vec<_> = (0..=stages).map(layer).collect();

    let mut e1: Vec<Vec<[Vec<f64>; 4]>> = layer(0);
    let mut e2: Vec<Vec<[Vec<f64>; 4]>> = layer(0);
    for t in (0..stages).rev() {
        for b1 in 0..=c1 {
            for b2 in 0..=c2 {
                for r in 0..4 {
                    lat.expect_into(r, &v1[t + 1][b1][b2][r], &mut e1[b1][b2][r]);
                    lat.expect_into(r, &v2[t + 1][b1][b2][r], &mut e2[b1][b2][r]);
                }
            }
        }
        for b1 in 0..=c1 {
            for b2 in 0..=c2 {
                for zi in 0..4 {
                    let zeta = Regime::from_index(zi);
                    let law_z = &laws[zi];
                    let free1 = b1 > 0;
                    let free2 = b2 > 0;
                    let cells: Vec<(f64, f64)> = (0..nodes)
                        .into_par_iter()
                        .map(|n| {
                            // Forbidden cells keep a harmless 0.0: the
                            // restricted selector never reads them.
                            let mut z1 = [[0.0; 2]; 2];
                            let mut z2 = [[0.0; 2]; 2];
                            for j in 0..2usize {
                                if j == 1 && !free1 {
                                    continue;
                                }
                                for k in 0..2usize {
                                    if k == 1 && !free2 {
                                        continue;
                                    }
                                    let next = zeta.apply_actions(j as u8, k as u8);
                                    let r = next.index();
                                    let (l1, l2) = (b1 - j, b2 - k);
                                    let flow1 = psi1[n] * dt * f64::from(next.zeta1);
                                    let flow2 = psi2[n] * dt * f64::from(next.zeta2);
                                    z1[j][k] = e1[l1][l2][r][n] + flow1
                                        - pp1.switch_cost(zeta.zeta1, next.zeta1);
                                    z2[j][k] = e2[l1][l2][r][n] + flow2
                                        - pp2.switch_cost(zeta.zeta2, next.zeta2);
                                }
                            }
                            let game = matrix_game::BimatrixGame { z1, z2 };
                            let sol =
                                matrix_game::select_ce_restricted(&game, law_z, free1, free2);
                            (sol.v1, sol.v2)
                        })
                        .collect();
                    for (n, (a, b)) in cells.into_iter().enumerate() {
                        v1[t][b1][b2][zi][n] = a;
                        v2[t][b1][b2][zi][n] = b;
                    }
                }
            }
        }
    }
    Ok(CappedSolution { caps, stages, nodes, v1, v2 })
}
