//! Regression Monte Carlo engine.
//!
//! Values are estimated from four clouds of simulated price paths, one
//! cloud per starting regime. Within a backward sweep the stage-t
//! continuation of candidate regime z is predicted by a least-squares
//! fit of realized cashflows against basis functions of the stage-t
//! states:
//!
//! ```text
//!   alpha_i(t, z) = argmin_a sum_n | theta_i^n(t+1, z) - a . B(p_t^n, x_t^(z,n)) |^2
//!   qhat_i(t, xi, z) = alpha_i(t, z) . B(p_t^n, x_t^(xi,n)) - K_i(xi_i -> z_i) + psi_i z_i dt
//! ```
//!
//! The four qhat values per player define the stage game at incoming
//! regime xi; the correlation law picks its equilibrium gamma, and the
//! realized cashflow theta_i^n(t, xi) is recomputed by replaying the
//! path forward from stage t under the freshly drawn stage-t action and
//! the already-fitted later-stage policies. Replays reuse the stored
//! per-path noise, so policy updates are compared under common random
//! numbers and results do not depend on the worker count. The whole
//! simulate-plus-sweep pass runs `outer_iters` times, each pass seeding
//! the next one's path clouds with the policy it just fitted; the value
//! estimate is the mean of theta_i(0, z) across paths.
//!
//! The continuation regression pairs stage-t states with stage-t+1
//! cashflows through the cloud's own transition kernel, so a candidate
//! action's first-period drift effect on x is borne by the anterior
//! profile rather than by the candidate. This is a property of the
//! scheme itself, distinct from the exact recursion the lattice engine
//! solves, and the two engines' outputs are compared in tests rather
//! than assumed equal.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Error;
use crate::market::{spread, step, MarketParams, MarketState, ProducerParams, Regime};
use crate::matrix_game::{
    select_ce, BimatrixGame, CorrelationLaw, EquilibriumSolution, GameKind, JointDistribution,
};
use crate::noise::NoiseStream;
use crate::stage_game::{build_stage_game, draw_signals, ContinuationQuad, LawSpec};

/// Relative singular-value cutoff below which a regression design is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// One feature of the state (p, x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisTerm {
    /// p^dp * x^dx; (0, 0) is the constant term.
    Monomial { dp: u32, dx: u32 },
    /// Positive part (cp * p + cx * x + c0)+.
    Hinge { cp: f64, cx: f64, c0: f64 },
}

impl BasisTerm {
    fn eval(&self, p: f64, x: f64) -> f64 {
        match *self {
            BasisTerm::Monomial { dp, dx } => p.powi(dp as i32) * x.powi(dx as i32),
            BasisTerm::Hinge { cp, cx, c0 } => (cp * p + cx * x + c0).max(0.0),
        }
    }
}

/// Ordered list of regression features.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    pub terms: Vec<BasisTerm>,
}

impl BasisSpec {
    /// Six-term default used throughout the reference study: a quadratic
    /// in x plus the positive parts of both producers' spreads.
    pub fn standard() -> Self {
        BasisSpec::parse("1, p, x, x^2, hinge(2,-1,-80), hinge(1,-2,-10)")
            .expect("builtin basis string parses")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates every feature at (p, x) into `out`.
    pub fn eval_into(&self, p: f64, x: f64, out: &mut [f64]) {
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = term.eval(p, x);
        }
    }

    /// Parses a comma-separated feature list. Each entry is either
    /// `hinge(cp,cx,c0)` or a product of `1`, `p`, `x`, `p^k`, `x^k`
    /// factors joined by `*` or whitespace.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut terms = Vec::new();
        for raw in split_top_level(text) {
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            terms.push(parse_term(item)?);
        }
        if terms.is_empty() {
            return Err(Error::config("basis must contain at least one term"));
        }
        Ok(BasisSpec { terms })
    }

    /// Canonical text form; `parse` of the result reproduces this basis.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            match *term {
                BasisTerm::Monomial { dp: 0, dx: 0 } => out.push('1'),
                BasisTerm::Monomial { dp, dx } => {
                    let mut parts = Vec::new();
                    match dp {
                        0 => {}
                        1 => parts.push("p".to_string()),
                        k => parts.push(format!("p^{k}")),
                    }
                    match dx {
                        0 => {}
                        1 => parts.push("x".to_string()),
                        k => parts.push(format!("x^{k}")),
                    }
                    out.push_str(&parts.join("*"));
                }
                BasisTerm::Hinge { cp, cx, c0 } => {
                    let _ = write!(out, "hinge({cp},{cx},{c0})");
                }
            }
        }
        out
    }
}

/// Splits on commas that are not inside parentheses.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                items.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    items.push(&text[start..]);
    items
}

fn parse_term(item: &str) -> Result<BasisTerm, Error> {
    if let Some(rest) = item.strip_prefix("hinge") {
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::config(format!("malformed hinge term `{item}`")))?;
        let coeffs: Vec<&str> = inner.split(',').map(str::trim).collect();
        if coeffs.len() != 3 {
            return Err(Error::config(format!(
                "hinge term `{item}` needs exactly three coefficients"
            )));
        }
        let parse = |s: &str| -> Result<f64, Error> {
            s.parse::<f64>()
                .map_err(|_| Error::config(format!("bad hinge coefficient `{s}` in `{item}`")))
        };
        return Ok(BasisTerm::Hinge {
            cp: parse(coeffs[0])?,
            cx: parse(coeffs[1])?,
            c0: parse(coeffs[2])?,
        });
    }
    let mut dp = 0u32;
    let mut dx = 0u32;
    for factor in item.split(|c: char| c == '*' || c.is_whitespace()) {
        let f = factor.trim();
        if f.is_empty() || f == "1" {
            continue;
        }
        let (var, exp) = match f.split_once('^') {
            Some((v, e)) => {
                let k: u32 = e
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad exponent in basis factor `{f}`")))?;
                (v.trim(), k)
            }
            None => (f, 1),
        };
        match var {
            "p" => dp += exp,
            "x" => dx += exp,
            _ => {
                return Err(Error::config(format!(
                    "unknown basis factor `{f}`; expected 1, p, x, powers, or hinge(..)"
                )))
            }
        }
    }
    Ok(BasisTerm::Monomial { dp, dx })
}

/// Result of one least-squares fit.
#[derive(Clone, Debug)]
pub struct StageFit {
    /// Coefficients in the original (unstandardized) feature space.
    pub alpha: Vec<f64>,
    /// sqrt(RSS / (N - r)), the residual scale of the fit.
    pub residual_se: f64,
    /// Numerical rank of the standardized design.
    pub rank: usize,
    /// True when the design was rank deficient and the minimum-norm
    /// solution was returned.
    pub flagged: bool,
}

/// Least-squares fit of `targets` against a row-major N x r feature
/// matrix. Features are standardized column-wise before the orthogonal
/// solve (centering only when a constant column is present to absorb
/// it), and coefficients are mapped back to the original scale.
pub fn fit_stage(features: &[f64], r: usize, targets: &[f64]) -> Result<StageFit, Error> {
    let reg = StageRegressor::new(features, r)?;
    if targets.len() != reg.n {
        return Err(Error::config(format!(
            "regression got {} targets for {} paths",
            targets.len(),
            reg.n
        )));
    }
    Ok(reg.solve(features, targets))
}

/// Shared factorization of one stage design, reused for both players'
/// target vectors.
struct StageRegressor {
    n: usize,
    r: usize,
    /// Column means (0 where no centering applies).
    mu: Vec<f64>,
    /// Column scales (1 where no scaling applies).
    scale: Vec<f64>,
    /// Index of the column absorbing the centering offsets, if any.
    const_col: Option<usize>,
    /// Value of that constant column (its coefficient absorbs means).
    const_val: f64,
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rank: usize,
    flagged: bool,
}

impl StageRegressor {
    fn new(features: &[f64], r: usize) -> Result<Self, Error> {
        if r == 0 || features.len() % r != 0 {
            return Err(Error::config("feature matrix shape does not match basis size"));
        }
        let n = features.len() / r;
        if n < r {
            return Err(Error::config(format!(
                "regression needs at least {r} paths for {r} basis functions, got {n}"
            )));
        }
        let mut mu = vec![0.0; r];
        let mut scale = vec![1.0; r];
        let mut lo = vec![f64::INFINITY; r];
        let mut hi = vec![f64::NEG_INFINITY; r];
        for row in features.chunks_exact(r) {
            for (j, &v) in row.iter().enumerate() {
                mu[j] += v;
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for m in &mut mu {
            *m /= n as f64;
        }
        // A constant nonzero column can absorb the centering offsets of
        // the remaining columns; without one, centering would bias the
        // fit, so only scaling is applied.
        let const_col = (0..r).find(|&j| lo[j] == hi[j] && lo[j] != 0.0);
        let mut flagged = false;
        let mut std = vec![0.0; r];
        for row in features.chunks_exact(r) {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mu[j];
                std[j] += d * d;
            }
        }
        for j in 0..r {
            std[j] = (std[j] / n as f64).sqrt();
            if Some(j) == const_col {
                continue;
            }
            if std[j] > 0.0 {
                scale[j] = std[j];
            } else {
                // Degenerate column left unscaled; the rank check below
                // reports the collinearity.
                flagged = true;
            }
        }
        let center = const_col.is_some();
        let mut m = DMatrix::<f64>::zeros(n, r);
        for (i, row) in features.chunks_exact(r).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let centered = if center && Some(j) != const_col { v - mu[j] } else { v };
                m[(i, j)] = centered / scale[j];
            }
        }
        let svd = m.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cut = RANK_TOL * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        if rank < r {
            flagged = true;
        }
        Ok(StageRegressor {
            n,
            r,
            mu,
            scale,
            const_col,
            const_val: const_col.map_or(1.0, |j| lo[j]),
            svd,
            rank,
            flagged,
        })
    }

    fn solve(&self, features: &[f64], targets: &[f64]) -> StageFit {
        let y = DVector::from_column_slice(targets);
        let smax = self.svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let beta = self
            .svd
            .solve(&y, RANK_TOL * smax)
            .expect("svd computed with both factors");
        // Map standardized coefficients back: alpha_j = beta_j / s_j and
        // the constant column's coefficient absorbs the centering.
        let mut alpha = vec![0.0; self.r];
        let mut offset = 0.0;
        for j in 0..self.r {
            if Some(j) == self.const_col {
                continue;
            }
            alpha[j] = beta[j] / self.scale[j];
            if self.const_col.is_some() {
                offset += alpha[j] * self.mu[j];
            }
        }
        if let Some(c) = self.const_col {
            alpha[c] = (beta[c] - offset * self.const_val) / self.const_val;
        }
        let mut rss = 0.0;
        for (row, &t) in features.chunks_exact(self.r).zip(targets) {
            let pred: f64 = row.iter().zip(&alpha).map(|(b, a)| a * b).sum();
            let e = t - pred;
            rss += e * e;
        }
        let dof = (self.n.saturating_sub(self.r)).max(1) as f64;
        StageFit {
            alpha,
            residual_se: (rss / dof).sqrt(),
            rank: self.rank,
            flagged: self.flagged,
        }
    }
}

/// A rank-deficient fit observed during a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegressionFlag {
    pub stage: usize,
    pub regime: usize,
    pub rank: usize,
}

/// Fitted continuation coefficients for every (player, stage, regime).
#[derive(Clone, Debug)]
pub struct RegressionModel {
    pub stages: usize,
    pub width: usize,
    /// alpha[player][stage][regime] is a length-`width` vector.
    pub alpha: [Vec<[Vec<f64>; 4]>; 2],
    /// Residual scale of each fit, same indexing.
    pub residual_se: [Vec<[f64; 4]>; 2],
    pub flags: Vec<RegressionFlag>,
}

impl RegressionModel {
    fn zeros(stages: usize, width: usize) -> Self {
        let empty: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; width]);
        RegressionModel {
            stages,
            width,
            alpha: std::array::from_fn(|_| vec![empty.clone(); stages]),
            residual_se: std::array::from_fn(|_| vec![[0.0; 4]; stages]),
            flags: Vec::new(),
        }
    }

    /// Predicted continuation for `player` of entering stage `t+1` in
    /// regime `regime`, given basis values at the stage-t state.
    pub fn predict(&self, player: usize, t: usize, regime: usize, basis_vals: &[f64]) -> f64 {
        self.alpha[player][t][regime]
            .iter()
            .zip(basis_vals)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Largest residual scale across stages and regimes per player.
    pub fn max_residual_se(&self) -> [f64; 2] {
        let mut out = [0.0f64; 2];
        for i in 0..2 {
            for t in 0..self.stages {
                for z in 0..4 {
                    out[i] = out[i].max(self.residual_se[i][t][z]);
                }
            }
        }
        out
    }
}

/// Monte Carlo value estimate per (player, starting regime index).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueEstimate {
    pub mean: [[f64; 4]; 2],
    pub se: [[f64; 4]; 2],
}

/// One audited stage decision: the fitted game, the selected gamma, and
/// the state it was solved at. Kept for the leading paths so rationality
/// of the realized policy can be re-checked after the fact.
#[derive(Clone, Debug)]
pub struct StageAudit {
    pub stage: usize,
    pub path: usize,
    pub regime: usize,
    pub p: f64,
    pub x: f64,
    pub game: BimatrixGame,
    pub gamma: JointDistribution,
    pub kind: GameKind,
}

/// Anterior profile used to simulate the first-iteration clouds.
///
/// `Hold` keeps every cloud in its starting regime, so the regression
/// pairs of cloud zeta are linked by exactly the transition kernel of
/// action zeta; the predicted continuations then price each candidate
/// action's own impact drift. `Myopic` runs each producer exactly when
/// its current spread is positive, which concentrates the design points
/// near the active region but mixes transition kernels across actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnteriorPolicy {
    Hold,
    Myopic,
}

impl AnteriorPolicy {
    pub fn parse(name: &str) -> Result<Self, Error> {
        match name.trim() {
            "hold" => Ok(AnteriorPolicy::Hold),
            "myopic" => Ok(AnteriorPolicy::Myopic),
            other => Err(Error::config(format!(
                "unknown anterior policy `{other}` (expected hold or myopic)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnteriorPolicy::Hold => "hold",
            AnteriorPolicy::Myopic => "myopic",
        }
    }
}

/// Tuning knobs of one solve.
#[derive(Clone, Copy, Debug)]
pub struct LsmcParams {
    pub paths: usize,
    pub outer_iters: usize,
    pub seed: u64,
    /// Leading paths whose stage decisions are retained for audits.
    pub audit_paths: usize,
    /// First-iteration cloud profile; later iterations follow the policy
    /// fitted by the previous pass.
    pub anterior: AnteriorPolicy,
}

impl Default for LsmcParams {
    fn default() -> Self {
        LsmcParams {
            paths: 40_000,
            outer_iters: 3,
            seed: 1,
            audit_paths: 512,
            anterior: AnteriorPolicy::Myopic,
        }
    }
}

/// Output of `solve_lsmc`.
#[derive(Clone, Debug)]
pub struct LsmcSolution {
    pub model: RegressionModel,
    pub estimate: ValueEstimate,
    /// Value estimates of every outer iteration, in order.
    pub iterations: Vec<ValueEstimate>,
    /// Whether the last two iterations agree within twice the standard
    /// error (or keep shrinking), per player and starting regime.
    pub stabilized: bool,
    pub audit: Vec<StageAudit>,
}

/// Anterior strategy profile driving a cloud simulation.
enum Anterior<'a> {
    /// Stay in the cloud's starting regime forever.
    Hold,
    /// Run exactly when the current spread is positive.
    Myopic,
    /// Play the stage games induced by previously fitted coefficients.
    Fitted(&'a RegressionModel),
}

/// Immutable per-solve context shared by simulation and sweeps.
struct Engine<'a> {
    mp: &'a MarketParams,
    pp1: &'a ProducerParams,
    pp2: &'a ProducerParams,
    cap: f64,
    basis: &'a BasisSpec,
    laws: [CorrelationLaw; 4],
    seed: u64,
}

impl<'a> Engine<'a> {
    fn new(
        mp: &'a MarketParams,
        pp1: &'a ProducerParams,
        pp2: &'a ProducerParams,
        cap: f64,
        law: &LawSpec,
        basis: &'a BasisSpec,
        seed: u64,
    ) -> Result<Self, Error> {
        mp.validate()?;
        pp1.validate()?;
        pp2.validate()?;
        law.validate()?;
        if basis.is_empty() {
            return Err(Error::config("basis must contain at least one term"));
        }
        let laws = std::array::from_fn(|z| law.resolve(Regime::from_index(z), pp1, pp2));
        Ok(Engine { mp, pp1, pp2, cap, basis, laws, seed })
    }

    fn periods(&self) -> usize {
        self.mp.periods
    }

    /// Solves the fitted stage game at one state; `bbuf` holds the basis
    /// evaluation afterwards.
    fn stage_decision(
        &self,
        model: &RegressionModel,
        t: usize,
        p: f64,
        x: f64,
        inc: Regime,
        bbuf: &mut [f64],
    ) -> (BimatrixGame, EquilibriumSolution) {
        self.basis.eval_into(p, x, bbuf);
        let mut exp = [[0.0; 4]; 2];
        for (i, row) in exp.iter_mut().enumerate() {
            for (z, slot) in row.iter_mut().enumerate() {
                *slot = model.predict(i, t, z, bbuf);
            }
        }
        let psi1 = spread(self.pp1, p, x, self.cap);
        let psi2 = spread(self.pp2, p, x, self.cap);
        let quad = ContinuationQuad::from_expectations(exp, psi1, psi2, self.mp.dt);
        let game = build_stage_game(inc, &quad, self.pp1, self.pp2);
        let sol = select_ce(&game, &self.laws[inc.index()]);
        (game, sol)
    }

    /// Cashflow increment of player `i` for moving from `from` to `to`
    /// at spread `psi`.
    fn flow(&self, i: usize, from: u8, to: u8, psi: f64) -> f64 {
        let pp = if i == 0 { self.pp1 } else { self.pp2 };
        -pp.switch_cost(from, to) + psi * f64::from(to) * self.mp.dt
    }

    /// Next regime under the anterior profile at one stage.
    fn anterior_regime(
        &self,
        ant: &Anterior,
        t: usize,
        p: f64,
        x: f64,
        inc: Regime,
        signal: f64,
        bbuf: &mut [f64],
    ) -> Regime {
        match ant {
            Anterior::Hold => inc,
            Anterior::Myopic => {
                let on1 = u8::from(spread(self.pp1, p, x, self.cap) > 0.0);
                let on2 = u8::from(spread(self.pp2, p, x, self.cap) > 0.0);
                Regime::new(on1, on2)
            }
            Anterior::Fitted(model) => {
                let (_, sol) = self.stage_decision(model, t, p, x, inc, bbuf);
                let sig = draw_signals(&sol.gamma, signal);
                inc.apply_actions(sig.mu1, sig.mu2)
            }
        }
    }

    /// Simulates one cloud of paths started in `label`, writing states in
    /// path-major layout (stage varies fastest). `p_out` is filled only
    /// when given; the p dynamics do not depend on the regime, so every
    /// cloud reproduces the same p paths from the shared noise.
    fn simulate_cloud(
        &self,
        label: Regime,
        ant: &Anterior,
        n_paths: usize,
        p_out: Option<&mut [f64]>,
        x_out: &mut [f64],
    ) {
        let t_len = self.periods() + 1;
        let r = self.basis.len();
        let seed = self.seed;
        // Collect per path, then scatter; keeps writes ordered and the
        // parallel map free of shared mutable state.
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
            .into_par_iter()
            .map(|n| {
                let mut ns = NoiseStream::new(seed);
                let mut bbuf = vec![0.0; r];
                let mut ps = Vec::with_capacity(t_len);
                let mut xs = Vec::with_capacity(t_len);
                let mut state = MarketState { t: 0, p: self.mp.p0, x: self.mp.x0 };
                let mut inc = label;
                for t in 0..self.periods() {
                    ps.push(state.p);
                    xs.push(state.x);
                    let draws = ns.stage_draws(n as u64, t);
                    let next =
                        self.anterior_regime(ant, t, state.p, state.x, inc, draws.signal, &mut bbuf);
                    state = step(&state, next, self.mp, self.pp1, self.pp2, draws.eps_p, draws.eps_perp);
                    inc = next;
                }
                ps.push(state.p);
                xs.push(state.x);
                (ps, xs)
            })
            .collect();
        if let Some(p_slice) = p_out {
            for (n, (ps, _)) in rows.iter().enumerate() {
                p_slice[n * t_len..(n + 1) * t_len].copy_from_slice(ps);
            }
        }
        for (n, (_, xs)) in rows.iter().enumerate() {
            x_out[n * t_len..(n + 1) * t_len].copy_from_slice(xs);
        }
    }

    /// Replays one path from stage `t` with incoming regime `inc` and
    /// state (p, x), deciding each stage from the fitted model and the
    /// path's stored noise. Returns both players' cashflows over [t, T).
    fn replay(
        &self,
        model: &RegressionModel,
        n: usize,
        t: usize,
        p: f64,
        x: f64,
        inc: Regime,
        ns: &mut NoiseStream,
        bbuf: &mut [f64],
    ) -> [f64; 2] {
        let mut theta = [0.0; 2];
        let mut state = MarketState { t, p, x };
        let mut cur = inc;
        for s in t..self.periods() {
            let (_, sol) = self.stage_decision(model, s, state.p, state.x, cur, bbuf);
            let draws = ns.stage_draws(n as u64, s);
            let sig = draw_signals(&sol.gamma, draws.signal);
            let next = cur.apply_actions(sig.mu1, sig.mu2);
            let psi1 = spread(self.pp1, state.p, state.x, self.cap);
            let psi2 = spread(self.pp2, state.p, state.x, self.cap);
            theta[0] += self.flow(0, cur.zeta1, next.zeta1, psi1);
            theta[1] += self.flow(1, cur.zeta2, next.zeta2, psi2);
            state = step(&state, next, self.mp, self.pp1, self.pp2, draws.eps_p, draws.eps_perp);
            cur = next;
        }
        theta
    }
}

/// Path clouds of one outer iteration, path-major: index `n * (T+1) + t`.
struct Clouds {
    p: Vec<f64>,
    x: [Vec<f64>; 4],
}

/// Estimates correlated-equilibrium values by the cloud-regression
/// scheme described in the module docs.
pub fn solve_lsmc(
    mp: &MarketParams,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
    law: &LawSpec,
    basis: &BasisSpec,
    prm: &LsmcParams,
) -> Result<LsmcSolution, Error> {
    let eng = Engine::new(mp, pp1, pp2, cap, law, basis, prm.seed)?;
    let r = basis.len();
    let n_paths = prm.paths;
    if n_paths < r {
        return Err(Error::config(format!(
            "need at least {r} paths for {r} basis functions, got {n_paths}"
        )));
    }
    if prm.outer_iters == 0 {
        return Err(Error::config("outer_iters must be at least 1"));
    }
    let t_len = eng.periods() + 1;
    let mut iterations = Vec::with_capacity(prm.outer_iters);
    let mut model: Option<RegressionModel> = None;
    let mut audit = Vec::new();
    for iter in 0..prm.outer_iters {
        let mut clouds = Clouds {
            p: vec![0.0; n_paths * t_len],
            x: std::array::from_fn(|_| vec![0.0; n_paths * t_len]),
        };
        {
            let ant = match &model {
                None => match prm.anterior {
                    AnteriorPolicy::Hold => Anterior::Hold,
                    AnteriorPolicy::Myopic => Anterior::Myopic,
                },
                Some(m) => Anterior::Fitted(m),
            };
            let (x0, rest) = clouds.x.split_first_mut().expect("four clouds");
            eng.simulate_cloud(Regime::from_index(0), &ant, n_paths, Some(&mut clouds.p), x0);
            for (z, xz) in rest.iter_mut().enumerate() {
                eng.simulate_cloud(Regime::from_index(z + 1), &ant, n_paths, None, xz);
            }
        }
        let last = iter + 1 == prm.outer_iters;
        let (new_model, estimate, mut sweep_audit) =
            backward_sweep(&eng, &clouds, n_paths, if last { prm.audit_paths } else { 0 })?;
        iterations.push(estimate);
        model = Some(new_model);
        if last {
            audit = std::mem::take(&mut sweep_audit);
        }
    }
    let estimate = *iterations.last().expect("at least one iteration");
    let stabilized = check_stabilized(&iterations);
    Ok(LsmcSolution {
        model: model.expect("at least one iteration"),
        estimate,
        iterations,
        stabilized,
        audit,
    })
}

/// Last two iterations agree within 2 SE, or the jump kept shrinking.
fn check_stabilized(iterations: &[ValueEstimate]) -> bool {
    let k = iterations.len();
    if k < 2 {
        return true;
    }
    let diff = |a: &ValueEstimate, b: &ValueEstimate, i: usize, z: usize| {
        (a.mean[i][z] - b.mean[i][z]).abs()
    };
    let mut ok = true;
    for i in 0..2 {
        for z in 0..4 {
            let d_last = diff(&iterations[k - 1], &iterations[k - 2], i, z);
            let within = d_last <= 2.0 * iterations[k - 1].se[i][z];
            let shrinking =
                k >= 3 && d_last <= diff(&iterations[k - 2], &iterations[k - 3], i, z);
            ok &= within || shrinking;
        }
    }
    ok
}

/// One backward pass over all stages: fits the per-(stage, regime)
/// regressions and recomputes realized cashflows under the new policy.
fn backward_sweep(
    eng: &Engine,
    clouds: &Clouds,
    n_paths: usize,
    audit_paths: usize,
) -> Result<(RegressionModel, ValueEstimate, Vec<StageAudit>), Error> {
    let periods = eng.periods();
    let t_len = periods + 1;
    let r = eng.basis.len();
    let mut model = RegressionModel::zeros(periods, r);
    let mut theta: [[Vec<f64>; 4]; 2] =
        std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; n_paths]));
    let mut design = vec![0.0; n_paths * r];
    let mut audit = Vec::new();
    for t in (0..periods).rev() {
        for z in 0..4 {
            for n in 0..n_paths {
                let p = clouds.p[n * t_len + t];
                let x = clouds.x[z][n * t_len + t];
                eng.basis.eval_into(p, x, &mut design[n * r..(n + 1) * r]);
            }
            let reg = StageRegressor::new(&design, r)?;
            for i in 0..2 {
                let fit = reg.solve(&design, &theta[i][z]);
                model.residual_se[i][t][z] = fit.residual_se;
                if fit.flagged && i == 0 {
                    model.flags.push(RegressionFlag { stage: t, regime: z, rank: fit.rank });
                }
                model.alpha[i][t][z] = fit.alpha;
            }
        }
        for xi in 0..4 {
            let inc = Regime::from_index(xi);
            let rows: Vec<([f64; 2], Option<StageAudit>)> = (0..n_paths)
                .into_par_iter()
                .map(|n| {
                    let mut ns = NoiseStream::new(eng.seed);
                    let mut bbuf = vec![0.0; r];
                    let p = clouds.p[n * t_len + t];
                    let x = clouds.x[xi][n * t_len + t];
                    let (game, sol) = eng.stage_decision(&model, t, p, x, inc, &mut bbuf);
                    let draws = ns.stage_draws(n as u64, t);
                    let sig = draw_signals(&sol.gamma, draws.signal);
                    let next = inc.apply_actions(sig.mu1, sig.mu2);
                    let psi1 = spread(eng.pp1, p, x, eng.cap);
                    let psi2 = spread(eng.pp2, p, x, eng.cap);
                    let mut th = [
                        eng.flow(0, inc.zeta1, next.zeta1, psi1),
                        eng.flow(1, inc.zeta2, next.zeta2, psi2),
                    ];
                    let state = MarketState { t, p, x };
                    let stepped =
                        step(&state, next, eng.mp, eng.pp1, eng.pp2, draws.eps_p, draws.eps_perp);
                    let tail = eng.replay(
                        &model,
                        n,
                        t + 1,
                        stepped.p,
                        stepped.x,
                        next,
                        &mut ns,
                        &mut bbuf,
                    );
                    th[0] += tail[0];
                    th[1] += tail[1];
                    let entry = (n < audit_paths).then(|| StageAudit {
                        stage: t,
                        path: n,
                        regime: xi,
                        p,
                        x,
                        game,
                        gamma: sol.gamma,
                        kind: sol.kind,
                    });
                    (th, entry)
                })
                .collect();
            for (n, (th, entry)) in rows.into_iter().enumerate() {
                if !(th[0].is_finite() && th[1].is_finite()) {
                    return Err(Error::numeric(format!(
                        "non-finite cashflow at stage {t}, path {n}, regime {xi}"
                    )));
                }
                theta[0][xi][n] = th[0];
                theta[1][xi][n] = th[1];
                if let Some(e) = entry {
                    audit.push(e);
                }
            }
        }
    }
    let mut estimate = ValueEstimate { mean: [[0.0; 4]; 2], se: [[0.0; 4]; 2] };
    for i in 0..2 {
        for z in 0..4 {
            let (m, se) = mean_se(&theta[i][z]);
            estimate.mean[i][z] = m;
            estimate.se[i][z] = se;
        }
    }
    Ok((model, estimate, audit))
}

/// Sample mean and its standard error (sample std over sqrt N).
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row of a simulated equilibrium path: the state at the start of
/// the stage, the regime implemented over (t, t+1], the running spreads
/// and each player's cumulative profit after the stage settles.
#[derive(Clone, Copy, Debug)]
pub struct PathStep {
    pub t: usize,
    pub p: f64,
    pub x: f64,
    pub regime: Regime,
    pub spread1: f64,
    pub spread2: f64,
    pub pnl1: f64,
    pub pnl2: f64,
}

/// A full simulated path with its terminal cashflows.
#[derive(Clone, Debug)]
pub struct PathRecord {
    pub steps: Vec<PathStep>,
    pub theta: [f64; 2],
}

/// Simulates one realized cashflow path from `start` under the fitted
/// model, drawing noise from stream `path` of `seed`. The final
/// cumulative profits equal `theta` by construction; the terminal row
/// repeats the last implemented regime at the horizon state.
#[allow(clippy::too_many_arguments)]
pub fn simulate_cashflow_path(
    mp: &MarketParams,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
    law: &LawSpec,
    basis: &BasisSpec,
    model: &RegressionModel,
    start: Regime,
    seed: u64,
    path: u64,
) -> Result<PathRecord, Error> {
    let eng = Engine::new(mp, pp1, pp2, cap, law, basis, seed)?;
    if model.stages != eng.periods() || model.width != basis.len() {
        return Err(Error::config(
            "regression model shape does not match the market horizon or basis",
        ));
    }
    let mut ns = NoiseStream::new(seed);
    let mut bbuf = vec![0.0; basis.len()];
    let mut state = MarketState { t: 0, p: mp.p0, x: mp.x0 };
    let mut inc = start;
    let mut pnl = [0.0; 2];
    let mut steps = Vec::with_capacity(eng.periods() + 1);
    for t in 0..eng.periods() {
        let (_, sol) = eng.stage_decision(model, t, state.p, state.x, inc, &mut bbuf);
        let draws = ns.stage_draws(path, t);
        let sig = draw_signals(&sol.gamma, draws.signal);
        let next = inc.apply_actions(sig.mu1, sig.mu2);
        let psi1 = spread(pp1, state.p, state.x, cap);
        let psi2 = spread(pp2, state.p, state.x, cap);
        pnl[0] += eng.flow(0, inc.zeta1, next.zeta1, psi1);
        pnl[1] += eng.flow(1, inc.zeta2, next.zeta2, psi2);
        steps.push(PathStep {
            t,
            p: state.p,
            x: state.x,
            regime: next,
            spread1: psi1,
            spread2: psi2,
            pnl1: pnl[0],
            pnl2: pnl[1],
        });
        state = step(&state, next, mp, pp1, pp2, draws.eps_p, draws.eps_perp);
        inc = next;
    }
    steps.push(PathStep {
        t: eng.periods(),
        p: state.p,
        x: state.x,
        regime: inc,
        spread1: spread(pp1, state.p, state.x, cap),
        spread2: spread(pp2, state.p, state.x, cap),
        pnl1: pnl[0],
        pnl2: pnl[1],
    });
    Ok(PathRecord { steps, theta: pnl })
}
