//! Stage-game assembly and the stopping-game recursion.
//!
//! At every decision stage the switching game reduces to a 2x2 bimatrix
//! game whose payoffs are continuation values: action pair (j, k) moves
//! the regime from ζ to ζ' = ζ xor (j, k), pays player i the continuation
//! Y_i(ζ') and charges their switch cost if they moved. Selecting a
//! correlated equilibrium of that game and taking its value pair is one
//! backward step of the dynamic program:
//!
//! ```text
//! V_i(t, ζ) = Σ_{j,k} γ_{jk} · [ Y_i(t, ζ xor (j,k)) - K_i·1{i moved} ]
//! Y_i(t, ζ') = E^{ζ'}[ V_i(t+1, ζ') | F_t ] + ψ_i(P_t, X_t)·ζ'_i·dt
//! ```
//!
//! The same machinery solves classic two-player stopping games: the
//! continue/continue cell earns a running reward plus the expected
//! next-stage value, while any stop ends the game with the corresponding
//! terminal payoff. This module also houses the signal machinery that
//! turns a joint distribution into private recommendations and the
//! randomized stopping rule driven by a uniform stream.

use crate::error::Error;
use crate::market::{ProducerParams, Regime};
use crate::matrix_game::{
    self, BimatrixGame, CorrelationLaw, GameKind, JointDistribution,
};

/// Continuation values of both players for each candidate next regime at
/// one node: `y[i][r]` is E^{r}[V_i(t+1) | state] plus the stage flow
/// collected when regime `r` keeps producer i running.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuationQuad {
    pub y: [[f64; 4]; 2],
}

impl ContinuationQuad {
    /// Combines raw conditional expectations with the stage flow at the
    /// current prices; `psi1` and `psi2` are the capped per-year spreads.
    pub fn from_expectations(exp: [[f64; 4]; 2], psi1: f64, psi2: f64, dt: f64) -> Self {
        let mut y = exp;
        for r in Regime::ALL {
            if r.zeta1 == 1 {
                y[0][r.index()] += psi1 * dt;
            }
            if r.zeta2 == 1 {
                y[1][r.index()] += psi2 * dt;
            }
        }
        Self { y }
    }
}

/// Builds the stage 2x2 game at one node. Action 1 switches the player's
/// own state; cell (j, k) pays player i the continuation value of the
/// resulting regime minus their switch cost if they moved.
pub fn build_stage_game(
    zeta: Regime,
    cont: &ContinuationQuad,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
) -> BimatrixGame {
    let mut z1 = [[0.0; 2]; 2];
    let mut z2 = [[0.0; 2]; 2];
    for j in 0..2u8 {
        for k in 0..2u8 {
            let next = zeta.apply_actions(j, k);
            let r = next.index();
            z1[j as usize][k as usize] =
                cont.y[0][r] - pp1.switch_cost(zeta.zeta1, next.zeta1);
            z2[j as usize][k as usize] =
                cont.y[1][r] - pp2.switch_cost(zeta.zeta2, next.zeta2);
        }
    }
    BimatrixGame { z1, z2 }
}

/// Emission weights for the green law at an incoming regime: entry (j, k)
/// is the allowance consumption rate of the regime that action pair leads
/// to, so minimizing their γ-expectation favors low-emission regimes.
pub fn green_weights(zeta: Regime, pp1: &ProducerParams, pp2: &ProducerParams) -> [f64; 4] {
    let mut w = [0.0; 4];
    for j in 0..2u8 {
        for k in 0..2u8 {
            let next = zeta.apply_actions(j, k);
            w[(2 * j + k) as usize] = pp1.allowance_rate * f64::from(next.zeta1)
                + pp2.allowance_rate * f64::from(next.zeta2);
        }
    }
    w
}

/// Equilibrium-selection rule as named in a configuration, before it is
/// bound to a stage. The green rule is the only one whose concrete
/// objective depends on the incoming regime: its weights are the
/// emissions of the regimes the four action pairs lead to.
#[derive(Clone, Debug, PartialEq)]
pub enum LawSpec {
    Utilitarian { w1: f64, w2: f64 },
    Egalitarian,
    /// Favored player, 1 or 2.
    Preferential(u8),
    Green,
    /// Lexicographic cell order; selection is left to the tiebreak.
    LexFirst,
}

impl LawSpec {
    /// Stable name used in reports and command lines.
    pub fn name(&self) -> &'static str {
        match self {
            LawSpec::Utilitarian { .. } => "utilitarian",
            LawSpec::Egalitarian => "egalitarian",
            LawSpec::Preferential(1) => "preferential-1",
            LawSpec::Preferential(_) => "preferential-2",
            LawSpec::Green => "green",
            LawSpec::LexFirst => "lex-first",
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match self {
            LawSpec::Utilitarian { w1, w2 } => {
                if !(w1.is_finite() && w2.is_finite() && *w1 >= 0.0 && *w2 >= 0.0) {
                    return Err(Error::config("utilitarian weights must be finite and >= 0"));
                }
                if *w1 == 0.0 && *w2 == 0.0 {
                    return Err(Error::config("utilitarian weights cannot both be zero"));
                }
            }
            LawSpec::Preferential(p) if !(*p == 1 || *p == 2) => {
                return Err(Error::config("preferential law takes player 1 or 2"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Binds the rule to an incoming regime.
    pub fn resolve(
        &self,
        zeta: Regime,
        pp1: &ProducerParams,
        pp2: &ProducerParams,
    ) -> CorrelationLaw {
        match self {
            LawSpec::Utilitarian { w1, w2 } => CorrelationLaw::Utilitarian { w1: *w1, w2: *w2 },
            LawSpec::Egalitarian => CorrelationLaw::Egalitarian,
            LawSpec::Preferential(p) => CorrelationLaw::Preferential(*p),
            LawSpec::Green => CorrelationLaw::Green { weights: green_weights(zeta, pp1, pp2) },
            LawSpec::LexFirst => CorrelationLaw::LexFirst,
        }
    }
}

/// Finite-state transition kernel used by the stopping-game recursion.
pub trait MarkovChain {
    fn node_count(&self) -> usize;
    /// Writes E[values(next) | node] for every node into `out`.
    fn expectation(&self, values: &[f64], out: &mut [f64]);
}

/// Dense row-stochastic transition matrix, sized for small instances.
#[derive(Clone, Debug)]
pub struct DenseChain {
    rows: Vec<Vec<f64>>,
}

impl DenseChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, Error> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::config("transition matrix must be nonempty"));
        }
        for row in &rows {
            if row.len() != n {
                return Err(Error::config("transition matrix must be square"));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::config("transition probabilities must be nonnegative"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "transition row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { rows })
    }
}

impl MarkovChain for DenseChain {
    fn node_count(&self) -> usize {
        self.rows.len()
    }

    fn expectation(&self, values: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().zip(values).map(|(p, v)| p * v).sum();
        }
    }
}

/// Adapted payoff streams of a two-player stopping game.
///
/// `z1[a][b][t][n]` is player 1's payoff at stage t, node n, when they
/// take action a and player 2 takes action b (1 = stop); `z2[a][b]` reads
/// the same way from player 2's seat. The (0, 0) entries are running
/// rewards added to the continuation value while both players stay in; at
/// the horizon the game is forced into (1, 1).
#[derive(Clone, Debug)]
pub struct StoppingPayoffs {
    pub z1: [[Vec<Vec<f64>>; 2]; 2],
    pub z2: [[Vec<Vec<f64>>; 2]; 2],
}

impl StoppingPayoffs {
    /// Number of decision stages; payoff sequences carry horizon + 1
    /// entries so the terminal stage has data.
    pub fn horizon(&self) -> usize {
        self.z1[0][0].len().saturating_sub(1)
    }

    fn validate(&self, nodes: usize) -> Result<(), Error> {
        let stages = self.z1[0][0].len();
        if stages < 2 {
            return Err(Error::config("stopping game horizon must be at least 1"));
        }
        for quad in [&self.z1, &self.z2] {
            for seq in quad.iter().flatten() {
                if seq.len() != stages {
                    return Err(Error::config("payoff sequences must share one horizon"));
                }
                for row in seq {
                    if row.len() != nodes {
                        return Err(Error::config("payoff rows must match the chain size"));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numeric("stopping payoffs must be finite"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Backward solution of a stopping game: values for stages 0..=T and the
/// selected joint distributions for stages 0..T.
#[derive(Clone, Debug)]
pub struct StoppingSolution {
    pub v1: Vec<Vec<f64>>,
    pub v2: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<JointDistribution>>,
    pub kinds: Vec<Vec<GameKind>>,
}

/// Solves the stopping game backward under the given selection law.
///
/// Terminal condition V_i(T) = z_i(1,1) at the horizon; earlier stages
/// build the 2x2 game with continue/continue payoff E[V(t+1)] + z(0,0)
/// and stop cells taken from the adapted payoffs, then select a
/// correlated equilibrium and record its value pair.
pub fn stopping_game_values(
    chain: &impl MarkovChain,
    z: &StoppingPayoffs,
    law: &CorrelationLaw,
) -> Result<StoppingSolution, Error> {
    let nodes = chain.node_count();
    z.validate(nodes)?;
    law.validate()?;
    let horizon = z.horizon();

    let mut v1 = vec![vec![0.0; nodes]; horizon + 1];
    let mut v2 = vec![vec![0.0; nodes]; horizon + 1];
    let mut gammas = vec![vec![JointDistribution::uniform(); nodes]; horizon];
    let mut kinds = vec![vec![GameKind::Degenerate; nodes]; horizon];

    v1[horizon].clone_from(&z.z1[1][1][horizon]);
    v2[horizon].clone_from(&z.z2[1][1][horizon]);

    let mut e1 = vec![0.0; nodes];
    let mut e2 = vec![0.0; nodes];
    for t in (0..horizon).rev() {
        chain.expectation(&v1[t + 1], &mut e1);
        chain.expectation(&v2[t + 1], &mut e2);
        for n in 0..nodes {
            let game = stage_of_stopping(z, t, n, e1[n], e2[n]);
            let sol = matrix_game::select_ce(&game, law);
            v1[t][n] = sol.v1;
            v2[t][n] = sol.v2;
            gammas[t][n] = sol.gamma;
            kinds[t][n] = sol.kind;
        }
    }
    Ok(StoppingSolution { v1, v2, gammas, kinds })
}

// Assembles the one-shot game of a stopping stage. Rows are player 1's
// actions; player 2's payoff at cell (j, k) reads their quad as (own =
// k, other = j).
fn stage_of_stopping(z: &StoppingPayoffs, t: usize, n: usize, e1: f64, e2: f64) -> BimatrixGame {
    BimatrixGame {
        z1: [
            [e1 + z.z1[0][0][t][n], z.z1[0][1][t][n]],
            [z.z1[1][0][t][n], z.z1[1][1][t][n]],
        ],
        z2: [
            [e2 + z.z2[0][0][t][n], z.z2[1][0][t][n]],
            [z.z2[0][1][t][n], z.z2[1][1][t][n]],
        ],
    }
}

/// One failed incentive constraint found by the rationality audit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalityViolation {
    pub stage: usize,
    pub node: usize,
    /// Constraint index in [`matrix_game::ce_slacks`] order.
    pub constraint: usize,
    pub slack: f64,
}

/// Outcome of re-checking every stage/node incentive constraint.
#[derive(Clone, Debug)]
pub struct RationalityReport {
    pub checked: usize,
    pub min_slack: f64,
    pub violations: Vec<RationalityViolation>,
}

impl RationalityReport {
    pub fn new() -> Self {
        Self { checked: 0, min_slack: f64::INFINITY, violations: Vec::new() }
    }

    /// Folds one stage game's slacks at the recorded γ into the report.
    pub fn record(&mut self, stage: usize, node: usize, slacks: [f64; 4], tol: f64) {
        for (constraint, slack) in slacks.into_iter().enumerate() {
            self.checked += 1;
            self.min_slack = self.min_slack.min(slack);
            if slack < -tol {
                self.violations.push(RationalityViolation { stage, node, constraint, slack });
            }
        }
    }

    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Default for RationalityReport {
    fn default() -> Self {
        Self::new()
    }
}

/// Re-derives every stage game of a stopping solution from the stored
/// next-stage values and checks the recorded γ against its incentive
/// constraints. Violations are data, not errors: regression-estimated
/// inputs are expected to carry noise.
pub fn verify_stage_rationality(
    chain: &impl MarkovChain,
    z: &StoppingPayoffs,
    solution: &StoppingSolution,
    tol: f64,
) -> RationalityReport {
    let nodes = chain.node_count();
    let horizon = z.horizon();
    let mut report = RationalityReport::new();
    let mut e1 = vec![0.0; nodes];
    let mut e2 = vec![0.0; nodes];
    for t in 0..horizon {
        chain.expectation(&solution.v1[t + 1], &mut e1);
        chain.expectation(&solution.v2[t + 1], &mut e2);
        for n in 0..nodes {
            let game = stage_of_stopping(z, t, n, e1[n], e2[n]);
            let slacks = matrix_game::ce_slacks(&game, &solution.gammas[t][n]);
            report.record(t, n, slacks, tol);
        }
    }
    report
}

/// Private recommendations handed to the players.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signal {
    pub mu1: u8,
    pub mu2: u8,
}

/// Maps one uniform draw to a signal pair by partitioning [0, 1) into
/// consecutive intervals of lengths (g00, g01, g10, g11) in that order,
/// so the joint law of the signals is exactly γ.
pub fn draw_signals(gamma: &JointDistribution, u: f64) -> Signal {
    debug_assert!((0.0..1.0).contains(&u));
    let mut acc = gamma.g00;
    if u < acc {
        return Signal { mu1: 0, mu2: 0 };
    }
    acc += gamma.g01;
    if u < acc {
        return Signal { mu1: 0, mu2: 1 };
    }
    acc += gamma.g10;
    if u < acc {
        return Signal { mu1: 1, mu2: 0 };
    }
    Signal { mu1: 1, mu2: 1 }
}

/// Bayes posterior (probability of opponent action 0, action 1) that a
/// player can impute from their own recommendation. `None` when the
/// conditioning signal has zero probability.
pub fn implied_conditional(
    gamma: &JointDistribution,
    my_signal: u8,
    player: u8,
) -> Option<(f64, f64)> {
    let (w0, w1) = match (player, my_signal) {
        (1, 0) => (gamma.g00, gamma.g01),
        (1, _) => (gamma.g10, gamma.g11),
        (_, 0) => (gamma.g00, gamma.g10),
        (_, _) => (gamma.g01, gamma.g11),
    };
    let mass = w0 + w1;
    (mass > 0.0).then(|| (w0 / mass, w1 / mass))
}

/// First stage whose uniform draw falls at or below its stop probability;
/// the horizon `p.len()` when none does.
pub fn randomized_stop(p: &[f64], u: &[f64]) -> usize {
    debug_assert!(u.len() >= p.len());
    debug_assert!(p.iter().all(|q| (0.0..=1.0).contains(q)));
    p.iter()
        .zip(u)
        .position(|(prob, draw)| draw <= prob)
        .unwrap_or(p.len())
}
