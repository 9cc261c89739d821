//! One-shot 2x2 bimatrix games: pure and mixed Nash equilibria, the
//! correlated-equilibrium polytope, and equilibrium selection under a
//! correlation law.
//!
//! A joint distribution γ = (g00, g01, g10, g11) over action pairs (j, k)
//! is a correlated equilibrium point (CEP) when neither player can gain by
//! deviating from a recommended action. With the payoff differences
//!
//! ```text
//! a0 = z1[0][0] - z1[1][0]    a1 = z1[0][1] - z1[1][1]
//! b0 = z2[0][0] - z2[0][1]    b1 = z2[1][0] - z2[1][1]
//! ```
//!
//! the CEP conditions are four linear inequalities in γ:
//!
//! ```text
//!  a0·g00 + a1·g01 ≥ 0      (row 0 recommended to player 1)
//! -a0·g10 - a1·g11 ≥ 0      (row 1 recommended to player 1)
//!  b0·g00 + b1·g10 ≥ 0      (column 0 recommended to player 2)
//! -b0·g01 - b1·g11 ≥ 0      (column 1 recommended to player 2)
//! ```
//!
//! Together with the simplex conditions these cut a nonempty polytope out
//! of Δ4 (it always contains the mixed Nash product). Every correlation
//! law implemented here has a linear or concave piecewise-linear objective,
//! so [`select_ce`] optimizes it exactly by enumerating polytope vertices
//! (plus value-crossing edge points for the max-min law) and breaks ties
//! with a fixed lexicographic order, which keeps the selector a
//! deterministic function of the payoffs.

use crate::error::Error;

/// Payoff tables of a 2x2 bimatrix game.
///
/// `z1[j][k]` is the row player's payoff and `z2[j][k]` the column
/// player's payoff when the row player picks action `j` and the column
/// player picks action `k`. In the switching engine action 0 means "keep
/// the current regime" and action 1 means "switch".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BimatrixGame {
    pub z1: [[f64; 2]; 2],
    pub z2: [[f64; 2]; 2],
}

impl BimatrixGame {
    pub fn new(z1: [[f64; 2]; 2], z2: [[f64; 2]; 2]) -> Self {
        Self { z1, z2 }
    }

    /// Row-gap coefficients (a0, a1) for player 1 and column-gap
    /// coefficients (b0, b1) for player 2; see the module doc.
    fn diffs(&self) -> (f64, f64, f64, f64) {
        let a0 = self.z1[0][0] - self.z1[1][0];
        let a1 = self.z1[0][1] - self.z1[1][1];
        let b0 = self.z2[0][0] - self.z2[0][1];
        let b1 = self.z2[1][0] - self.z2[1][1];
        (a0, a1, b0, b1)
    }
}

/// Probability distribution over the four action pairs of a 2x2 game,
/// stored in the order (g00, g01, g10, g11) with the first index the row
/// player's action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    pub g00: f64,
    pub g01: f64,
    pub g10: f64,
    pub g11: f64,
}

impl JointDistribution {
    /// Largest tolerated round-off below zero or away from sum one.
    const SLACK: f64 = 1e-9;

    /// Builds a distribution, clamping round-off negatives to zero and
    /// renormalizing so the entries sum to one exactly.
    pub fn new(g00: f64, g01: f64, g10: f64, g11: f64) -> Result<Self, Error> {
        let g = [g00, g01, g10, g11];
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("joint distribution entries must be finite"));
        }
        if g.iter().any(|&v| v < -Self::SLACK) {
            return Err(Error::numeric(format!(
                "joint distribution entry below zero: {g:?}"
            )));
        }
        let sum: f64 = g.iter().sum();
        if (sum - 1.0).abs() > Self::SLACK {
            return Err(Error::numeric(format!(
                "joint distribution must sum to one, got {sum}"
            )));
        }
        Ok(Self::from_array(normalized(g)))
    }

    /// All mass on the action pair (j, k).
    pub fn point_mass(j: usize, k: usize) -> Self {
        let mut g = [0.0; 4];
        g[2 * j + k] = 1.0;
        Self::from_array(g)
    }

    /// Product distribution of independent mixes, where `p1` and `p2` are
    /// each player's probability of action 1.
    pub fn product(p1: f64, p2: f64) -> Self {
        Self {
            g00: (1.0 - p1) * (1.0 - p2),
            g01: (1.0 - p1) * p2,
            g10: p1 * (1.0 - p2),
            g11: p1 * p2,
        }
    }

    pub fn uniform() -> Self {
        Self { g00: 0.25, g01: 0.25, g10: 0.25, g11: 0.25 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.g00, self.g01, self.g10, self.g11]
    }

    fn from_array(g: [f64; 4]) -> Self {
        Self { g00: g[0], g01: g[1], g10: g[2], g11: g[3] }
    }

    /// Probability that the row player is told to play action 1.
    pub fn row_switch_prob(&self) -> f64 {
        self.g10 + self.g11
    }

    /// Probability that the column player is told to play action 1.
    pub fn col_switch_prob(&self) -> f64 {
        self.g01 + self.g11
    }
}

// Clamps negatives and rescales so the entries sum to one.
fn normalized(g: [f64; 4]) -> [f64; 4] {
    let g = g.map(|v| v.max(0.0));
    let sum: f64 = g.iter().sum();
    g.map(|v| v / sum)
}

/// Objective used to pick one correlated equilibrium out of the polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationLaw {
    /// Maximize w1·v1 + w2·v2.
    Utilitarian { w1: f64, w2: f64 },
    /// Maximize min(v1, v2).
    Egalitarian,
    /// Maximize the named player's value (1 or 2).
    Preferential(u8),
    /// Minimize the expected weight of the recommended action pair. The
    /// switching engine passes the emission rates of the regimes that each
    /// action pair leads to, indexed (00, 01, 10, 11).
    Green { weights: [f64; 4] },
    /// Constant objective: the deterministic tie-break alone decides.
    LexFirst,
}

impl CorrelationLaw {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            CorrelationLaw::Utilitarian { w1, w2 } => {
                let ok = w1.is_finite()
                    && w2.is_finite()
                    && *w1 >= 0.0
                    && *w2 >= 0.0
                    && (*w1 > 0.0 || *w2 > 0.0);
                if !ok {
                    return Err(Error::config(
                        "utilitarian weights must be finite, nonnegative and not both zero",
                    ));
                }
            }
            CorrelationLaw::Preferential(p) => {
                if *p != 1 && *p != 2 {
                    return Err(Error::config(format!(
                        "preferential law refers to player {p}, expected 1 or 2"
                    )));
                }
            }
            CorrelationLaw::Green { weights } => {
                let ok = weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                    && weights.iter().any(|w| *w > 0.0);
                if !ok {
                    return Err(Error::config(
                        "green law weights must be finite, nonnegative and not all zero",
                    ));
                }
            }
            CorrelationLaw::Egalitarian | CorrelationLaw::LexFirst => {}
        }
        Ok(())
    }

    /// Candidate score; larger is better for every law.
    fn objective(&self, g: &[f64; 4], v1: f64, v2: f64) -> f64 {
        match self {
            CorrelationLaw::Utilitarian { w1, w2 } => w1 * v1 + w2 * v2,
            CorrelationLaw::Egalitarian => v1.min(v2),
            CorrelationLaw::Preferential(1) => v1,
            CorrelationLaw::Preferential(_) => v2,
            CorrelationLaw::Green { weights } => {
                -(weights[0] * g[0] + weights[1] * g[1] + weights[2] * g[2] + weights[3] * g[3])
            }
            CorrelationLaw::LexFirst => 0.0,
        }
    }
}

/// Strategic shape of a 2x2 game, read off the strict signs of the payoff
/// gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    /// Exactly one pure equilibrium.
    UniquePure,
    /// Two pure equilibria on the main diagonal: players want to match.
    Coordination,
    /// Two pure equilibria off the diagonal plus a mixed one: players want
    /// to avoid each other.
    AntiCoordination,
    /// No pure equilibrium, only the mixed one.
    Competitive,
    /// Some payoff gap is exactly zero, so ties decide.
    Degenerate,
}

impl GameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::UniquePure => "unique-pure",
            GameKind::Coordination => "coordination",
            GameKind::AntiCoordination => "anti-coordination",
            GameKind::Competitive => "competitive",
            GameKind::Degenerate => "degenerate",
        }
    }
}

/// Classifies a game by its pure-equilibrium pattern. Any exact
/// indifference is reported as [`GameKind::Degenerate`] rather than
/// guessing a shape from the remaining strict signs.
pub fn classify(game: &BimatrixGame) -> GameKind {
    let (a0, a1, b0, b1) = game.diffs();
    if a0 == 0.0 || a1 == 0.0 || b0 == 0.0 || b1 == 0.0 {
        return GameKind::Degenerate;
    }
    let n00 = a0 > 0.0 && b0 > 0.0;
    let n01 = a1 > 0.0 && b0 < 0.0;
    let n10 = a0 < 0.0 && b1 > 0.0;
    let n11 = a1 < 0.0 && b1 < 0.0;
    // With strict signs, two pure equilibria can only pair up diagonally
    // (coordination) or anti-diagonally (chicken).
    match n00 as u8 + n01 as u8 + n10 as u8 + n11 as u8 {
        0 => GameKind::Competitive,
        1 => GameKind::UniquePure,
        _ => {
            if n00 {
                GameKind::Coordination
            } else {
                GameKind::AntiCoordination
            }
        }
    }
}

/// All pure Nash equilibria under weak best responses, in row-major cell
/// order. Ties produce multiple entries.
pub fn pure_nash(game: &BimatrixGame) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..2 {
        for k in 0..2 {
            let row_ok = game.z1[j][k] >= game.z1[1 - j][k];
            let col_ok = game.z2[j][k] >= game.z2[j][1 - k];
            if row_ok && col_ok {
                out.push((j, k));
            }
        }
    }
    out
}

/// Interior mixed equilibrium of a 2x2 game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNash {
    /// Probability that player 1 plays action 1.
    pub p1: f64,
    /// Probability that player 2 plays action 1.
    pub p2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNashResult {
    pub point: Option<MixedNash>,
    /// True when an indifference equation has a zero denominator, i.e.
    /// some player's gap between actions does not react to the opponent's
    /// mix at all.
    pub degenerate: bool,
}

/// Solves the two indifference equations. Player 2's mix `p2` makes
/// player 1 indifferent between rows and vice versa; a point is returned
/// only when both solutions land in [0, 1].
pub fn mixed_nash(game: &BimatrixGame) -> MixedNashResult {
    let (a0, a1, b0, b1) = game.diffs();
    let da = a0 - a1;
    let db = b0 - b1;
    if da == 0.0 || db == 0.0 {
        return MixedNashResult { point: None, degenerate: true };
    }
    let p2 = a0 / da;
    let p1 = b0 / db;
    let unit = 0.0..=1.0;
    if unit.contains(&p1) && unit.contains(&p2) {
        MixedNashResult { point: Some(MixedNash { p1, p2 }), degenerate: false }
    } else {
        MixedNashResult { point: None, degenerate: false }
    }
}

/// Values of the four incentive constraints at γ, in the order row 0,
/// row 1, column 0, column 1. Nonnegative entries mean the recommendation
/// is worth following.
pub fn ce_slacks(game: &BimatrixGame, gamma: &JointDistribution) -> [f64; 4] {
    let (a0, a1, b0, b1) = game.diffs();
    [
        a0 * gamma.g00 + a1 * gamma.g01,
        -a0 * gamma.g10 - a1 * gamma.g11,
        b0 * gamma.g00 + b1 * gamma.g10,
        -b0 * gamma.g01 - b1 * gamma.g11,
    ]
}

/// Whether γ is a correlated equilibrium of the game within `tol`.
pub fn is_ce(game: &BimatrixGame, gamma: &JointDistribution, tol: f64) -> bool {
    ce_slacks(game, gamma).iter().all(|s| *s >= -tol)
}

/// Expected payoff pair under γ.
pub fn game_value(game: &BimatrixGame, gamma: &JointDistribution) -> (f64, f64) {
    let g = gamma.as_array();
    let val = |z: &[[f64; 2]; 2]| g[0] * z[0][0] + g[1] * z[0][1] + g[2] * z[1][0] + g[3] * z[1][1];
    (val(&game.z1), val(&game.z2))
}

/// Selected correlated equilibrium together with its value pair and the
/// game's classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSolution {
    pub gamma: JointDistribution,
    pub v1: f64,
    pub v2: f64,
    pub kind: GameKind,
}

// Running argmax over candidate distributions. Near ties on the objective
// (within 1e-12 relative) fall through to a lexicographic-max comparison
// on (g00, g01, g10, g11), which pins a unique winner whenever the optimal
// face has more than one point.
struct Selection<'a> {
    game: &'a BimatrixGame,
    law: &'a CorrelationLaw,
    best_g: Option<[f64; 4]>,
    best_obj: f64,
}

impl<'a> Selection<'a> {
    fn new(game: &'a BimatrixGame, law: &'a CorrelationLaw) -> Self {
        Self { game, law, best_g: None, best_obj: f64::NEG_INFINITY }
    }

    fn offer(&mut self, raw: [f64; 4]) {
        let g = normalized(raw);
        let gamma = JointDistribution::from_array(g);
        let (v1, v2) = game_value(self.game, &gamma);
        let obj = self.law.objective(&g, v1, v2);
        match self.best_g {
            None => {
                self.best_g = Some(g);
                self.best_obj = obj;
            }
            Some(cur) => {
                let eps = 1e-12 * (1.0 + self.best_obj.abs());
                if obj > self.best_obj + eps {
                    self.best_g = Some(g);
                    self.best_obj = obj;
                } else if obj >= self.best_obj - eps && lex_greater(&g, &cur) {
                    self.best_g = Some(g);
                    self.best_obj = self.best_obj.max(obj);
                }
            }
        }
    }

    fn finish(self, kind: GameKind) -> Option<EquilibriumSolution> {
        self.best_g.map(|g| solution_from(self.game, g, kind))
    }
}

fn lex_greater(a: &[f64; 4], b: &[f64; 4]) -> bool {
    for i in 0..4 {
        if a[i] != b[i] {
            return a[i] > b[i];
        }
    }
    false
}

fn solution_from(game: &BimatrixGame, g: [f64; 4], kind: GameKind) -> EquilibriumSolution {
    let gamma = JointDistribution::from_array(g);
    let (v1, v2) = game_value(game, &gamma);
    EquilibriumSolution { gamma, v1, v2, kind }
}

fn solution_at(game: &BimatrixGame, j: usize, k: usize, kind: GameKind) -> EquilibriumSolution {
    solution_from(game, JointDistribution::point_mass(j, k).as_array(), kind)
}

/// Picks the correlated equilibrium maximizing the law's objective over
/// the CE polytope of the game. Total: the polytope is never empty, and
/// ties are broken by the documented lexicographic order, so equal inputs
/// always produce equal outputs.
///
/// Strictly dominant actions collapse the polytope to a point or a
/// segment and are handled without enumeration; the generic path
/// enumerates every basic solution of the 8 constraints (choose 3 active
/// plus the sum-to-one equality), keeps the feasible ones, and adds the
/// pure and mixed equilibria as guaranteed members. For the max-min law
/// the optimum may also sit where the two value functions cross on an
/// edge, so those crossings are candidates too.
pub fn select_ce(game: &BimatrixGame, law: &CorrelationLaw) -> EquilibriumSolution {
    let kind = classify(game);
    let (a0, a1, b0, b1) = game.diffs();

    // A row (column) is strictly dominant when it is better against both
    // opponent actions; any CE then puts zero mass on the other row
    // (column).
    let row = if a0 > 0.0 && a1 > 0.0 {
        Some(0)
    } else if a0 < 0.0 && a1 < 0.0 {
        Some(1)
    } else {
        None
    };
    let col = if b0 > 0.0 && b1 > 0.0 {
        Some(0)
    } else if b0 < 0.0 && b1 < 0.0 {
        Some(1)
    } else {
        None
    };

    if let (Some(j), Some(k)) = (row, col) {
        return solution_at(game, j, k, kind);
    }
    if let Some(j) = row {
        // Mass lives on row j; the column player's preference inside that
        // row either forces a corner or, on an exact tie, leaves a segment
        // whose endpoints attain every law's optimum (v1 is affine along
        // it and v2 is constant).
        let d = game.z2[j][0] - game.z2[j][1];
        if d > 0.0 {
            return solution_at(game, j, 0, kind);
        }
        if d < 0.0 {
            return solution_at(game, j, 1, kind);
        }
        let mut sel = Selection::new(game, law);
        sel.offer(JointDistribution::point_mass(j, 0).as_array());
        sel.offer(JointDistribution::point_mass(j, 1).as_array());
        return sel.finish(kind).expect("segment endpoints offered");
    }
    if let Some(k) = col {
        let d = game.z1[0][k] - game.z1[1][k];
        if d > 0.0 {
            return solution_at(game, 0, k, kind);
        }
        if d < 0.0 {
            return solution_at(game, 1, k, kind);
        }
        let mut sel = Selection::new(game, law);
        sel.offer(JointDistribution::point_mass(0, k).as_array());
        sel.offer(JointDistribution::point_mass(1, k).as_array());
        return sel.finish(kind).expect("segment endpoints offered");
    }

    // Constraint rows over (g00, g01, g10, g11), each meaning row·γ ≥ 0:
    // the four incentive constraints followed by nonnegativity.
    let rows: [[f64; 4]; 8] = [
        [a0, a1, 0.0, 0.0],
        [0.0, 0.0, -a0, -a1],
        [b0, 0.0, b1, 0.0],
        [0.0, -b0, 0.0, -b1],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    // Feasibility tolerances scale with the constraint coefficients; kept
    // tight so that clamping a kept vertex cannot breach the incentive
    // constraints by more than a few ulps of the payoff scale.
    let tol_row = 1e-12 * (1.0 + a0.abs() + a1.abs());
    let tol_col = 1e-12 * (1.0 + b0.abs() + b1.abs());
    let tols = [tol_row, tol_row, tol_col, tol_col, 1e-12, 1e-12, 1e-12, 1e-12];
    let feasible = |g: &[f64; 4]| {
        rows.iter()
            .zip(tols)
            .all(|(r, tol)| r[0] * g[0] + r[1] * g[1] + r[2] * g[2] + r[3] * g[3] >= -tol)
    };

    let mut sel = Selection::new(game, law);
    for i in 0..8 {
        for j in i + 1..8 {
            for k in j + 1..8 {
                if let Some(g) = solve_active(&rows[i], &rows[j], &rows[k]) {
                    if feasible(&g) {
                        sel.offer(g);
                    }
                }
            }
        }
    }

    if matches!(law, CorrelationLaw::Egalitarian) {
        // Per-cell gap between the two players' payoffs; v1 = v2 along the
        // hyperplane dv·γ = 0.
        let dv = [
            game.z1[0][0] - game.z2[0][0],
            game.z1[0][1] - game.z2[0][1],
            game.z1[1][0] - game.z2[1][0],
            game.z1[1][1] - game.z2[1][1],
        ];
        for i in 0..8 {
            for j in i + 1..8 {
                if let Some(g) = solve_active(&rows[i], &rows[j], &dv) {
                    if feasible(&g) {
                        sel.offer(g);
                    }
                }
            }
        }
    }

    // Pure and mixed equilibria are always correlated equilibria; offering
    // them guards against vertices lost to the singularity filter.
    for (j, k) in pure_nash(game) {
        sel.offer(JointDistribution::point_mass(j, k).as_array());
    }
    if let Some(m) = mixed_nash(game).point {
        sel.offer(JointDistribution::product(m.p1, m.p2).as_array());
    }

    match sel.finish(kind) {
        Some(solution) => solution,
        // Unreachable for finite payoffs; return the least-violating
        // simple candidate so the selector stays total.
        None => {
            let guards = [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.25, 0.25, 0.25, 0.25],
            ];
            let worst = |g: [f64; 4]| {
                let gamma = JointDistribution::from_array(g);
                ce_slacks(game, &gamma).into_iter().fold(f64::INFINITY, f64::min)
            };
            let g = guards
                .into_iter()
                .max_by(|x, y| worst(*x).total_cmp(&worst(*y)))
                .expect("nonempty guard list");
            solution_from(game, g, kind)
        }
    }
}

/// Equilibrium selection when switching is disallowed for one or both
/// players, collapsing their action set to "stay" (action 0). Exact ties
/// are resolved toward staying.
pub fn select_ce_restricted(
    game: &BimatrixGame,
    law: &CorrelationLaw,
    free1: bool,
    free2: bool,
) -> EquilibriumSolution {
    match (free1, free2) {
        (true, true) => select_ce(game, law),
        (false, false) => solution_at(game, 0, 0, GameKind::UniquePure),
        (true, false) => {
            let j = if game.z1[1][0] > game.z1[0][0] { 1 } else { 0 };
            let kind = if game.z1[1][0] == game.z1[0][0] {
                GameKind::Degenerate
            } else {
                GameKind::UniquePure
            };
            solution_at(game, j, 0, kind)
        }
        (false, true) => {
            let k = if game.z2[0][1] > game.z2[0][0] { 1 } else { 0 };
            let kind = if game.z2[0][1] == game.z2[0][0] {
                GameKind::Degenerate
            } else {
                GameKind::UniquePure
            };
            solution_at(game, 0, k, kind)
        }
    }
}

// Solves the 4x4 system {r1·γ = 0, r2·γ = 0, r3·γ = 0, Σγ = 1} by Gaussian
// elimination with partial pivoting. Returns None for (near-)singular
// active sets; those never hide a vertex, because every vertex also arises
// from a well-conditioned basis or is covered by the equilibrium
// fallbacks.
fn solve_active(r1: &[f64; 4], r2: &[f64; 4], r3: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = [[0.0f64; 5]; 4];
    for (dst, src) in m.iter_mut().zip([r1, r2, r3]) {
        dst[..4].copy_from_slice(&src[..]);
    }
    m[3] = [1.0, 1.0, 1.0, 1.0, 1.0];

    let scale = m
        .iter()
        .flat_map(|r| r[..4].iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    // scale ≥ 1 thanks to the sum row.
    let min_pivot = 1e-10 * scale;

    for c in 0..4 {
        let piv = (c..4)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .expect("nonempty pivot range");
        if m[piv][c].abs() < min_pivot {
            return None;
        }
        m.swap(c, piv);
        for r in c + 1..4 {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for cc in c..5 {
                    m[r][cc] -= f * m[c][cc];
                }
            }
        }
    }
    let mut g = [0.0f64; 4];
    for r in (0..4).rev() {
        let mut acc = m[r][4];
        for c in r + 1..4 {
            acc -= m[r][c] * g[c];
        }
        g[r] = acc / m[r][r];
    }
    if g.iter().all(|v| v.is_finite()) {
        Some(g)
    } else {
        None
    }
}
