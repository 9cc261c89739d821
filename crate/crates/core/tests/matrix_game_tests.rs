//! Equilibrium-engine checks: textbook fixtures, brute-force oracles on
//! random games, and optimality of the selection laws over the correlated
//! equilibrium polytope.

use proptest::prelude::*;
use switchgame::matrix_game::{
    ce_slacks, classify, game_value, is_ce, mixed_nash, pure_nash, select_ce, BimatrixGame,
    CorrelationLaw, GameKind, JointDistribution,
};
use switchgame::noise::splitmix64;

const LAWS: [CorrelationLaw; 6] = [
    CorrelationLaw::Utilitarian { w1: 1.0, w2: 1.0 },
    CorrelationLaw::Utilitarian { w1: 0.3, w2: 1.7 },
    CorrelationLaw::Egalitarian,
    CorrelationLaw::Preferential(1),
    CorrelationLaw::Preferential(2),
    CorrelationLaw::LexFirst,
];

fn random_game(state: &mut u64, lo: f64, hi: f64) -> BimatrixGame {
    let mut draw = || {
        let u = splitmix64(state) as f64 / 2.0f64.powi(64);
        lo + (hi - lo) * u
    };
    BimatrixGame::new(
        [[draw(), draw()], [draw(), draw()]],
        [[draw(), draw()], [draw(), draw()]],
    )
}

// Independent brute-force oracle: a cell is a pure equilibrium when no
// unilateral deviation strictly improves.
fn oracle_pure_nash(g: &BimatrixGame) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..2 {
        for k in 0..2 {
            if g.z1[j][k] >= g.z1[1 - j][k] && g.z2[j][k] >= g.z2[j][1 - k] {
                out.push((j, k));
            }
        }
    }
    out
}

#[test]
fn textbook_games_classify_and_solve_as_expected() {
    // Chicken: swerve/dare with crash payoff -10.
    let chicken = BimatrixGame::new(
        [[0.0, -1.0], [1.0, -10.0]],
        [[0.0, 1.0], [-1.0, -10.0]],
    );
    assert_eq!(classify(&chicken), GameKind::AntiCoordination);
    assert_eq!(pure_nash(&chicken), vec![(0, 1), (1, 0)]);
    let m = mixed_nash(&chicken).point.unwrap();
    // Indifference: -p2 = p2 gives... solve exactly: p2 = a0/(a0-a1) with
    // a0 = -1, a1 = 9, so p2 = 1/10; symmetric for p1.
    assert!((m.p1 - 0.1).abs() <= 1e-12);
    assert!((m.p2 - 0.1).abs() <= 1e-12);

    // Prisoner's dilemma: defect strictly dominates.
    let pd = BimatrixGame::new(
        [[3.0, 0.0], [5.0, 1.0]],
        [[3.0, 5.0], [0.0, 1.0]],
    );
    assert_eq!(classify(&pd), GameKind::UniquePure);
    assert_eq!(pure_nash(&pd), vec![(1, 1)]);
    assert!(mixed_nash(&pd).point.is_none());
    // Every law must settle on the dominant cell.
    for law in &LAWS {
        let sol = select_ce(&pd, law);
        assert_eq!(sol.gamma, JointDistribution::point_mass(1, 1), "law {law:?}");
        assert_eq!((sol.v1, sol.v2), (1.0, 1.0));
    }

    // Matching pennies: no pure equilibrium, mixed at (1/2, 1/2).
    let pennies = BimatrixGame::new(
        [[1.0, -1.0], [-1.0, 1.0]],
        [[-1.0, 1.0], [1.0, -1.0]],
    );
    assert_eq!(classify(&pennies), GameKind::Competitive);
    assert!(pure_nash(&pennies).is_empty());
    let m = mixed_nash(&pennies).point.unwrap();
    assert_eq!((m.p1, m.p2), (0.5, 0.5));

    // Battle of the sexes: both want to meet, at different corners.
    let bos = BimatrixGame::new(
        [[2.0, 0.0], [0.0, 1.0]],
        [[1.0, 0.0], [0.0, 2.0]],
    );
    assert_eq!(classify(&bos), GameKind::Coordination);
    assert_eq!(pure_nash(&bos), vec![(0, 0), (1, 1)]);
    let p1 = select_ce(&bos, &CorrelationLaw::Preferential(1));
    let p2 = select_ce(&bos, &CorrelationLaw::Preferential(2));
    assert_eq!(p1.gamma, JointDistribution::point_mass(0, 0));
    assert_eq!(p2.gamma, JointDistribution::point_mass(1, 1));
    // The egalitarian optimum mixes the two meeting points evenly.
    let eg = select_ce(&bos, &CorrelationLaw::Egalitarian);
    assert!((eg.v1 - 1.5).abs() <= 1e-9, "egalitarian v1 = {}", eg.v1);
    assert!((eg.v2 - 1.5).abs() <= 1e-9);
}

// In chicken, the public-signal equilibrium that splits mass over the two
// pure equilibria and the cooperative cell is a correlated equilibrium
// that beats the mixed Nash payoff; the utilitarian selection must find a
// distribution at least this good.
#[test]
fn utilitarian_selection_beats_the_mixed_nash_payoff_in_chicken() {
    let chicken = BimatrixGame::new(
        [[6.0, 2.0], [7.0, 0.0]],
        [[6.0, 7.0], [2.0, 0.0]],
    );
    let reference = JointDistribution::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0).unwrap();
    assert!(is_ce(&chicken, &reference, 1e-12));
    let (r1, r2) = game_value(&chicken, &reference);
    let m = mixed_nash(&chicken).point.unwrap();
    let mix = JointDistribution::product(m.p1, m.p2);
    let (m1, m2) = game_value(&chicken, &mix);
    assert!(r1 + r2 > m1 + m2 + 0.5, "signal {} vs mixed {}", r1 + r2, m1 + m2);
    let sol = select_ce(&chicken, &CorrelationLaw::Utilitarian { w1: 1.0, w2: 1.0 });
    assert!(sol.v1 + sol.v2 >= r1 + r2 - 1e-9);
    assert!(is_ce(&chicken, &sol.gamma, 1e-9));
}

#[test]
fn random_games_always_yield_correlated_equilibria() {
    let mut state = 0x5EED_0001u64;
    for trial in 0..10_000 {
        let game = random_game(&mut state, -10.0, 10.0);
        assert_eq!(pure_nash(&game), oracle_pure_nash(&game), "trial {trial}");
        for law in &LAWS {
            let sol = select_ce(&game, law);
            let g = sol.gamma.as_array();
            assert!(g.iter().all(|v| *v >= 0.0), "trial {trial} law {law:?}");
            assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(
                is_ce(&game, &sol.gamma, 1e-9),
                "trial {trial} law {law:?}: slacks {:?}",
                ce_slacks(&game, &sol.gamma)
            );
            let (v1, v2) = game_value(&game, &sol.gamma);
            assert!((v1 - sol.v1).abs() <= 1e-12);
            assert!((v2 - sol.v2).abs() <= 1e-12);
        }
    }
}

// The interior mixed point must survive a best-response grid search: no
// deviation mix on a 101-point grid may improve either player.
#[test]
fn mixed_points_survive_grid_deviation_search() {
    let mut state = 0xACE_u64;
    let mut found = 0;
    for _ in 0..10_000 {
        let game = random_game(&mut state, -5.0, 5.0);
        let Some(m) = mixed_nash(&game).point else { continue };
        found += 1;
        let base = JointDistribution::product(m.p1, m.p2);
        let (v1, v2) = game_value(&game, &base);
        for step in 0..=100 {
            let dev = step as f64 / 100.0;
            let (d1, _) = game_value(&game, &JointDistribution::product(dev, m.p2));
            let (_, d2) = game_value(&game, &JointDistribution::product(m.p1, dev));
            assert!(d1 <= v1 + 1e-9, "row deviation {dev} gains: {d1} > {v1}");
            assert!(d2 <= v2 + 1e-9, "column deviation {dev} gains: {d2} > {v2}");
        }
    }
    assert!(found > 1_000, "only {found} interior mixed points in 10k games");
}

#[test]
fn zero_sum_selections_have_opposite_values() {
    let mut state = 0xBEEF_u64;
    for _ in 0..10_000 {
        let game = random_game(&mut state, -8.0, 8.0);
        let zs = BimatrixGame::new(game.z1, [[-game.z1[0][0], -game.z1[0][1]], [
            -game.z1[1][0],
            -game.z1[1][1],
        ]]);
        for law in &LAWS {
            let sol = select_ce(&zs, law);
            assert!(
                (sol.v1 + sol.v2).abs() <= 1e-9,
                "law {law:?}: v1 + v2 = {}",
                sol.v1 + sol.v2
            );
            assert!(is_ce(&zs, &sol.gamma, 1e-9));
        }
    }
}

// Each selection law must be optimal for its own objective among the
// distributions any other law picked for the same game.
#[test]
fn selection_laws_dominate_each_other_on_their_own_objectives() {
    let mut state = 0xD00D_u64;
    let green = CorrelationLaw::Green { weights: [0.0, 4.0, 8.0, 12.0] };
    for trial in 0..2_500 {
        let game = random_game(&mut state, -10.0, 10.0);
        let mut all = Vec::new();
        for law in &LAWS {
            all.push(select_ce(&game, law));
        }
        all.push(select_ce(&game, &green));
        let scale = 1e-9;
        let best1 = select_ce(&game, &CorrelationLaw::Preferential(1)).v1;
        let best2 = select_ce(&game, &CorrelationLaw::Preferential(2)).v2;
        let besteq = select_ce(&game, &CorrelationLaw::Egalitarian);
        let bestut = select_ce(&game, &CorrelationLaw::Utilitarian { w1: 1.0, w2: 1.0 });
        let bestgr = select_ce(&game, &green);
        let weight = |g: &JointDistribution| {
            let a = g.as_array();
            4.0 * a[1] + 8.0 * a[2] + 12.0 * a[3]
        };
        for sol in &all {
            assert!(best1 >= sol.v1 - scale, "trial {trial}: preferential-1 beaten");
            assert!(best2 >= sol.v2 - scale, "trial {trial}: preferential-2 beaten");
            assert!(
                besteq.v1.min(besteq.v2) >= sol.v1.min(sol.v2) - scale,
                "trial {trial}: egalitarian beaten"
            );
            assert!(
                bestut.v1 + bestut.v2 >= sol.v1 + sol.v2 - scale,
                "trial {trial}: utilitarian beaten"
            );
            assert!(
                weight(&bestgr.gamma) <= weight(&sol.gamma) + scale,
                "trial {trial}: green beaten"
            );
        }
    }
}

#[test]
fn exact_ties_classify_as_degenerate_but_still_solve() {
    let tied = BimatrixGame::new(
        [[1.0, 1.0], [1.0, 1.0]],
        [[2.0, 2.0], [2.0, 2.0]],
    );
    assert_eq!(classify(&tied), GameKind::Degenerate);
    assert!(mixed_nash(&tied).degenerate);
    for law in &LAWS {
        let sol = select_ce(&tied, law);
        assert!(is_ce(&tied, &sol.gamma, 1e-12));
        assert_eq!((sol.v1, sol.v2), (1.0, 2.0));
        assert_eq!(sol.kind, GameKind::Degenerate);
    }
}

#[test]
fn distributions_reject_bad_mass() {
    assert!(JointDistribution::new(0.5, 0.5, 0.25, -0.25).is_err());
    assert!(JointDistribution::new(0.5, 0.5, 0.5, 0.5).is_err());
    assert!(JointDistribution::new(f64::NAN, 0.5, 0.25, 0.25).is_err());
    let g = JointDistribution::new(0.25, 0.25, 0.25, 0.25 - 1e-12).unwrap();
    assert!((g.as_array().iter().sum::<f64>() - 1.0).abs() <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    // Selection must produce a valid correlated equilibrium for any finite
    // payoffs, including adversarial magnitudes and exact ties.
    #[test]
    fn any_finite_game_selects_a_valid_ce(
        z in prop::array::uniform8(-1e4f64..1e4),
        tie in prop::bool::ANY,
    ) {
        let mut z1 = [[z[0], z[1]], [z[2], z[3]]];
        let z2 = [[z[4], z[5]], [z[6], z[7]]];
        if tie {
            // Force a payoff tie to hit the degenerate branches.
            z1[1][0] = z1[0][0];
        }
        let game = BimatrixGame::new(z1, z2);
        for law in &LAWS {
            let sol = select_ce(&game, law);
            prop_assert!(is_ce(&game, &sol.gamma, 1e-7 * (1.0 + 1e4)));
        }
    }

    // The indifference construction really equalizes both actions.
    #[test]
    fn mixed_points_equalize_both_actions(z in prop::array::uniform8(-100f64..100.0)) {
        let game = BimatrixGame::new(
            [[z[0], z[1]], [z[2], z[3]]],
            [[z[4], z[5]], [z[6], z[7]]],
        );
        if let Some(m) = mixed_nash(&game).point {
            let row0 = (1.0 - m.p2) * game.z1[0][0] + m.p2 * game.z1[0][1];
            let row1 = (1.0 - m.p2) * game.z1[1][0] + m.p2 * game.z1[1][1];
            let col0 = (1.0 - m.p1) * game.z2[0][0] + m.p1 * game.z2[1][0];
            let col1 = (1.0 - m.p1) * game.z2[0][1] + m.p1 * game.z2[1][1];
            prop_assert!((row0 - row1).abs() <= 1e-7);
            prop_assert!((col0 - col1).abs() <= 1e-7);
        }
    }
}
