//! Stopping-game checks: a deterministic instance solved against an
//! exhaustive search over pure stopping-time pairs, law independence on a
//! strictly solvable stochastic instance, and a one-stage instance where
//! the selection laws must disagree.

use switchgame::matrix_game::CorrelationLaw;
use switchgame::stage_game::{stopping_game_values, DenseChain, StoppingPayoffs};

const LAWS: [CorrelationLaw; 6] = [
    CorrelationLaw::Utilitarian { w1: 1.0, w2: 1.0 },
    CorrelationLaw::Utilitarian { w1: 2.0, w2: 0.5 },
    CorrelationLaw::Egalitarian,
    CorrelationLaw::Preferential(1),
    CorrelationLaw::Preferential(2),
    CorrelationLaw::LexFirst,
];

// Four-stage deterministic instance. Sequences are indexed by stage and
// chosen so every stage game is strictly solvable: both players run the
// first stage, then both stop at stage 1.
const R1: [f64; 5] = [1.4, 0.6, 0.2, -0.4, 0.0];
const R2: [f64; 5] = [1.2, 0.5, -0.1, -0.6, 0.0];
const S1: [f64; 5] = [2.0, 1.6, 1.2, 0.8, 0.4];
const Q2: [f64; 5] = [1.65, 1.2, 0.9, 0.6, 0.3];
const S2: [f64; 5] = [1.8, 1.5, 1.0, 0.5, 0.1];
const Q1: [f64; 5] = [1.7, 1.3, 0.9, 0.5, 0.2];
const B1: [f64; 5] = [1.9, 1.5, 1.1, 0.7, 0.35];
const B2: [f64; 5] = [1.6, 1.3, 0.95, 0.45, 0.15];

fn deterministic_payoffs() -> StoppingPayoffs {
    let seq = |vals: [f64; 5]| vals.iter().map(|v| vec![*v]).collect::<Vec<_>>();
    StoppingPayoffs {
        z1: [[seq(R1), seq(Q1)], [seq(S1), seq(B1)]],
        z2: [[seq(R2), seq(Q2)], [seq(S2), seq(B2)]],
    }
}

// Total payoff of a fixed pure stopping pair, accumulated backward so the
// arithmetic order matches the dynamic program exactly.
fn pair_payoff(t1: usize, t2: usize) -> (f64, f64) {
    let horizon = 4;
    let tau = t1.min(t2);
    let (mut v1, mut v2) = if tau == horizon || t1 == t2 {
        (B1[tau], B2[tau])
    } else if t1 == tau {
        (S1[tau], Q2[tau])
    } else {
        (Q1[tau], S2[tau])
    };
    for t in (0..tau).rev() {
        v1 = R1[t] + v1;
        v2 = R2[t] + v2;
    }
    (v1, v2)
}

#[test]
fn deterministic_stopping_matches_exhaustive_pair_search() {
    // Exhaustive search over all 25 pure stopping pairs (4 = never stop
    // before the forced horizon).
    let mut equilibria = Vec::new();
    for t1 in 0..=4usize {
        for t2 in 0..=4usize {
            let (v1, v2) = pair_payoff(t1, t2);
            let best1 = (0..=4).all(|a| pair_payoff(a, t2).0 <= v1);
            let best2 = (0..=4).all(|b| pair_payoff(t1, b).1 <= v2);
            if best1 && best2 {
                equilibria.push((t1, t2, v1, v2));
            }
        }
    }
    assert_eq!(equilibria.len(), 1, "stopping equilibria {equilibria:?}");
    let (t1, t2, v1, v2) = equilibria[0];
    assert_eq!((t1, t2), (1, 1));

    let chain = DenseChain::new(vec![vec![1.0]]).unwrap();
    let z = deterministic_payoffs();
    for law in &LAWS {
        let sol = stopping_game_values(&chain, &z, law).unwrap();
        // Exact agreement: both sides accumulate the same literals in the
        // same order.
        assert_eq!(sol.v1[0][0], v1, "law {law:?}");
        assert_eq!(sol.v2[0][0], v2, "law {law:?}");
    }
    assert!((v1 - 2.9).abs() <= 1e-12);
    assert!((v2 - 2.5).abs() <= 1e-12);
}

// Strictly solvable stochastic instance: stop payoffs peak at different
// stages for the two players (stage 3 for player 1, stage 2 for player
// 2), with margins wide enough that every stage game at every node is
// dominance solvable. All laws must then produce one value surface.
fn monotone_payoffs(scale: &[f64]) -> StoppingPayoffs {
    let horizon = 5usize;
    let nodes = scale.len();
    let grid = |f: &dyn Fn(usize, usize) -> f64| {
        (0..=horizon)
            .map(|t| (0..nodes).map(|n| f(t, n)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let s1 = |t: usize, n: usize| (10.0 - 3.0 * (t as f64 - 3.0).abs()) * scale[n];
    let s2 = |t: usize, n: usize| (10.0 - 3.0 * (t as f64 - 2.0).abs()) * scale[n] - 0.3;
    let r1 = |t: usize, n: usize| scale[n] * (1.0 - 0.2 * t as f64);
    let r2 = |t: usize, n: usize| 0.8 * scale[n] * (1.0 - 0.25 * t as f64);
    // Being left behind is clearly better before the peak and clearly
    // worse after it, so the stop decision is dominant in both phases.
    let q1 = |t: usize, n: usize| s1(t, n) + if t < 3 { 5.0 } else { -5.0 };
    let q2 = |t: usize, n: usize| s2(t, n) + if t < 2 { 5.0 } else { -5.0 };
    StoppingPayoffs {
        z1: [[grid(&r1), grid(&q1)], [grid(&s1), grid(&s1)]],
        z2: [[grid(&r2), grid(&q2)], [grid(&s2), grid(&s2)]],
    }
}

#[test]
fn monotone_instances_are_law_independent() {
    let chain = DenseChain::new(vec![
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.6, 0.2],
        vec![0.1, 0.3, 0.6],
    ])
    .unwrap();
    let z = monotone_payoffs(&[1.0, 1.5, 2.2]);
    let reference = stopping_game_values(&chain, &z, &LAWS[0]).unwrap();
    // The selected recommendations must all be pure.
    for row in &reference.gammas {
        for g in row {
            let a = g.as_array();
            assert!(a.iter().any(|m| (*m - 1.0).abs() <= 1e-12), "mixed gamma {a:?}");
        }
    }
    let mut stops = 0usize;
    for (t, row) in reference.gammas.iter().enumerate() {
        for g in row {
            if g.row_switch_prob() > 0.5 || g.col_switch_prob() > 0.5 {
                stops += 1;
                assert!(t > 0, "stopping immediately defeats the instance");
            }
        }
    }
    assert!(stops > 0, "nobody ever stops; the instance is vacuous");
    for law in &LAWS[1..] {
        let sol = stopping_game_values(&chain, &z, law).unwrap();
        let mut worst = 0.0f64;
        for t in 0..reference.v1.len() {
            for n in 0..reference.v1[t].len() {
                worst = worst.max((sol.v1[t][n] - reference.v1[t][n]).abs());
                worst = worst.max((sol.v2[t][n] - reference.v2[t][n]).abs());
            }
        }
        assert!(worst <= 1e-9, "law {law:?} deviates by {worst}");
    }
}

// One-stage war of attrition: each player wants the other to stop first.
// The preferential laws must disagree here, which guards against a
// selection that ignores its objective.
#[test]
fn attrition_stage_separates_the_preferential_laws() {
    let chain = DenseChain::new(vec![vec![1.0]]).unwrap();
    let seq = |a: f64, b: f64| vec![vec![a], vec![b]];
    let z = StoppingPayoffs {
        // Order per stage: [continue, other-stops], [stop-alone, both-stop].
        z1: [[seq(-0.5, 0.0), seq(2.0, 0.0)], [seq(1.0, 0.0), seq(-2.0, 0.0)]],
        z2: [[seq(-0.5, 0.0), seq(2.0, 0.0)], [seq(1.0, 0.0), seq(-2.0, 0.0)]],
    };
    let p1 = stopping_game_values(&chain, &z, &CorrelationLaw::Preferential(1)).unwrap();
    let p2 = stopping_game_values(&chain, &z, &CorrelationLaw::Preferential(2)).unwrap();
    // Favouring a player means the opponent is sent off first.
    assert_eq!((p1.v1[0][0], p1.v2[0][0]), (2.0, 1.0));
    assert_eq!((p2.v1[0][0], p2.v2[0][0]), (1.0, 2.0));
    for law in &LAWS {
        let sol = stopping_game_values(&chain, &z, law).unwrap();
        assert!(p1.v1[0][0] >= sol.v1[0][0] - 1e-12, "law {law:?} beats preferential-1");
        assert!(p2.v2[0][0] >= sol.v2[0][0] - 1e-12, "law {law:?} beats preferential-2");
    }
}

#[test]
fn malformed_chains_and_payoffs_are_rejected() {
    assert!(DenseChain::new(vec![]).is_err());
    assert!(DenseChain::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
    assert!(DenseChain::new(vec![vec![0.7, 0.7], vec![0.5, 0.5]]).is_err());
    assert!(DenseChain::new(vec![vec![-0.5, 1.5], vec![0.5, 0.5]]).is_err());
    let chain = DenseChain::new(vec![vec![1.0]]).unwrap();
    let short = StoppingPayoffs {
        z1: [[vec![vec![0.0]], vec![vec![0.0]]], [vec![vec![0.0]], vec![vec![0.0]]]],
        z2: [[vec![vec![0.0]], vec![vec![0.0]]], [vec![vec![0.0]], vec![vec![0.0]]]],
    };
    assert!(stopping_game_values(&chain, &short, &LAWS[0]).is_err());
}
