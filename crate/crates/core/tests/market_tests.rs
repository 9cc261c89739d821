//! Dynamics and noise-stream checks: frozen one-step examples, moment and
//! quantile statistics of simulated increments, and addressability of the
//! random streams.

use switchgame::market::{
    mean_level, mean_levels, spread, step, MarketParams, MarketState, ProducerParams, Regime,
};
use switchgame::noise::{inv_norm_cdf, uniform_from_u64, NoiseStream};

fn table_market() -> MarketParams {
    MarketParams {
        kappa_p: 2.0,
        kappa_x: 3.0,
        sigma_p: 0.4,
        sigma_x: 0.25,
        rho: 0.6,
        pbar: 45.0,
        xbar: 12.0,
        p0: 45.0,
        x0: 15.0,
        dt: 1.0 / 26.0,
        periods: 26,
        sqrt_dt_scaling: true,
    }
}

fn producer1() -> ProducerParams {
    ProducerParams {
        output_rate: 1.0,
        allowance_rate: 2.0,
        fixed_cost: 10.0,
        impact: 8.0,
        switch_on_cost: 0.2,
        switch_off_cost: 0.2,
    }
}

fn producer2() -> ProducerParams {
    ProducerParams {
        output_rate: 2.0,
        allowance_rate: 1.0,
        fixed_cost: 80.0,
        impact: 4.0,
        switch_on_cost: 0.2,
        switch_off_cost: 0.2,
    }
}

#[test]
fn one_step_matches_hand_computed_examples() {
    // Expected values computed independently from the update formula.
    let cases: [(bool, Regime, f64, f64, f64, f64, f64, f64); 3] = [
        (true, Regime::new(1, 1), 45.0, 15.0, 1.0, -0.5, 48.672244711200442, 15.991977589641106),
        (true, Regime::new(0, 1), 30.0, 20.0, -0.7, 1.3, 29.296688452134532, 20.093229984870838),
        (false, Regime::new(1, 0), 50.0, 10.0, 0.25, 0.0, 54.812504398437007, 11.246574729795629),
    ];
    for (scaled, zeta, p, x, ep, eo, want_p, want_x) in cases {
        let mp = MarketParams { sqrt_dt_scaling: scaled, ..table_market() };
        let state = MarketState { t: 3, p, x };
        let next = step(&state, zeta, &mp, &producer1(), &producer2(), ep, eo);
        assert_eq!(next.t, 4);
        assert!(
            (next.p - want_p).abs() <= 1e-12 * want_p,
            "p' = {}, want {want_p}",
            next.p
        );
        assert!(
            (next.x - want_x).abs() <= 1e-12 * want_x,
            "x' = {}, want {want_x}",
            next.x
        );
    }
}

#[test]
fn reversion_contracts_the_log_gap_geometrically() {
    let mp = table_market();
    let a = 1.0 - mp.kappa_p * mp.dt;
    for p in [20.0, 44.0, 45.0, 70.0] {
        let state = MarketState { t: 0, p, x: 15.0 };
        let next = step(&state, Regime::new(0, 0), &mp, &producer1(), &producer2(), 0.0, 0.0);
        let gap0 = p.ln() - mp.pbar.ln();
        let gap1 = next.p.ln() - mp.pbar.ln();
        assert!(
            (gap1 - a * gap0).abs() <= 1e-12,
            "log gap {gap1} is not {a} * {gap0}"
        );
    }
}

#[test]
fn zero_volatility_flows_to_the_regime_level() {
    let mp = MarketParams { sigma_p: 0.0, sigma_x: 0.0, ..table_market() };
    let (pp1, pp2) = (producer1(), producer2());
    for zeta in Regime::ALL {
        let mut state = MarketState { t: 0, p: 70.0, x: 8.0 };
        for _ in 0..400 {
            // Nonzero shocks must be inert at zero volatility.
            state = step(&state, zeta, &mp, &pp1, &pp2, 1.7, -0.9);
        }
        let level = mean_level(mp.xbar, pp1.impact, pp2.impact, zeta).unwrap().exp();
        assert!((state.p - mp.pbar).abs() <= 1e-9);
        assert!(
            (state.x - level).abs() <= 1e-9,
            "x settled at {} instead of {level} in regime {zeta:?}",
            state.x
        );
    }
}

#[test]
fn mean_levels_are_ordered_by_impact() {
    let mp = table_market();
    let levels = mean_levels(&mp, &producer1(), &producer2()).unwrap();
    // Producer 1 has the larger impact, so (1,0) sits above (0,1).
    let i00 = Regime::new(0, 0).index();
    let i01 = Regime::new(0, 1).index();
    let i10 = Regime::new(1, 0).index();
    let i11 = Regime::new(1, 1).index();
    assert!(levels[i00] < levels[i01]);
    assert!(levels[i01] < levels[i10]);
    assert!(levels[i10] < levels[i11]);
    assert_eq!(levels[i00], 12.0f64.ln());
    assert_eq!(levels[i11], 24.0f64.ln());
    // A large negative impact that empties the mean level is rejected.
    assert!(mean_level(12.0, -12.0, 4.0, Regime::new(1, 0)).is_err());
}

#[test]
fn spreads_cap_from_above_only() {
    let pp = producer2();
    assert_eq!(spread(&pp, 60.0, 15.0, 1e6), 2.0 * 60.0 - 15.0 - 80.0);
    assert_eq!(spread(&pp, 60.0, 15.0, 10.0), 10.0);
    // Negative spreads pass through untouched.
    assert_eq!(spread(&pp, 40.0, 15.0, 10.0), 2.0 * 40.0 - 15.0 - 80.0);
}

#[test]
fn switch_costs_charge_changes_only() {
    let pp = producer1();
    assert_eq!(pp.switch_cost(0, 0), 0.0);
    assert_eq!(pp.switch_cost(1, 1), 0.0);
    assert_eq!(pp.switch_cost(0, 1), 0.2);
    assert_eq!(pp.switch_cost(1, 0), 0.2);
}

#[test]
fn invalid_parameters_are_rejected() {
    let bad = [
        MarketParams { sigma_p: -0.1, ..table_market() },
        MarketParams { rho: 1.5, ..table_market() },
        MarketParams { dt: 0.0, ..table_market() },
        MarketParams { periods: 0, ..table_market() },
        MarketParams { p0: -45.0, ..table_market() },
        MarketParams { xbar: 0.0, ..table_market() },
        MarketParams { kappa_p: f64::NAN, ..table_market() },
    ];
    for mp in bad {
        assert!(mp.validate().is_err(), "accepted {mp:?}");
    }
    assert!(table_market().validate().is_ok());
    let neg = ProducerParams { switch_on_cost: -1.0, ..producer1() };
    assert!(neg.validate().is_err());
}

// Empirical one-step CDF of p' evaluated at reference quantiles of the
// exact lognormal law. Binomial tolerance: 4 sqrt(q(1-q)/N).
#[test]
fn simulated_price_steps_match_reference_quantiles() {
    let mp = table_market();
    let (pp1, pp2) = (producer1(), producer2());
    let n = 200_000usize;
    let mut ns = NoiseStream::new(7);
    let state = MarketState { t: 0, p: 45.0, x: 15.0 };
    let mut draws = Vec::with_capacity(n);
    for path in 0..n {
        let d = ns.stage_draws(path as u64, 0);
        draws.push(step(&state, Regime::new(0, 0), &mp, &pp1, &pp2, d.eps_p, d.eps_perp).p);
    }
    let quantiles = [
        (0.05, 39.552525786456123),
        (0.25, 42.68088494215236),
        (0.50, 44.999999999999993),
        (0.75, 47.445126846469748),
        (0.95, 51.197741730400828),
    ];
    for (q, point) in quantiles {
        let below = draws.iter().filter(|p| **p <= point).count() as f64 / n as f64;
        let tol = 4.0 * (q * (1.0 - q) / n as f64).sqrt();
        assert!(
            (below - q).abs() <= tol,
            "F({point}) = {below}, want {q} +- {tol}"
        );
    }
}

#[test]
fn simulated_increments_carry_the_configured_correlation() {
    let mp = table_market();
    let (pp1, pp2) = (producer1(), producer2());
    let n = 200_000usize;
    let mut ns = NoiseStream::new(11);
    let state = MarketState { t: 0, p: 45.0, x: 15.0 };
    let mut dls = Vec::with_capacity(n);
    for path in 0..n {
        let d = ns.stage_draws(path as u64, 0);
        let next = step(&state, Regime::new(1, 1), &mp, &pp1, &pp2, d.eps_p, d.eps_perp);
        dls.push(((next.p / state.p).ln(), (next.x / state.x).ln()));
    }
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| dls.iter().map(f).sum::<f64>() / n as f64;
    let mp_ = mean(&|d| d.0);
    let mx_ = mean(&|d| d.1);
    let cov = mean(&|d| (d.0 - mp_) * (d.1 - mx_));
    let vp = mean(&|d| (d.0 - mp_) * (d.0 - mp_));
    let vx = mean(&|d| (d.1 - mx_) * (d.1 - mx_));
    let corr = cov / (vp * vx).sqrt();
    let tol = 4.0 * (1.0 - 0.6f64 * 0.6) / (n as f64).sqrt();
    assert!(
        (corr - 0.6).abs() <= tol,
        "empirical correlation {corr}, want 0.6 +- {tol}"
    );
}

#[test]
fn streams_are_addressable_and_seed_separated() {
    let mut a = NoiseStream::new(123);
    let mut b = NoiseStream::new(123);
    // Query b in scrambled order; every block must agree with a.
    let addresses = [(0u64, 0usize), (5, 3), (2, 25), (5, 4), (0, 1)];
    let forward: Vec<_> = addresses.iter().map(|(p, t)| a.stage_draws(*p, *t)).collect();
    let mut scrambled: Vec<_> = addresses.iter().enumerate().collect();
    scrambled.reverse();
    for (i, (p, t)) in scrambled {
        let d = b.stage_draws(*p, *t);
        assert_eq!(d.eps_p.to_bits(), forward[i].eps_p.to_bits());
        assert_eq!(d.eps_perp.to_bits(), forward[i].eps_perp.to_bits());
        assert_eq!(d.signal.to_bits(), forward[i].signal.to_bits());
    }
    let mut c = NoiseStream::new(124);
    let d123 = a.stage_draws(0, 0);
    let d124 = c.stage_draws(0, 0);
    assert_ne!(d123.eps_p.to_bits(), d124.eps_p.to_bits());
    // Neighbour addresses do not share draws.
    let d01 = a.stage_draws(0, 1);
    let d10 = a.stage_draws(1, 0);
    assert_ne!(d01.eps_p.to_bits(), d10.eps_p.to_bits());
}

#[test]
fn normal_inverse_matches_reference_points() {
    let cases = [
        (0.025, -1.9599639845400538),
        (0.1, -1.2815515655446008),
        (0.5, 0.0),
        (0.9, 1.2815515655446008),
        (0.975, 1.9599639845400536),
        (0.9999, 3.7190164854557084),
        (1e-6, -4.7534243088228987),
    ];
    for (p, want) in cases {
        let got = inv_norm_cdf(p);
        assert!(
            (got - want).abs() <= 1e-9,
            "inv_norm_cdf({p}) = {got}, want {want}"
        );
    }
    // Antisymmetry around the median.
    for p in [0.001, 0.123, 0.4] {
        let lo = inv_norm_cdf(p);
        let hi = inv_norm_cdf(1.0 - p);
        assert!((lo + hi).abs() <= 1e-12);
    }
}

#[test]
fn unit_uniforms_stay_inside_the_open_interval() {
    assert!(uniform_from_u64(0) > 0.0);
    assert!(uniform_from_u64(u64::MAX) < 1.0);
    let mid = uniform_from_u64(1u64 << 63);
    assert!((mid - 0.5).abs() < 1e-9);
}

#[test]
fn regime_indexing_round_trips() {
    for z in Regime::ALL {
        assert_eq!(Regime::from_index(z.index()), z);
    }
    assert_eq!(Regime::new(1, 0).index(), 2);
    assert_eq!(Regime::new(0, 1).apply_actions(1, 1), Regime::new(1, 0));
    assert_eq!(Regime::new(1, 1).apply_actions(0, 0), Regime::new(1, 1));
    assert_eq!(Regime::new(1, 0).of_player(0), 1);
    assert_eq!(Regime::new(1, 0).of_player(1), 0);
}
