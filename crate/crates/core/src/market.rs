//! Market dynamics for the emissions duopoly: an exogenous electricity price
//! and an allowance price whose mean level responds to the joint production
//! regime.
//!
//! Both prices are mean-reverting in logs. With period length `dt` and
//! standard normal innovations (eps_p, eps_perp),
//!
//! ```text
//! log P' = log P + kappa_p (log Pbar - log P) dt + sigma_p sqrt(dt) eps_p
//! log X' = log X + kappa_x (f(z)   - log X) dt + sigma_x sqrt(dt) eps_x
//! f(z)   = log(Xbar + g1 z1 + g2 z2)
//! eps_x  = rho eps_p + sqrt(1 - rho^2) eps_perp
//! ```
//!
//! The sqrt(dt) shock scaling matches annualized volatility units; it can be
//! disabled (`sqrt_dt_scaling = false`) to read sigma as a per-period
//! standard deviation instead.

use crate::error::Error;

/// Price-process parameters. Rates are per year, prices in currency units,
/// `dt` in years, `periods` counts decision stages.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketParams {
    pub kappa_p: f64,
    pub kappa_x: f64,
    pub sigma_p: f64,
    pub sigma_x: f64,
    pub rho: f64,
    pub pbar: f64,
    pub xbar: f64,
    pub p0: f64,
    pub x0: f64,
    pub dt: f64,
    pub periods: usize,
    pub sqrt_dt_scaling: bool,
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), Error> {
        let checks: [(bool, &str); 9] = [
            (self.sigma_p >= 0.0, "sigma_p must be nonnegative"),
            (self.sigma_x >= 0.0, "sigma_x must be nonnegative"),
            (
                (-1.0..=1.0).contains(&self.rho),
                "rho must lie in [-1, 1]",
            ),
            (self.dt > 0.0, "dt must be positive"),
            (self.periods >= 1, "periods must be at least 1"),
            (self.p0 > 0.0, "p0 must be positive"),
            (self.x0 > 0.0, "x0 must be positive"),
            (self.pbar > 0.0, "pbar must be positive"),
            (self.xbar > 0.0, "xbar must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        let finite = [
            self.kappa_p,
            self.kappa_x,
            self.sigma_p,
            self.sigma_x,
            self.rho,
            self.pbar,
            self.xbar,
            self.p0,
            self.x0,
            self.dt,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("market parameters must be finite"));
        }
        Ok(())
    }

    /// Multiplier applied to sigma for one period's shock.
    pub fn shock_scale(&self) -> f64 {
        if self.sqrt_dt_scaling {
            self.dt.sqrt()
        } else {
            1.0
        }
    }

    /// One-period shock variance of the log price on the given axis.
    pub fn step_variance_p(&self) -> f64 {
        let s = self.sigma_p * self.shock_scale();
        s * s
    }

    pub fn step_variance_x(&self) -> f64 {
        let s = self.sigma_x * self.shock_scale();
        s * s
    }

    /// One-period covariance of the two log increments.
    pub fn step_covariance(&self) -> f64 {
        let sc = self.shock_scale();
        self.rho * (self.sigma_p * sc) * (self.sigma_x * sc)
    }
}

/// Per-producer economics: `output_rate` (a) converts the electricity price
/// into revenue, `allowance_rate` (b) prices carbon input, `fixed_cost` (c)
/// is the per-period cost of running, `impact` (g) lifts the allowance mean
/// level while the producer is on, and the switch costs are charged once at
/// the stage where the regime changes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProducerParams {
    pub output_rate: f64,
    pub allowance_rate: f64,
    pub fixed_cost: f64,
    pub impact: f64,
    pub switch_on_cost: f64,
    pub switch_off_cost: f64,
}

impl ProducerParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.switch_on_cost < 0.0 || self.switch_off_cost < 0.0 {
            return Err(Error::config("switch costs must be nonnegative"));
        }
        let finite = [
            self.output_rate,
            self.allowance_rate,
            self.fixed_cost,
            self.impact,
            self.switch_on_cost,
            self.switch_off_cost,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("producer parameters must be finite"));
        }
        Ok(())
    }

    /// Cost of moving from regime `from` to regime `to`; zero when staying.
    pub fn switch_cost(&self, from: u8, to: u8) -> f64 {
        match (from, to) {
            (0, 1) => self.switch_on_cost,
            (1, 0) => self.switch_off_cost,
            _ => 0.0,
        }
    }
}

/// Joint production regime: each producer is off (0) or on (1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Regime {
    pub zeta1: u8,
    pub zeta2: u8,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime { zeta1: 0, zeta2: 0 },
        Regime { zeta1: 0, zeta2: 1 },
        Regime { zeta1: 1, zeta2: 0 },
        Regime { zeta1: 1, zeta2: 1 },
    ];

    pub fn new(zeta1: u8, zeta2: u8) -> Self {
        debug_assert!(zeta1 <= 1 && zeta2 <= 1);
        Regime { zeta1, zeta2 }
    }

    /// Index in 0..4 with producer 1 in the high bit.
    pub fn index(self) -> usize {
        (self.zeta1 as usize) * 2 + self.zeta2 as usize
    }

    pub fn from_index(i: usize) -> Self {
        debug_assert!(i < 4);
        Regime {
            zeta1: (i >> 1) as u8,
            zeta2: (i & 1) as u8,
        }
    }

    /// Regime reached when the players take actions (j, k), action 1 meaning
    /// a switch of the player's own state.
    pub fn apply_actions(self, j: u8, k: u8) -> Regime {
        Regime {
            zeta1: self.zeta1 ^ j,
            zeta2: self.zeta2 ^ k,
        }
    }

    pub fn of_player(self, player: usize) -> u8 {
        if player == 0 {
            self.zeta1
        } else {
            self.zeta2
        }
    }
}

/// Price pair observed at the start of stage `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarketState {
    pub t: usize,
    pub p: f64,
    pub x: f64,
}

/// Per-unit-time clean spread a p - b x - c, truncated from above at `cap`.
/// Callers multiply by dt to obtain a stage payoff.
pub fn spread(pp: &ProducerParams, p: f64, x: f64, cap: f64) -> f64 {
    (pp.output_rate * p - pp.allowance_rate * x - pp.fixed_cost).min(cap)
}

/// Regime-dependent mean of the log allowance price,
/// log(Xbar + g1 zeta1 + g2 zeta2).
pub fn mean_level(xbar: f64, g1: f64, g2: f64, zeta: Regime) -> Result<f64, Error> {
    let level = xbar + g1 * zeta.zeta1 as f64 + g2 * zeta.zeta2 as f64;
    if level <= 0.0 {
        return Err(Error::config(format!(
            "allowance mean level {level} is not positive for regime ({}, {})",
            zeta.zeta1, zeta.zeta2
        )));
    }
    Ok(level.ln())
}

/// Mean levels for all four regimes, indexed by `Regime::index`.
pub fn mean_levels(
    mp: &MarketParams,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
) -> Result<[f64; 4], Error> {
    let mut out = [0.0; 4];
    for z in Regime::ALL {
        out[z.index()] = mean_level(mp.xbar, pp1.impact, pp2.impact, z)?;
    }
    Ok(out)
}

/// Advances the price pair one period under the given regime. The pair
/// (eps_p, eps_perp) must be independent standard normals; the allowance
/// shock is their rho-correlated combination.
pub fn step(
    state: &MarketState,
    zeta: Regime,
    mp: &MarketParams,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    eps_p: f64,
    eps_perp: f64,
) -> MarketState {
    let scale = mp.shock_scale();
    let f = mean_level(mp.xbar, pp1.impact, pp2.impact, zeta)
        .expect("mean level validated at configuration time");
    let lp = state.p.ln();
    let lx = state.x.ln();
    let eps_x = mp.rho * eps_p + (1.0 - mp.rho * mp.rho).sqrt() * eps_perp;
    let lp_next = lp + mp.kappa_p * (mp.pbar.ln() - lp) * mp.dt + mp.sigma_p * scale * eps_p;
    let lx_next = lx + mp.kappa_x * (f - lx) * mp.dt + mp.sigma_x * scale * eps_x;
    MarketState {
        t: state.t + 1,
        p: lp_next.exp(),
        x: lx_next.exp(),
    }
}
