//! Flat key-value run configuration.
//!
//! The format is plain text, one `section.key = value` assignment per
//! line, with `#` comments. Sections are `market`, `producer1`,
//! `producer2`, `engine`, and `output`. Every key has a default, so an
//! empty file is a valid configuration; unknown keys are rejected so
//! typos cannot silently fall back to defaults. `canonical` renders the
//! configuration with a fixed key order, and parsing its own output
//! reproduces the configuration exactly.

use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::lsmc::{AnteriorPolicy, BasisSpec};
use crate::market::{MarketParams, ProducerParams};
use crate::stage_game::LawSpec;

/// Which engine(s) a command should run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineChoice {
    Mca,
    Lsmc,
    Both,
}

impl EngineChoice {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "mca" => Ok(EngineChoice::Mca),
            "lsmc" => Ok(EngineChoice::Lsmc),
            "both" => Ok(EngineChoice::Both),
            other => Err(Error::config(format!(
                "unknown engine `{other}`; expected mca, lsmc, or both"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EngineChoice::Mca => "mca",
            EngineChoice::Lsmc => "lsmc",
            EngineChoice::Both => "both",
        }
    }

    pub fn runs_mca(self) -> bool {
        matches!(self, EngineChoice::Mca | EngineChoice::Both)
    }

    pub fn runs_lsmc(self) -> bool {
        matches!(self, EngineChoice::Lsmc | EngineChoice::Both)
    }
}

/// Complete description of one run: market, producers, engine knobs,
/// and output location.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub market: MarketParams,
    pub producer1: ProducerParams,
    pub producer2: ProducerParams,
    pub engine: EngineChoice,
    pub law: LawSpec,
    /// Lattice nodes per axis and half-width in stationary standard
    /// deviations.
    pub grid_np: usize,
    pub grid_nx: usize,
    pub grid_span: f64,
    pub paths: usize,
    pub outer_iters: usize,
    pub anterior: AnteriorPolicy,
    pub basis: BasisSpec,
    pub seed: u64,
    pub payoff_cap: f64,
    pub out_dir: PathBuf,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            market: MarketParams {
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
            },
            producer1: ProducerParams {
                output_rate: 1.0,
                allowance_rate: 2.0,
                fixed_cost: 10.0,
                impact: 8.0,
                switch_on_cost: 0.2,
                switch_off_cost: 0.2,
            },
            producer2: ProducerParams {
                output_rate: 2.0,
                allowance_rate: 1.0,
                fixed_cost: 80.0,
                impact: 4.0,
                switch_on_cost: 0.2,
                switch_off_cost: 0.2,
            },
            engine: EngineChoice::Lsmc,
            law: LawSpec::Utilitarian { w1: 1.0, w2: 1.0 },
            grid_np: 141,
            grid_nx: 141,
            grid_span: 4.0,
            paths: 40_000,
            outer_iters: 3,
            anterior: AnteriorPolicy::Myopic,
            basis: BasisSpec::standard(),
            seed: 1,
            payoff_cap: 1e6,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Law names accepted by configs and the command line.
pub fn parse_law(name: &str, w1: f64, w2: f64) -> Result<LawSpec, Error> {
    let law = match name {
        "utilitarian" => LawSpec::Utilitarian { w1, w2 },
        "egalitarian" => LawSpec::Egalitarian,
        "preferential-1" => LawSpec::Preferential(1),
        "preferential-2" => LawSpec::Preferential(2),
        "green" => LawSpec::Green,
        "lex-first" => LawSpec::LexFirst,
        other => {
            return Err(Error::config(format!(
                "unknown law `{other}`; expected utilitarian, egalitarian, \
                 preferential-1, preferential-2, green, or lex-first"
            )))
        }
    };
    law.validate()?;
    Ok(law)
}

fn law_weights(law: &LawSpec) -> (f64, f64) {
    match law {
        LawSpec::Utilitarian { w1, w2 } => (*w1, *w2),
        _ => (1.0, 1.0),
    }
}

impl ModelConfig {
    /// Parses a configuration text, starting from defaults.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut cfg = ModelConfig::default();
        let (mut law_name, (mut w1, mut w2)) =
            (cfg.law.name().to_string(), law_weights(&cfg.law));
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.assign(key, value, &mut law_name, &mut w1, &mut w2)
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.law = parse_law(&law_name, w1, w2)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        ModelConfig::parse(&text)
    }

    fn assign(
        &mut self,
        key: &str,
        value: &str,
        law_name: &mut String,
        w1: &mut f64,
        w2: &mut f64,
    ) -> Result<(), Error> {
        let f = |v: &str| -> Result<f64, Error> {
            v.parse::<f64>()
                .map_err(|_| Error::config(format!("`{v}` is not a number")))
        };
        let u = |v: &str| -> Result<usize, Error> {
            v.parse::<usize>()
                .map_err(|_| Error::config(format!("`{v}` is not a nonnegative integer")))
        };
        let b = |v: &str| -> Result<bool, Error> {
            v.parse::<bool>()
                .map_err(|_| Error::config(format!("`{v}` is not true or false")))
        };
        match key {
            "market.kappa_p" => self.market.kappa_p = f(value)?,
            "market.kappa_x" => self.market.kappa_x = f(value)?,
            "market.sigma_p" => self.market.sigma_p = f(value)?,
            "market.sigma_x" => self.market.sigma_x = f(value)?,
            "market.rho" => self.market.rho = f(value)?,
            "market.pbar" => self.market.pbar = f(value)?,
            "market.xbar" => self.market.xbar = f(value)?,
            "market.p0" => self.market.p0 = f(value)?,
            "market.x0" => self.market.x0 = f(value)?,
            "market.dt" => self.market.dt = f(value)?,
            "market.periods" => self.market.periods = u(value)?,
            "market.sqrt_dt_scaling" => self.market.sqrt_dt_scaling = b(value)?,
            "producer1.output_rate" => self.producer1.output_rate = f(value)?,
            "producer1.allowance_rate" => self.producer1.allowance_rate = f(value)?,
            "producer1.fixed_cost" => self.producer1.fixed_cost = f(value)?,
            "producer1.impact" => self.producer1.impact = f(value)?,
            "producer1.switch_on_cost" => self.producer1.switch_on_cost = f(value)?,
            "producer1.switch_off_cost" => self.producer1.switch_off_cost = f(value)?,
            "producer2.output_rate" => self.producer2.output_rate = f(value)?,
            "producer2.allowance_rate" => self.producer2.allowance_rate = f(value)?,
            "producer2.fixed_cost" => self.producer2.fixed_cost = f(value)?,
            "producer2.impact" => self.producer2.impact = f(value)?,
            "producer2.switch_on_cost" => self.producer2.switch_on_cost = f(value)?,
            "producer2.switch_off_cost" => self.producer2.switch_off_cost = f(value)?,
            "engine.kind" => self.engine = EngineChoice::parse(value)?,
            "engine.law" => *law_name = value.to_string(),
            "engine.law_w1" => *w1 = f(value)?,
            "engine.law_w2" => *w2 = f(value)?,
            "engine.grid_np" => self.grid_np = u(value)?,
            "engine.grid_nx" => self.grid_nx = u(value)?,
            "engine.grid_span" => self.grid_span = f(value)?,
            "engine.paths" => self.paths = u(value)?,
            "engine.outer_iters" => self.outer_iters = u(value)?,
            "engine.anterior" => self.anterior = AnteriorPolicy::parse(value)?,
            "engine.basis" => self.basis = BasisSpec::parse(value)?,
            "engine.seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::config(format!("`{value}` is not a u64 seed")))?
            }
            "engine.payoff_cap" => self.payoff_cap = f(value)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Validates every parameter group.
    pub fn validate(&self) -> Result<(), Error> {
        self.market.validate()?;
        self.producer1.validate()?;
        self.producer2.validate()?;
        self.law.validate()?;
        if self.grid_np < 3 || self.grid_nx < 3 {
            return Err(Error::config("grid sizes must be at least 3 nodes per axis"));
        }
        if !(self.grid_span > 0.0) || !self.grid_span.is_finite() {
            return Err(Error::config("grid_span must be positive and finite"));
        }
        if self.basis.is_empty() {
            return Err(Error::config("basis must contain at least one term"));
        }
        if self.paths < self.basis.len() {
            return Err(Error::config(format!(
                "paths ({}) must be at least the basis size ({})",
                self.paths,
                self.basis.len()
            )));
        }
        if self.outer_iters == 0 {
            return Err(Error::config("outer_iters must be at least 1"));
        }
        if !(self.payoff_cap > 0.0) || !self.payoff_cap.is_finite() {
            return Err(Error::config("payoff_cap must be positive and finite"));
        }
        Ok(())
    }

    /// Renders the configuration in canonical key order. Parsing the
    /// result reproduces this configuration.
    pub fn canonical(&self) -> String {
        let m = &self.market;
        let (w1, w2) = law_weights(&self.law);
        let pp = |name: &str, p: &ProducerParams| {
            format!(
                "{name}.output_rate = {}\n{name}.allowance_rate = {}\n\
                 {name}.fixed_cost = {}\n{name}.impact = {}\n\
                 {name}.switch_on_cost = {}\n{name}.switch_off_cost = {}\n",
                p.output_rate,
                p.allowance_rate,
                p.fixed_cost,
                p.impact,
                p.switch_on_cost,
                p.switch_off_cost
            )
        };
        format!(
            "market.kappa_p = {}\nmarket.kappa_x = {}\nmarket.sigma_p = {}\n\
             market.sigma_x = {}\nmarket.rho = {}\nmarket.pbar = {}\n\
             market.xbar = {}\nmarket.p0 = {}\nmarket.x0 = {}\nmarket.dt = {}\n\
             market.periods = {}\nmarket.sqrt_dt_scaling = {}\n{}{}\
             engine.kind = {}\nengine.law = {}\nengine.law_w1 = {}\n\
             engine.law_w2 = {}\nengine.grid_np = {}\nengine.grid_nx = {}\n\
             engine.grid_span = {}\nengine.paths = {}\nengine.outer_iters = {}\n\
             engine.anterior = {}\nengine.basis = {}\nengine.seed = {}\nengine.payoff_cap = {}\n\
             output.dir = {}\n",
            m.kappa_p,
            m.kappa_x,
            m.sigma_p,
            m.sigma_x,
            m.rho,
            m.pbar,
            m.xbar,
            m.p0,
            m.x0,
            m.dt,
            m.periods,
            m.sqrt_dt_scaling,
            pp("producer1", &self.producer1),
            pp("producer2", &self.producer2),
            self.engine.name(),
            self.law.name(),
            w1,
            w2,
            self.grid_np,
            self.grid_nx,
            self.grid_span,
            self.paths,
            self.outer_iters,
            self.anterior.name(),
            self.basis.canonical(),
            self.seed,
            self.payoff_cap,
            self.out_dir.display()
        )
    }
}
