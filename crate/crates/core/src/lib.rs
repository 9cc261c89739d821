//! Solver for a two-producer stochastic switching game on a shared
//! emissions market.
//!
//! Two electricity producers choose, period by period, whether to run.
//! Running earns the clean spread between the electricity price and the
//! producer's allowance cost, but lifts the mean level of the allowance
//! price for both players, so each producer's decision feeds back into the
//! other's profitability. At every stage the pair of switch/stay decisions
//! forms a 2x2 bimatrix game whose payoffs are continuation values; the
//! solver computes the backward recursion of correlated equilibria under a
//! configurable selection law, with two interchangeable numerical engines:
//!
//! * a lattice engine that discretizes the two log prices into a Markov
//!   chain with matched local moments, and
//! * a regression Monte Carlo engine that fits continuation values on
//!   simulated paths.
//!
//! The crate also ships a small CLI (`switchgame`) for comparing
//! correlation laws, mapping stage-game classifications over the price
//! plane, and sampling equilibrium paths.

pub mod cli;
pub mod config;
pub mod error;
pub mod lsmc;
pub mod market;
pub mod matrix_game;
pub mod mca;
pub mod noise;
pub mod report;
pub mod single_switch;
pub mod stage_game;

pub use error::Error;
