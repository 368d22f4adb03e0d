//! Simulation lab for studying what happens to a generative model that is
//! repeatedly retrained on its own curated output, when some of the curators
//! are adversarial.
//!
//! The crate models a population as a finite-support distribution, curates
//! samples through a best-of-K pairwise-preference rule, fits linear reward
//! models from pairwise comparisons, mounts label-flip attacks against those
//! models, and iterates the whole pipeline while monitoring closed-form
//! safety bounds on the curated population's expected reward.
//!
//! Modules:
//! - [`dist`]: finite-support distributions, reward functions, and their
//!   exponential-reward moments.
//! - [`curation`]: best-of-K choice rules, exact and Monte Carlo curation
//!   updates, and the bound monitors.
//! - [`preference`]: pairwise preference datasets and reward-model fitting.
//! - [`attack`]: label-flip attacks (gradient-based, heuristic, Pareto-pool,
//!   random) against a fitted reward model.
//! - [`sim`]: benchmark environments and the full retraining loop.
//! - [`cli`]: experiment-spec parsing and the batch runners behind the
//!   `curation-lab` binary.

pub mod attack;
pub mod cli;
pub mod curation;
pub mod dist;
pub mod error;
pub mod preference;
pub mod sim;

pub use error::{Error, Result};
