//! Model-based imitation learning from state-only demonstrations.
//!
//! The crate learns a calibrated dynamics model from its own rollouts, turns
//! the model's uncertainty into an optimism bonus, and plans against an
//! integral-probability-metric discriminator that compares learner and
//! expert state distributions. It also ships the bandit hard-instance
//! experiment and numerical checks for the supporting lemmas.

pub mod env;
pub mod discriminator;
pub mod error;
pub mod experiment;
pub mod expert;
pub mod instances;
pub mod mab;
pub mod mobile;
pub mod model;
pub mod planner;
pub mod verify;
mod search;

pub use error::{Error, Result};
