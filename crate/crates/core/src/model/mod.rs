//! Calibrated dynamics models learned from the replay buffer, and the
//! optimism bonuses derived from their uncertainty.

mod bonus;
mod buffer;
mod knr;
mod tabular;
mod version_space;

use nalgebra::DVector;

pub use bonus::{
    ensemble_bonus, knr_ensemble_bonus, tabular_ensemble_bonus, theory_bonus, theory_bonus_value,
    BonusFunction, BonusMode, TabularRidge,
};
pub use buffer::{ReplayBuffer, TabularBuffer, Transition};
pub use knr::{fit_knr_ridge, knr_uncertainty, KnrModel, KnrModelParams, LinearDynamics};
pub use tabular::{fit_tabular, tabular_radius, TabularModel};
pub use version_space::{fit_version_space, version_space_threshold, Hypothesis, VersionSpace};

/// A learned model with a pointwise uncertainty `σ̂(s, a) ∈ [0, 2]`.
pub trait CalibratedModel {
    type State;
    fn uncertainty(&self, s: &Self::State, a: usize) -> f64;
}

/// Predicts the mean next state (one-hot encoded for finite states).
pub trait MeanModel<S> {
    fn predict_mean(&self, s: &S, a: usize) -> DVector<f64>;
}
