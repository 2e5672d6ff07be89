//! Optimistic min-max planning against an IPM discriminator under a learned
//! model: exact best responses plus a game-solving outer loop.

mod knr;
mod tabular;

use serde::{Deserialize, Serialize};

use crate::discriminator::MmdUpdate;
use crate::error::{Error, Result};

pub use knr::{best_response_knr, nominal_rollout, solve_minmax_knr, KnrSolution, SearchConfig};
pub use tabular::{best_response_tabular, solve_minmax_tabular, TabularSolution, WitnessClass};

/// How iterates are combined into the returned mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Running averages with weight `1/k`; each player responds to the
    /// other's average.
    Harmonic,
    /// Each player responds to the other's latest iterate; the output is
    /// still the uniform mixture of all learner iterates.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    FrankWolfe,
    /// Multiplicative weights over an explicit finite witness class.
    MwFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinMaxConfig {
    /// Outer iterations `K`.
    pub iterations: usize,
    pub averaging: Averaging,
    pub solver: Solver,
    pub mw_learning_rate: f64,
    /// Stop once the certified duality gap falls below this.
    pub tolerance: f64,
    /// Witness update for MMD classes; `None` plays the exact best response.
    pub mmd_update: Option<MmdUpdate>,
}

impl Default for MinMaxConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            averaging: Averaging::Harmonic,
            solver: Solver::FrankWolfe,
            mw_learning_rate: 0.5,
            tolerance: 1e-3,
            mmd_update: None,
        }
    }
}

impl MinMaxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("min-max iterations K must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("min-max tolerance must be positive"));
        }
        if !(self.mw_learning_rate > 0.0) {
            return Err(Error::config("multiplicative-weights learning rate must be positive"));
        }
        Ok(())
    }
}

/// Mixture weights over a growing list of distinct iterates.
#[derive(Debug, Clone)]
pub(crate) struct Mixture<P> {
    pub items: Vec<P>,
    pub weights: Vec<f64>,
}

impl<P> Default for Mixture<P> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            weights: Vec::new(),
        }
    }
}

impl<P: PartialEq> Mixture<P> {
    /// `w ← (1−γ) w + γ e_p`.
    pub fn step(&mut self, p: P, gamma: f64) -> usize {
        self.weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
        match self.items.iter().position(|q| *q == p) {
            Some(i) => {
                self.weights[i] += gamma;
                i
            }
            None => {
                self.items.push(p);
                self.weights.push(gamma);
                self.items.len() - 1
            }
        }
    }

    /// Weights renormalized to sum to one, with zero entries dropped.
    pub fn normalized(&self) -> Vec<(f64, &P)> {
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .zip(&self.items)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, p)| (w / total, p))
            .collect()
    }
}
