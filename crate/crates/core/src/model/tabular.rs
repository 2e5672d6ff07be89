use super::buffer::TabularBuffer;
use super::CalibratedModel;
use crate::env::{TabularDynamics, TransitionKernel};
use crate::error::{Error, Result};

/// Count-based kernel estimate with a per-pair ℓ₁ uncertainty radius.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    kernel: TransitionKernel,
    sigma: Vec<f64>,
    horizon: usize,
    initial_state: usize,
}

impl TabularModel {
    /// A model with an externally supplied uncertainty table `[s][a]`.
    pub fn with_uncertainty(
        kernel: TransitionKernel,
        sigma: Vec<f64>,
        horizon: usize,
        initial_state: usize,
    ) -> Result<Self> {
        if sigma.len() != kernel.num_states() * kernel.num_actions() {
            return Err(Error::invalid("uncertainty table has the wrong size"));
        }
        if sigma.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("uncertainty must be nonnegative"));
        }
        if initial_state >= kernel.num_states() {
            return Err(Error::invalid("initial state out of range"));
        }
        Ok(Self {
            kernel,
            sigma,
            horizon,
            initial_state,
        })
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    /// `σ̂` as a flat `[s][a]` table.
    pub fn uncertainty_table(&self) -> &[f64] {
        &self.sigma
    }
}

impl TabularDynamics for TabularModel {
    fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn next_state_dist(&self, _h: usize, s: usize, a: usize) -> &[f64] {
        self.kernel.row(s, a)
    }
}

impl CalibratedModel for TabularModel {
    type State = usize;

    fn uncertainty(&self, s: &usize, a: usize) -> f64 {
        self.sigma[s * self.kernel.num_actions() + a]
    }
}

/// `min{ sqrt(S ln(t² S A / δ) / n), 2 }`, and 2 for unvisited pairs.
pub fn tabular_radius(num_states: usize, num_actions: usize, n: u64, t: usize, delta: f64) -> f64 {
    if n == 0 {
        return 2.0;
    }
    let (s, a, t) = (num_states as f64, num_actions as f64, t as f64);
    let log_term = (t * t * s * a / delta).ln();
    (s * log_term / n as f64).sqrt().min(2.0)
}

/// Empirical kernel `N(s,a,s')/N(s,a)` (uniform rows where `N(s,a) = 0`).
pub fn fit_tabular(
    buffer: &TabularBuffer,
    horizon: usize,
    initial_state: usize,
    t: usize,
    delta: f64,
) -> Result<TabularModel> {
    if t == 0 {
        return Err(Error::config("model iteration index t must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("failure probability {delta} not in (0, 1)")));
    }
    let (ns, na) = (buffer.num_states(), buffer.num_actions());
    let mut probs = Vec::with_capacity(ns * na * ns);
    let mut sigma = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let n = buffer.count(s, a);
            if n == 0 {
                probs.extend(std::iter::repeat_n(1.0 / ns as f64, ns));
            } else {
                probs.extend((0..ns).map(|sn| buffer.count_next(s, a, sn) as f64 / n as f64));
            }
            sigma.push(tabular_radius(ns, na, n, t, delta));
        }
    }
    TabularModel::with_uncertainty(TransitionKernel::new(ns, na, probs)?, sigma, horizon, initial_state)
}
