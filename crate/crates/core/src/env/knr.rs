//! Kernelized nonlinear regulator: `s' = W* φ(s, a) + N(0, σ² I)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::policy::{MixedPolicy, Policy};
use super::{rollout, Environment, Trajectory};
use crate::error::{Error, Result};

/// Tolerance on the unit-norm feature requirement.
const FEATURE_NORM_TOL: f64 = 1e-9;

type FeatureFn = dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync;
type CostFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// State-action feature maps with `‖φ(s, a)‖₂ ≤ 1`.
#[derive(Clone)]
pub enum FeatureMap {
    /// `e_a ∈ R^A`; the state is ignored.
    OneHotAction { num_actions: usize },
    /// Block `a` of an `A·(d_s + 1)` vector holds
    /// `[tanh(s_1), …, tanh(s_{d_s}), 1] / √(d_s + 1)`; other blocks are zero.
    PerActionTanh { state_dim: usize, num_actions: usize },
    /// User supplied map. Its norm bound is checked on every rollout step.
    Custom { dim: usize, map: Arc<FeatureFn> },
}

impl FeatureMap {
    pub fn custom(
        dim: usize,
        map: impl Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        FeatureMap::Custom {
            dim,
            map: Arc::new(map),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::OneHotAction { num_actions } => *num_actions,
            FeatureMap::PerActionTanh {
                state_dim,
                num_actions,
            } => num_actions * (state_dim + 1),
            FeatureMap::Custom { dim, .. } => *dim,
        }
    }

    pub fn features(&self, state: &DVector<f64>, action: usize) -> DVector<f64> {
        match self {
            FeatureMap::OneHotAction { num_actions } => {
                let mut phi = DVector::zeros(*num_actions);
                phi[action] = 1.0;
                phi
            }
            FeatureMap::PerActionTanh {
                state_dim,
                num_actions,
            } => {
                let block = state_dim + 1;
                let scale = 1.0 / (block as f64).sqrt();
                let mut phi = DVector::zeros(num_actions * block);
                for i in 0..*state_dim {
                    phi[action * block + i] = state[i].tanh() * scale;
                }
                phi[action * block + state_dim] = scale;
                phi
            }
            FeatureMap::Custom { map, .. } => map(state, action),
        }
    }
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::OneHotAction { num_actions } => f
                .debug_struct("OneHotAction")
                .field("num_actions", num_actions)
                .finish(),
            FeatureMap::PerActionTanh {
                state_dim,
                num_actions,
            } => f
                .debug_struct("PerActionTanh")
                .field("state_dim", state_dim)
                .field("num_actions", num_actions)
                .finish(),
            FeatureMap::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

/// State costs; every variant is clamped to `[0, 1]`.
#[derive(Clone)]
pub enum StateCost {
    Constant(f64),
    /// `min(1, ‖s − target‖₂ / scale)`.
    DistanceToTarget { target: DVector<f64>, scale: f64 },
    Custom(Arc<CostFn>),
}

impl StateCost {
    pub fn custom(f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        StateCost::Custom(Arc::new(f))
    }

    pub fn eval(&self, state: &DVector<f64>) -> f64 {
        let raw = match self {
            StateCost::Constant(c) => *c,
            StateCost::DistanceToTarget { target, scale } => (state - target).norm() / scale,
            StateCost::Custom(f) => f(state),
        };
        raw.clamp(0.0, 1.0)
    }
}

impl fmt::Debug for StateCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateCost::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            StateCost::DistanceToTarget { target, scale } => f
                .debug_struct("DistanceToTarget")
                .field("target", &target.as_slice())
                .field("scale", scale)
                .finish(),
            StateCost::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Ground-truth KNR environment.
#[derive(Debug, Clone)]
pub struct KnrSystem {
    features: FeatureMap,
    weights: DMatrix<f64>,
    noise_std: f64,
    horizon: usize,
    num_actions: usize,
    initial_state: DVector<f64>,
    cost: StateCost,
}

impl KnrSystem {
    /// `weights` is `d_s × d`. A zero `noise_std` gives a deterministic system.
    pub fn new(
        features: FeatureMap,
        weights: DMatrix<f64>,
        noise_std: f64,
        horizon: usize,
        num_actions: usize,
        initial_state: DVector<f64>,
        cost: StateCost,
    ) -> Result<Self> {
        if horizon == 0 || num_actions == 0 {
            return Err(Error::invalid("horizon and action count must be positive"));
        }
        if weights.nrows() != initial_state.len() || weights.ncols() != features.dim() {
            return Err(Error::invalid(format!(
                "weights are {}x{}, expected {}x{}",
                weights.nrows(),
                weights.ncols(),
                initial_state.len(),
                features.dim()
            )));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid("noise std must be finite and nonnegative"));
        }
        Ok(Self {
            features,
            weights,
            noise_std,
            horizon,
            num_actions,
            initial_state,
            cost,
        })
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn cost(&self) -> &StateCost {
        &self.cost
    }

    /// Same system with a different noise level.
    pub fn with_noise(&self, noise_std: f64) -> Self {
        Self {
            noise_std,
            ..self.clone()
        }
    }

    /// Checked feature evaluation.
    pub fn phi(&self, state: &DVector<f64>, action: usize) -> Result<DVector<f64>> {
        let phi = self.features.features(state, action);
        if phi.len() != self.features.dim() {
            return Err(Error::invalid("feature map returned a vector of the wrong length"));
        }
        if phi.norm() > 1.0 + FEATURE_NORM_TOL {
            return Err(Error::invalid(format!(
                "feature norm {} exceeds 1 at action {action}",
                phi.norm()
            )));
        }
        Ok(phi)
    }

    /// Noise-free successor `W* φ(s, a)`.
    pub fn nominal_next(&self, state: &DVector<f64>, action: usize) -> Result<DVector<f64>> {
        Ok(&self.weights * self.phi(state, action)?)
    }
}

impl Environment for KnrSystem {
    type State = DVector<f64>;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn initial_state(&self) -> DVector<f64> {
        self.initial_state.clone()
    }

    fn step<R: Rng + ?Sized>(
        &self,
        _h: usize,
        state: &DVector<f64>,
        action: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let mut next = self.nominal_next(state, action)?;
        if self.noise_std > 0.0 {
            for x in next.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x += self.noise_std * z;
            }
        }
        Ok(next)
    }

    fn select_action<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        h: usize,
        _state: &DVector<f64>,
        _rng: &mut R,
    ) -> Result<usize> {
        match policy {
            Policy::OpenLoop(p) => Ok(p.actions()[h]),
            Policy::Tabular(_) => Err(Error::config(
                "tabular policies cannot act in a continuous-state system",
            )),
        }
    }
}

/// Monte-Carlo value estimate with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
}

/// Estimates `E[Σ_{h<H} cost(s_h)]` from `n_rollouts` independent episodes.
pub fn value_eval_mc<R: Rng + ?Sized>(
    system: &KnrSystem,
    policy: &MixedPolicy,
    cost: impl Fn(&DVector<f64>) -> f64,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if n_rollouts < 2 {
        return Err(Error::config("Monte-Carlo evaluation needs at least two rollouts"));
    }
    let returns = (0..n_rollouts)
        .map(|_| {
            let traj = rollout(system, policy.sample_component(rng), rng)?;
            Ok(trajectory_cost(&traj, &cost))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = n_rollouts as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        half_width: 1.96 * (var / n).sqrt(),
    })
}

/// `Σ_{h<H} cost(s_h)` along one trajectory.
pub fn trajectory_cost(traj: &Trajectory<DVector<f64>>, cost: impl Fn(&DVector<f64>) -> f64) -> f64 {
    traj.states[..traj.actions.len()].iter().map(cost).sum()
}
