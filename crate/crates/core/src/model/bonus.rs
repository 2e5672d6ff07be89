use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, TabularBuffer};
use super::knr::LinearDynamics;
use super::{CalibratedModel, MeanModel};
use crate::env::FeatureMap;
use crate::error::Result;

/// How the optimism bonus is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BonusMode {
    /// `H·min{σ̂, 2}` from the calibrated model.
    Theory,
    /// Scaled disagreement of two bootstrap ridge fits.
    Ensemble,
    /// No bonus.
    Off,
}

type BonusFn<S> = dyn Fn(&S, usize) -> f64 + Send + Sync;

/// Nonnegative bonus `b(s, a)` subtracted from the discriminator cost.
pub struct BonusFunction<S> {
    mode: BonusMode,
    scale: f64,
    delta_d: Option<f64>,
    eval: Option<Arc<BonusFn<S>>>,
}

impl<S> Clone for BonusFunction<S> {
    fn clone(&self) -> Self {
        Self {
            mode: self.mode,
            scale: self.scale,
            delta_d: self.delta_d,
            eval: self.eval.clone(),
        }
    }
}

impl<S> fmt::Debug for BonusFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BonusFunction")
            .field("mode", &self.mode)
            .field("scale", &self.scale)
            .field("delta_d", &self.delta_d)
            .finish()
    }
}

impl<S> BonusFunction<S> {
    /// `b ≡ 0`; evaluation never touches a model.
    pub fn zero() -> Self {
        Self {
            mode: BonusMode::Off,
            scale: 0.0,
            delta_d: None,
            eval: None,
        }
    }

    pub fn mode(&self) -> BonusMode {
        self.mode
    }

    /// `H` in theory mode, `λ_bonus` in ensemble mode.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Largest ensemble disagreement on the buffer (ensemble mode only).
    pub fn delta_d(&self) -> Option<f64> {
        self.delta_d
    }

    pub fn eval(&self, s: &S, a: usize) -> f64 {
        match &self.eval {
            Some(f) => f(s, a),
            None => 0.0,
        }
    }
}

impl BonusFunction<usize> {
    /// Bonus as a flat `[s][a]` table.
    pub fn table(&self, num_states: usize, num_actions: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states * num_actions];
        if self.eval.is_some() {
            for s in 0..num_states {
                for a in 0..num_actions {
                    out[s * num_actions + a] = self.eval(&s, a);
                }
            }
        }
        out
    }
}

/// `H·min{σ, 2}`.
pub fn theory_bonus_value(sigma: f64, horizon: usize) -> f64 {
    horizon as f64 * sigma.min(2.0)
}

pub fn theory_bonus<M>(model: Arc<M>, horizon: usize) -> BonusFunction<M::State>
where
    M: CalibratedModel + Send + Sync + 'static,
{
    BonusFunction {
        mode: BonusMode::Theory,
        scale: horizon as f64,
        delta_d: None,
        eval: Some(Arc::new(move |s, a| theory_bonus_value(model.uncertainty(s, a), horizon))),
    }
}

/// `λ_bonus · min(1, δ(s,a)/δ_D)` with `δ = ‖mean_a − mean_b‖₂` and `δ_D`
/// its maximum over buffered pairs. `δ_D = 0` gives the zero bonus.
pub fn ensemble_bonus<S, Ma, Mb>(
    model_a: Arc<Ma>,
    model_b: Arc<Mb>,
    buffer: &ReplayBuffer<S>,
    lambda_bonus: f64,
) -> BonusFunction<S>
where
    S: Clone + 'static,
    Ma: MeanModel<S> + Send + Sync + 'static,
    Mb: MeanModel<S> + Send + Sync + 'static,
{
    let delta_d = buffer
        .iter()
        .map(|tr| {
            (model_a.predict_mean(&tr.state, tr.action) - model_b.predict_mean(&tr.state, tr.action)).norm()
        })
        .fold(0.0, f64::max);
    let eval: Option<Arc<BonusFn<S>>> = if delta_d > 0.0 {
        Some(Arc::new(move |s: &S, a: usize| {
            let d = (model_a.predict_mean(s, a) - model_b.predict_mean(s, a)).norm();
            lambda_bonus * (d / delta_d).min(1.0)
        }))
    } else {
        None
    };
    BonusFunction {
        mode: BonusMode::Ensemble,
        scale: lambda_bonus,
        delta_d: Some(delta_d),
        eval,
    }
}

/// Ridge regression of the one-hot next state on one-hot `(s, a)` features.
/// With diagonal design the solution is `N(s,a,·)/(N(s,a) + λ)`.
#[derive(Debug, Clone)]
pub struct TabularRidge {
    num_states: usize,
    num_actions: usize,
    weights: Vec<f64>,
}

impl TabularRidge {
    pub fn fit(
        transitions: impl IntoIterator<Item = (usize, usize, usize)>,
        num_states: usize,
        num_actions: usize,
        lambda_ridge: f64,
    ) -> Self {
        let mut sas = vec![0.0; num_states * num_actions * num_states];
        let mut sa = vec![0.0; num_states * num_actions];
        for (s, a, n) in transitions {
            sa[s * num_actions + a] += 1.0;
            sas[(s * num_actions + a) * num_states + n] += 1.0;
        }
        for (i, row) in sas.chunks_mut(num_states).enumerate() {
            row.iter_mut().for_each(|v| *v /= sa[i] + lambda_ridge);
        }
        Self {
            num_states,
            num_actions,
            weights: sas,
        }
    }
}

impl MeanModel<usize> for TabularRidge {
    fn predict_mean(&self, s: &usize, a: usize) -> DVector<f64> {
        let i = (s * self.num_actions + a) * self.num_states;
        DVector::from_column_slice(&self.weights[i..i + self.num_states])
    }
}

/// Indices of a bootstrap resample of size `n`.
fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Two bootstrap [`TabularRidge`] fits combined by [`ensemble_bonus`].
pub fn tabular_ensemble_bonus<R: Rng + ?Sized>(
    buffer: &TabularBuffer,
    lambda_ridge: f64,
    lambda_bonus: f64,
    rng: &mut R,
) -> BonusFunction<usize> {
    let (ns, na) = (buffer.num_states(), buffer.num_actions());
    let n = buffer.len();
    let fit = |rng: &mut R| {
        let idx = bootstrap_indices(n, rng);
        let inner = buffer.buffer();
        TabularRidge::fit(
            idx.iter().map(|&i| {
                let tr = inner.get(i).expect("index within buffer");
                (tr.state, tr.action, tr.next)
            }),
            ns,
            na,
            lambda_ridge,
        )
    };
    let a = fit(rng);
    let b = fit(rng);
    ensemble_bonus(Arc::new(a), Arc::new(b), buffer.buffer(), lambda_bonus)
}

/// Two bootstrap ridge fits on continuous states combined by [`ensemble_bonus`].
pub fn knr_ensemble_bonus<R: Rng + ?Sized>(
    buffer: &ReplayBuffer<DVector<f64>>,
    features: &FeatureMap,
    state_dim: usize,
    lambda_ridge: f64,
    lambda_bonus: f64,
    rng: &mut R,
) -> Result<BonusFunction<DVector<f64>>> {
    let n = buffer.len();
    let fit = |rng: &mut R| {
        let mut resample = ReplayBuffer::new(0);
        for i in bootstrap_indices(n, rng) {
            resample.push(buffer.get(i).expect("index within buffer").clone());
        }
        LinearDynamics::fit(&resample, features, state_dim, lambda_ridge)
    };
    let a = fit(rng)?;
    let b = fit(rng)?;
    Ok(ensemble_bonus(Arc::new(a), Arc::new(b), buffer, lambda_bonus))
}
