use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::{CalibratedModel, MeanModel};
use crate::env::FeatureMap;
use crate::error::{Error, Result};

/// Hyperparameters of the ridge confidence-ellipsoid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnrModelParams {
    pub lambda_ridge: f64,
    /// Transition noise σ assumed by the confidence radius.
    pub noise_std: f64,
    /// Prior upper bound on `‖W*‖₂`.
    pub w_max: f64,
    pub delta: f64,
}

impl KnrModelParams {
    /// `λ = σ² / W_max²`.
    pub fn with_matched_ridge(noise_std: f64, w_max: f64, delta: f64) -> Self {
        Self {
            lambda_ridge: noise_std * noise_std / (w_max * w_max),
            noise_std,
            w_max,
            delta,
        }
    }
}

/// Linear mean dynamics `s' ≈ W φ(s, a)`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    features: FeatureMap,
    weights: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(features: FeatureMap, weights: DMatrix<f64>) -> Self {
        Self { features, weights }
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Ridge fit on `buffer`.
    pub fn fit(
        buffer: &ReplayBuffer<DVector<f64>>,
        features: &FeatureMap,
        state_dim: usize,
        lambda_ridge: f64,
    ) -> Result<Self> {
        let (w, _) = fit_knr_ridge(buffer, features, state_dim, lambda_ridge)?;
        Ok(Self::new(features.clone(), w))
    }
}

impl MeanModel<DVector<f64>> for LinearDynamics {
    fn predict_mean(&self, s: &DVector<f64>, a: usize) -> DVector<f64> {
        &self.weights * self.features.features(s, a)
    }
}

/// Ridge regression `Ŵ = (Σ s'φᵀ)(Σ φφᵀ + λI)⁻¹`; returns `(Ŵ, Σ_t)`.
pub fn fit_knr_ridge(
    buffer: &ReplayBuffer<DVector<f64>>,
    features: &FeatureMap,
    state_dim: usize,
    lambda_ridge: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(lambda_ridge > 0.0) {
        return Err(Error::config(format!("lambda_ridge must be positive, got {lambda_ridge}")));
    }
    let d = features.dim();
    let mut cov = DMatrix::identity(d, d) * lambda_ridge;
    let mut cross = DMatrix::zeros(d, state_dim);
    for tr in buffer.iter() {
        if tr.next.len() != state_dim {
            return Err(Error::invalid("buffered state has the wrong dimension"));
        }
        let phi = features.features(&tr.state, tr.action);
        cov.ger(1.0, &phi, &phi, 1.0);
        cross.ger(1.0, &phi, &tr.next, 1.0);
    }
    let chol = cholesky(&cov)?;
    let w = chol.solve(&cross).transpose();
    Ok((w, cov))
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
}

/// Ridge model with the confidence radius
/// `β_t = sqrt(2λW_max² + 8σ²(d_s ln 5 + 2 ln(t²/δ) + ln 4 + ln(det Σ_t / det λI)))`.
#[derive(Debug, Clone)]
pub struct KnrModel {
    mean: LinearDynamics,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det_ratio: f64,
    beta: f64,
    params: KnrModelParams,
    t: usize,
}

impl KnrModel {
    pub fn fit(
        buffer: &ReplayBuffer<DVector<f64>>,
        features: &FeatureMap,
        state_dim: usize,
        params: KnrModelParams,
        t: usize,
    ) -> Result<Self> {
        if t == 0 {
            return Err(Error::config("model iteration index t must be at least 1"));
        }
        if !(params.noise_std > 0.0) {
            return Err(Error::config("the confidence radius needs noise_std > 0"));
        }
        if !(params.delta > 0.0 && params.delta < 1.0) {
            return Err(Error::config(format!("failure probability {} not in (0, 1)", params.delta)));
        }
        let (w, cov) = fit_knr_ridge(buffer, features, state_dim, params.lambda_ridge)?;
        let chol = cholesky(&cov)?;
        let d = cov.nrows() as f64;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let log_det_ratio = log_det - d * params.lambda_ridge.ln();
        let tf = t as f64;
        let sigma2 = params.noise_std * params.noise_std;
        let beta2 = 2.0 * params.lambda_ridge * params.w_max * params.w_max
            + 8.0
                * sigma2
                * (state_dim as f64 * 5f64.ln()
                    + 2.0 * (tf * tf / params.delta).ln()
                    + 4f64.ln()
                    + log_det_ratio);
        Ok(Self {
            mean: LinearDynamics::new(features.clone(), w),
            cov,
            chol,
            log_det_ratio,
            beta: beta2.sqrt(),
            params,
            t,
        })
    }

    pub fn mean(&self) -> &LinearDynamics {
        &self.mean
    }

    pub fn w_hat(&self) -> &DMatrix<f64> {
        self.mean.weights()
    }

    /// `Σ_t = Σ φφᵀ + λI`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ln(det Σ_t / det λI)`.
    pub fn log_det_ratio(&self) -> f64 {
        self.log_det_ratio
    }

    pub fn params(&self) -> &KnrModelParams {
        &self.params
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `‖φ‖²_{Σ_t⁻¹}`.
    pub fn mahalanobis_sq(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&self.chol.solve(phi)).max(0.0)
    }
}

impl MeanModel<DVector<f64>> for KnrModel {
    fn predict_mean(&self, s: &DVector<f64>, a: usize) -> DVector<f64> {
        self.mean.predict_mean(s, a)
    }
}

/// Uncapped `(β_t/σ)·‖φ(s, a)‖_{Σ_t⁻¹}`.
pub fn knr_uncertainty(model: &KnrModel, s: &DVector<f64>, a: usize) -> f64 {
    let phi = model.mean.features().features(s, a);
    model.beta / model.params.noise_std * model.mahalanobis_sq(&phi).sqrt()
}

impl CalibratedModel for KnrModel {
    type State = DVector<f64>;

    fn uncertainty(&self, s: &DVector<f64>, a: usize) -> f64 {
        knr_uncertainty(self, s, a).min(2.0)
    }
}
