use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::buffer::ReplayBuffer;
use super::CalibratedModel;
use crate::error::{Error, Result};

/// A candidate mean-dynamics function `g(s, a)`.
pub type Hypothesis = Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>;

/// Members of a finite hypothesis class whose squared loss on the buffer is
/// within `z_t = 2σ²G² ln(2t²|G|/δ)` of the least-squares minimizer.
#[derive(Clone)]
pub struct VersionSpace {
    hypotheses: Vec<Hypothesis>,
    losses: Vec<f64>,
    minimizer: usize,
    threshold: f64,
    survivors: Vec<bool>,
    noise_std: f64,
}

impl fmt::Debug for VersionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VersionSpace")
            .field("size", &self.hypotheses.len())
            .field("losses", &self.losses)
            .field("minimizer", &self.minimizer)
            .field("threshold", &self.threshold)
            .field("survivors", &self.survivors)
            .finish()
    }
}

/// `z_t`.
pub fn version_space_threshold(noise_std: f64, g_bound: f64, class_size: usize, t: usize, delta: f64) -> f64 {
    let t = t as f64;
    2.0 * noise_std * noise_std * g_bound * g_bound * (2.0 * t * t * class_size as f64 / delta).ln()
}

pub fn fit_version_space(
    buffer: &ReplayBuffer<DVector<f64>>,
    hypotheses: &[Hypothesis],
    noise_std: f64,
    g_bound: f64,
    t: usize,
    delta: f64,
) -> Result<VersionSpace> {
    if hypotheses.is_empty() {
        return Err(Error::config("hypothesis class must be nonempty"));
    }
    if t == 0 {
        return Err(Error::config("model iteration index t must be at least 1"));
    }
    if !(noise_std > 0.0) {
        return Err(Error::config("version-space uncertainty needs noise_std > 0"));
    }
    let losses: Vec<f64> = hypotheses
        .iter()
        .map(|g| {
            buffer
                .iter()
                .map(|tr| (g(&tr.state, tr.action) - &tr.next).norm_squared())
                .sum()
        })
        .collect();
    let minimizer = (0..losses.len())
        .fold(0, |best, i| if losses[i] < losses[best] { i } else { best });
    let threshold = version_space_threshold(noise_std, g_bound, hypotheses.len(), t, delta);
    // Excess loss is measured against the minimizer's own predictions,
    // Σ‖g − ĝ‖² over the buffered inputs.
    let g_hat = &hypotheses[minimizer];
    let survivors = hypotheses
        .iter()
        .map(|g| {
            let excess: f64 = buffer
                .iter()
                .map(|tr| (g(&tr.state, tr.action) - g_hat(&tr.state, tr.action)).norm_squared())
                .sum();
            excess <= threshold
        })
        .collect();
    Ok(VersionSpace {
        hypotheses: hypotheses.to_vec(),
        losses,
        minimizer,
        threshold,
        survivors,
        noise_std,
    })
}

impl VersionSpace {
    pub fn minimizer(&self) -> usize {
        self.minimizer
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn survives(&self, i: usize) -> bool {
        self.survivors[i]
    }

    pub fn num_survivors(&self) -> usize {
        self.survivors.iter().filter(|&&b| b).count()
    }

    /// Uncapped `(1/σ) max_{g₁,g₂ surviving} ‖g₁(s,a) − g₂(s,a)‖₂`.
    pub fn disagreement(&self, s: &DVector<f64>, a: usize) -> f64 {
        let preds: Vec<DVector<f64>> = self
            .hypotheses
            .iter()
            .zip(&self.survivors)
            .filter(|(_, &alive)| alive)
            .map(|(g, _)| g(s, a))
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                worst = worst.max((&preds[i] - &preds[j]).norm());
            }
        }
        worst / self.noise_std
    }
}

impl CalibratedModel for VersionSpace {
    type State = DVector<f64>;

    fn uncertainty(&self, s: &DVector<f64>, a: usize) -> f64 {
        self.disagreement(s, a).min(2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn constant(c: f64) -> Hypothesis {
        Arc::new(move |_, _| DVector::from_element(1, c))
    }

    fn data(n: usize, value: f64) -> ReplayBuffer<DVector<f64>> {
        let mut buf = ReplayBuffer::new(0);
        for i in 0..n {
            buf.push(Transition {
                h: 0,
                state: DVector::from_element(1, i as f64),
                action: 0,
                next: DVector::from_element(1, value),
            });
        }
        buf
    }

    #[test]
    fn singleton_class_has_no_uncertainty() {
        let vs = fit_version_space(&data(3, 1.0), &[constant(0.4)], 0.5, 1.0, 1, 0.1).unwrap();
        assert_eq!(vs.uncertainty(&DVector::zeros(1), 0), 0.0);
    }

    #[test]
    fn empty_buffer_keeps_every_member() {
        let g = [constant(0.0), constant(0.3), constant(-0.2)];
        let vs = fit_version_space(&ReplayBuffer::new(0), &g, 0.5, 1.0, 1, 0.1).unwrap();
        assert_eq!(vs.num_survivors(), 3);
        assert!((vs.disagreement(&DVector::zeros(1), 0) - 0.5 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_member_eliminated_exactly_when_error_exceeds_threshold() {
        let (sigma, g_bound, t, delta): (f64, f64, usize, f64) = (0.1, 1.0, 5, 0.1);
        let z = 2.0 * sigma * sigma * g_bound * g_bound * (2.0 * 25.0 * 2.0 / delta).ln();
        // Buffer error of the constant c against zero targets is 100 c².
        let c_edge = (z / 100.0).sqrt();
        for (c, survives) in [(0.9 * c_edge, true), (1.1 * c_edge, false)] {
            let vs = fit_version_space(&data(100, 0.0), &[constant(0.0), constant(c)], sigma, g_bound, t, delta)
                .unwrap();
            assert!((vs.threshold() - z).abs() < 1e-15);
            assert_eq!(vs.minimizer(), 0);
            assert_eq!(vs.survives(1), survives, "c = {c}");
        }
    }

    #[test]
    fn true_member_survives_noisy_data() {
        let (sigma, delta) = (0.3, 0.1);
        let class: Vec<Hypothesis> = (0..8).map(|i| constant(i as f64 * 0.1)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 500;
        let mut misses = 0;
        for _ in 0..trials {
            let mut buf = ReplayBuffer::new(0);
            for _ in 0..30 {
                let z: f64 = rng.sample(StandardNormal);
                buf.push(Transition {
                    h: 0,
                    state: DVector::zeros(1),
                    action: 0,
                    next: DVector::from_element(1, 0.3 + sigma * z),
                });
            }
            let vs = fit_version_space(&buf, &class, sigma, 1.0, 3, delta).unwrap();
            assert!(vs.survives(vs.minimizer()));
            if !vs.survives(3) {
                misses += 1;
            }
        }
        assert!(misses as f64 <= delta * trials as f64, "misses = {misses}");
    }
}
