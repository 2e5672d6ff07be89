//! IPM witness classes and their best responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed witness function `f: S → R`.
pub trait Discriminator<S> {
    fn eval(&self, s: &S) -> f64;
}

/// Tabular witness `f ∈ [0, 1]^S`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDiscriminator {
    values: Vec<f64>,
}

impl BoxDiscriminator {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("box discriminator values must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    pub fn zero(num_states: usize) -> Self {
        Self {
            values: vec![0.0; num_states],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Discriminator<usize> for BoxDiscriminator {
    fn eval(&self, s: &usize) -> f64 {
        self.values[*s]
    }
}

fn check_same_support(d_pi: &[f64], d_e: &[f64]) -> Result<()> {
    if d_pi.len() != d_e.len() {
        return Err(Error::invalid(format!(
            "distributions over {} and {} states",
            d_pi.len(),
            d_e.len()
        )));
    }
    Ok(())
}

/// Best box witness `f*[s] = 1{d_pi(s) > d_e(s)}` and its value
/// `Σ_s (d_pi(s) − d_e(s))₊`, the total-variation distance.
pub fn tv_best_response(d_pi: &[f64], d_e: &[f64]) -> Result<(BoxDiscriminator, f64)> {
    check_same_support(d_pi, d_e)?;
    let mut value = 0.0;
    let values = d_pi
        .iter()
        .zip(d_e)
        .map(|(p, e)| {
            if p > e {
                value += p - e;
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((BoxDiscriminator { values }, value))
}

/// `E_{d_pi}[f] − (1/|D_e|) Σ_i f(s_i)`.
pub fn ipm_eval(disc: &BoxDiscriminator, d_pi: &[f64], expert_states: &[usize]) -> Result<f64> {
    if d_pi.len() != disc.values.len() {
        return Err(Error::invalid("discriminator and distribution sizes differ"));
    }
    if expert_states.is_empty() {
        return Err(Error::invalid("expert sample is empty"));
    }
    let learner: f64 = d_pi.iter().zip(&disc.values).map(|(p, f)| p * f).sum();
    Ok(learner - sample_mean(disc, expert_states))
}

/// `E_{d_pi}[f] − E_{d_e}[f]` for two explicit distributions.
pub fn ipm_eval_dist(disc: &BoxDiscriminator, d_pi: &[f64], d_e: &[f64]) -> Result<f64> {
    check_same_support(d_pi, d_e)?;
    if d_pi.len() != disc.values.len() {
        return Err(Error::invalid("discriminator and distribution sizes differ"));
    }
    Ok(d_pi
        .iter()
        .zip(d_e)
        .zip(&disc.values)
        .map(|((p, e), f)| (p - e) * f)
        .sum())
}

/// Difference of sample means of `f` between learner and expert samples.
pub fn ipm_eval_samples<S, D: Discriminator<S> + ?Sized>(disc: &D, learner: &[S], expert: &[S]) -> f64 {
    sample_mean(disc, learner) - sample_mean(disc, expert)
}

fn sample_mean<S, D: Discriminator<S> + ?Sized>(disc: &D, states: &[S]) -> f64 {
    states.iter().map(|s| disc.eval(s)).sum::<f64>() / states.len() as f64
}

/// Explicit finite witness class of box functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteClass {
    members: Vec<BoxDiscriminator>,
}

impl FiniteClass {
    pub fn new(members: Vec<BoxDiscriminator>) -> Result<Self> {
        let n = members.first().map(|m| m.values.len());
        match n {
            None => Err(Error::invalid("finite class must be nonempty")),
            Some(n) if members.iter().any(|m| m.values.len() != n) => {
                Err(Error::invalid("finite class members have different sizes"))
            }
            Some(_) => Ok(Self { members }),
        }
    }

    /// `size` functions with i.i.d. uniform values on `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(size: usize, num_states: usize, rng: &mut R) -> Result<Self> {
        Self::new(
            (0..size)
                .map(|_| BoxDiscriminator {
                    values: (0..num_states).map(|_| rng.random()).collect(),
                })
                .collect(),
        )
    }

    pub fn members(&self) -> &[BoxDiscriminator] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member maximizing `E_{d_pi} f − E_{d_e} f`; ties go to the lowest index.
    pub fn best_response(&self, d_pi: &[f64], d_e: &[f64]) -> Result<(usize, f64)> {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, f) in self.members.iter().enumerate() {
            let v = ipm_eval_dist(f, d_pi, d_e)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok(best)
    }
}

/// Kernel bandwidth for random Fourier features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Fixed(f64),
    /// 0.1 quantile of the positive pairwise distances of a reference batch.
    Auto,
}

/// `ψ(s) = sqrt(2/m) cos(Ω s + b)` with `Ω` rows drawn from `N(0, I/bw²)`
/// and offsets from `U[0, 2π)`, frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RffFeatureMap {
    omega: DMatrix<f64>,
    offsets: DVector<f64>,
    bandwidth: f64,
}

impl RffFeatureMap {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, m: usize, bandwidth: f64, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("random feature count must be at least 1"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let omega = DMatrix::from_fn(m, state_dim, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z / bandwidth
        });
        let offsets = DVector::from_fn(m, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
        Ok(Self {
            omega,
            offsets,
            bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn featurize(&self, s: &DVector<f64>) -> DVector<f64> {
        let scale = (2.0 / self.dim() as f64).sqrt();
        (&self.omega * s + &self.offsets).map(|x| scale * x.cos())
    }

    /// Average feature vector of a batch.
    pub fn mean_features(&self, states: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for s in states {
            acc += self.featurize(s);
        }
        acc / states.len().max(1) as f64
    }
}

/// 0.1 quantile (linear interpolation) of the positive pairwise Euclidean
/// distances. Zero distances are skipped so repeated states cannot force a
/// degenerate bandwidth.
pub fn auto_bandwidth(states: &[DVector<f64>]) -> Result<f64> {
    if states.len() < 2 {
        return Err(Error::config("automatic bandwidth needs at least two reference states"));
    }
    let mut dists = Vec::with_capacity(states.len() * (states.len() - 1) / 2);
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = (&states[i] - &states[j]).norm();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::config("automatic bandwidth: all reference states coincide"));
    }
    dists.sort_by(f64::total_cmp);
    let pos = 0.1 * (dists.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(dists[lo] + (pos - lo as f64) * (dists[hi] - dists[lo]))
}

/// Builds a feature map (resolving an automatic bandwidth on `states`) and
/// featurizes the batch.
pub fn rff_featurize<R: Rng + ?Sized>(
    states: &[DVector<f64>],
    m: usize,
    bandwidth: Bandwidth,
    rng: &mut R,
) -> Result<(RffFeatureMap, Vec<DVector<f64>>)> {
    let bw = match bandwidth {
        Bandwidth::Fixed(b) => b,
        Bandwidth::Auto => auto_bandwidth(states)?,
    };
    let dim = states
        .first()
        .map(|s| s.len())
        .ok_or_else(|| Error::config("cannot featurize an empty batch"))?;
    let map = RffFeatureMap::new(dim, m, bw, rng)?;
    let feats = states.iter().map(|s| map.featurize(s)).collect();
    Ok((map, feats))
}

/// Concatenated `(s_h, s_{h+1})` pairs of one state trajectory.
pub fn pair_states(states: &[DVector<f64>]) -> Vec<DVector<f64>> {
    states
        .windows(2)
        .map(|w| DVector::from_iterator(w[0].len() + w[1].len(), w[0].iter().chain(w[1].iter()).copied()))
        .collect()
}

/// Linear witness `f(s) = wᵀψ(s)` with `‖w‖₂ ≤ ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdDiscriminator {
    features: RffFeatureMap,
    weights: DVector<f64>,
    zeta: f64,
}

/// How [`mmd_update`] moves the witness weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdUpdate {
    Exact,
    Grad { eta: f64 },
}

impl MmdDiscriminator {
    /// Zero witness over `features`.
    pub fn new(features: RffFeatureMap, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::config("witness radius must be positive"));
        }
        let weights = DVector::zeros(features.dim());
        Ok(Self {
            features,
            weights,
            zeta,
        })
    }

    /// Same feature map and radius with new weights.
    pub fn with_weights(other: &MmdDiscriminator, weights: DVector<f64>) -> Self {
        Self {
            weights,
            ..other.clone()
        }
    }

    pub fn features(&self) -> &RffFeatureMap {
        &self.features
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

impl Discriminator<DVector<f64>> for MmdDiscriminator {
    fn eval(&self, s: &DVector<f64>) -> f64 {
        self.weights.dot(&self.features.featurize(s))
    }
}

/// Euclidean projection onto the ball of radius `zeta`.
pub fn project_ball(v: DVector<f64>, zeta: f64) -> DVector<f64> {
    let n = v.norm();
    if n > zeta {
        v * (zeta / n)
    } else {
        v
    }
}

/// Exact: `w ← proj(μ_π − μ_e)`; gradient: `w ← proj((1−η)w + η(μ_π − μ_e))`.
pub fn mmd_update(
    disc: &MmdDiscriminator,
    mean_pi: &DVector<f64>,
    mean_e: &DVector<f64>,
    mode: MmdUpdate,
) -> MmdDiscriminator {
    let diff = mean_pi - mean_e;
    let raw = match mode {
        MmdUpdate::Exact => diff,
        MmdUpdate::Grad { eta } => &disc.weights * (1.0 - eta) + diff * eta,
    };
    MmdDiscriminator {
        weights: project_ball(raw, disc.zeta),
        ..disc.clone()
    }
}

/// `sup_{‖w‖≤ζ} wᵀ(μ_π − μ_e) = ζ ‖μ_π − μ_e‖₂`.
pub fn mmd_sup_ipm(mean_pi: &DVector<f64>, mean_e: &DVector<f64>, zeta: f64) -> f64 {
    zeta * (mean_pi - mean_e).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::random::random_simplex;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tv_best_response_examples() {
        let (f, v) = tv_best_response(&[0.2, 0.8], &[0.2, 0.8]).unwrap();
        assert_eq!((f.values(), v), (&[0.0, 0.0][..], 0.0));
        let (f, v) = tv_best_response(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!((f.values(), v), (&[0.0, 1.0, 0.0][..], 1.0));
        let (f, v) = tv_best_response(&[0.5, 0.3, 0.2], &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(f.values(), &[1.0, 0.0, 0.0]);
        assert!((v - 0.3).abs() < 1e-15);
        assert!(tv_best_response(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn best_response_dominates_random_witnesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let d_pi = random_simplex(6, &mut rng);
            let d_e = random_simplex(6, &mut rng);
            let (_, best) = tv_best_response(&d_pi, &d_e).unwrap();
            for _ in 0..1000 {
                let f = BoxDiscriminator::new((0..6).map(|_| rng.random()).collect()).unwrap();
                assert!(ipm_eval_dist(&f, &d_pi, &d_e).unwrap() <= best + 1e-12);
            }
        }
    }

    #[test]
    fn argmax_ignores_a_fixed_bonus() {
        // Objective E_{d}[f(s) − b(s,a)] − E_e[f] over all box vertices.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (ns, na) = (4, 2);
        let d_sa = random_simplex(ns * na, &mut rng);
        let d_pi: Vec<f64> = d_sa.chunks(na).map(|r| r.iter().sum()).collect();
        let d_e = random_simplex(ns, &mut rng);
        let bonus: Vec<f64> = (0..ns * na).map(|_| 5.0 * rng.random::<f64>()).collect();
        let b_term: f64 = d_sa.iter().zip(&bonus).map(|(d, b)| d * b).sum();
        let argmax = |with_bonus: bool| {
            (0..1usize << ns)
                .map(|mask| {
                    let f = BoxDiscriminator::new((0..ns).map(|s| ((mask >> s) & 1) as f64).collect()).unwrap();
                    let v = ipm_eval_dist(&f, &d_pi, &d_e).unwrap() - if with_bonus { b_term } else { 0.0 };
                    (mask, v)
                })
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
                .0
        };
        assert_eq!(argmax(true), argmax(false));
        let (f, _) = tv_best_response(&d_pi, &d_e).unwrap();
        let mask: usize = f.values().iter().enumerate().map(|(s, v)| (*v as usize) << s).sum();
        assert_eq!(mask, argmax(false));
    }

    #[test]
    fn ipm_of_trivial_witnesses() {
        let d = [0.3, 0.7];
        let states = [0usize, 1, 1, 0, 1];
        assert_eq!(ipm_eval(&BoxDiscriminator::zero(2), &d, &states).unwrap(), 0.0);
        let k = BoxDiscriminator::new(vec![0.4, 0.4]).unwrap();
        assert!(ipm_eval(&k, &d, &states).unwrap().abs() < 1e-15);
    }

    #[test]
    fn same_distribution_samples_have_small_ipm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_simplex(5, &mut rng);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            (0..10_000).map(|_| crate::env::random::sample_categorical(&p, rng)).collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let mut freq = vec![0.0; 5];
        a.iter().for_each(|&s| freq[s] += 1e-4);
        let mut freq_b = vec![0.0; 5];
        b.iter().for_each(|&s| freq_b[s] += 1e-4);
        let (f, _) = tv_best_response(&freq, &freq_b).unwrap();
        assert!(ipm_eval(&f, &freq, &b).unwrap().abs() <= 0.05);
    }

    #[test]
    fn mmd_update_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let map = RffFeatureMap::new(2, 16, 1.0, &mut rng).unwrap();
        let disc = MmdDiscriminator::new(map, 1.0).unwrap();
        let mu = DVector::from_fn(16, |i, _| i as f64 * 0.01);
        assert_eq!(mmd_update(&disc, &mu, &mu, MmdUpdate::Exact).weights().norm(), 0.0);
        let mu_e = DVector::from_fn(16, |i, _| (i as f64 * 0.7).sin() * 0.1);
        let exact = mmd_update(&disc, &mu, &mu_e, MmdUpdate::Exact);
        let grad1 = mmd_update(&disc, &mu, &mu_e, MmdUpdate::Grad { eta: 1.0 });
        assert_eq!(exact.weights(), grad1.weights());
        for scale in [1.0, 30.0] {
            let target = mmd_update(&disc, &(&mu * scale), &mu_e, MmdUpdate::Exact);
            let mut d = disc.clone();
            for _ in 0..100 {
                d = mmd_update(&d, &(&mu * scale), &mu_e, MmdUpdate::Grad { eta: 0.67 });
            }
            assert!((d.weights() - target.weights()).norm() <= 1e-8);
            assert!(d.weights().norm() <= d.zeta() + 1e-9);
        }
    }

    #[test]
    fn rff_determinism_bound_and_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let bw = 0.8;
        let map = RffFeatureMap::new(3, 4096, bw, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.4, 0.3]);
        let y = DVector::from_vec(vec![0.5, 0.2, -0.1]);
        assert_eq!(map.featurize(&x), map.featurize(&x.clone()));
        assert!(map.featurize(&x).norm() <= 2f64.sqrt() + 1e-12);
        let k = (-(&x - &y).norm_squared() / (2.0 * bw * bw)).exp();
        assert!((map.featurize(&x).dot(&map.featurize(&y)) - k).abs() <= 0.05);
    }

    #[test]
    fn auto_bandwidth_rules() {
        let one = [DVector::zeros(2)];
        assert!(auto_bandwidth(&one).is_err());
        let pts: Vec<DVector<f64>> = (0..11).map(|i| DVector::from_element(1, i as f64)).collect();
        // 55 distances: 10 ones, 9 twos, ...; position 0.1*54 = 5.4 is among the ones.
        assert_eq!(auto_bandwidth(&pts).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (map, feats) = rff_featurize(&pts, 8, Bandwidth::Auto, &mut rng).unwrap();
        assert_eq!(map.bandwidth(), 1.0);
        assert_eq!(feats.len(), 11);
    }

    #[test]
    fn pairs_concatenate() {
        let s: Vec<DVector<f64>> = (0..3).map(|i| DVector::from_element(1, i as f64)).collect();
        let p = pair_states(&s);
        assert_eq!(p, vec![DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![1.0, 2.0])]);
    }

    proptest! {
        #[test]
        fn mmd_sup_ipm_is_symmetric_and_nonnegative(
            a in prop::collection::vec(-1.0f64..1.0, 4),
            b in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let v = mmd_sup_ipm(&a, &b, 1.0);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, mmd_sup_ipm(&b, &a, 1.0));
            prop_assert_eq!(mmd_sup_ipm(&a, &a, 1.0), 0.0);
        }

        #[test]
        fn finite_class_best_response_is_maximal(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let class = FiniteClass::random(20, 5, &mut rng).unwrap();
            let d_pi = random_simplex(5, &mut rng);
            let d_e = random_simplex(5, &mut rng);
            let (i, v) = class.best_response(&d_pi, &d_e).unwrap();
            prop_assert_eq!(ipm_eval_dist(&class.members()[i], &d_pi, &d_e).unwrap(), v);
            for f in class.members() {
                prop_assert!(ipm_eval_dist(f, &d_pi, &d_e).unwrap() <= v);
            }
        }
    }
}
