//! Gaussian bandits with a known optimal mean: the hard family, three
//! algorithms, the two-step reduction system and regret curves.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{FeatureMap, KnrSystem, StateCost};
use crate::error::{Error, Result};
use crate::mobile::fmt_float;

/// Gaussian bandit with unit reward noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabInstance {
    means: Vec<f64>,
    optimal_mean: f64,
}

impl MabInstance {
    /// The optimal mean is `max μ`.
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("bandit means must be finite and nonempty"));
        }
        let optimal_mean = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { means, optimal_mean })
    }

    /// Instance whose revealed optimal mean may differ from `max μ`, as for
    /// the all-zero member of the hard family.
    pub fn with_known_optimum(means: Vec<f64>, optimal_mean: f64) -> Result<Self> {
        let mut inst = Self::new(means)?;
        inst.optimal_mean = optimal_mean;
        Ok(inst)
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn optimal_mean(&self) -> f64 {
        self.optimal_mean
    }

    /// Largest true mean, the benchmark for pseudo-regret.
    pub fn best_mean(&self) -> f64 {
        self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.means[arm] + z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardFamily {
    pub gap: f64,
    /// Instance `i` has mean `gap` at arm `i` and 0 elsewhere.
    pub instances: Vec<MabInstance>,
    /// All arms at 0, with the same revealed optimal mean `gap`.
    pub zero: MabInstance,
}

/// `Δ = √(A/T)/4`.
pub fn hard_gap(num_arms: usize, horizon: usize) -> f64 {
    0.25 * (num_arms as f64 / horizon as f64).sqrt()
}

pub fn make_hard_family(num_arms: usize, horizon: usize) -> Result<HardFamily> {
    if num_arms < 2 || horizon < num_arms {
        return Err(Error::config("hard family needs A ≥ 2 and T ≥ A"));
    }
    let gap = hard_gap(num_arms, horizon);
    let instances = (0..num_arms)
        .map(|i| {
            let means = (0..num_arms).map(|j| if i == j { gap } else { 0.0 }).collect();
            MabInstance::new(means)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HardFamily {
        gap,
        instances,
        zero: MabInstance::with_known_optimum(vec![0.0; num_arms], gap)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BanditAlgorithm {
    Ucb1,
    /// `ε_t = min(1, A^{1/3} t^{-1/3})`.
    EpsGreedy,
    /// Eliminates arms whose confidence interval excludes the known optimum.
    KnownMeanElim { delta: f64 },
}

impl BanditAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            BanditAlgorithm::Ucb1 => "ucb1",
            BanditAlgorithm::EpsGreedy => "eps_greedy",
            BanditAlgorithm::KnownMeanElim { .. } => "known_mean_elim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrace {
    pub arms: Vec<usize>,
    pub rewards: Vec<f64>,
    /// `Σ_{τ≤t} (μ_best − μ_{a_τ})`.
    pub cumulative_regret: Vec<f64>,
}

impl BanditTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// `√(2 ln(2AT/δ) / n)`, a union bound over arms and rounds.
pub fn elimination_radius(num_arms: usize, horizon: usize, delta: f64, n: usize) -> f64 {
    (2.0 * (2.0 * num_arms as f64 * horizon as f64 / delta).ln() / n as f64).sqrt()
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn run_bandit<R: Rng + ?Sized>(
    instance: &MabInstance,
    algorithm: BanditAlgorithm,
    horizon: usize,
    rng: &mut R,
) -> Result<BanditTrace> {
    let na = instance.num_arms();
    if horizon < na {
        return Err(Error::config("T must be at least the number of arms"));
    }
    if let BanditAlgorithm::KnownMeanElim { delta } = algorithm {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("elimination delta must lie in (0, 1)"));
        }
    }
    let best = instance.best_mean();
    let mut counts = vec![0usize; na];
    let mut sums = vec![0.0; na];
    let mut alive = vec![true; na];
    let mut committed: Option<usize> = None;
    let mut next_rr = 0usize;
    let mut trace = BanditTrace {
        arms: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        cumulative_regret: Vec::with_capacity(horizon),
    };
    let mut regret = 0.0;

    for t in 1..=horizon {
        let mean = |i: usize| sums[i] / counts[i] as f64;
        let arm = if t <= na {
            t - 1
        } else {
            match algorithm {
                BanditAlgorithm::Ucb1 => {
                    let bonus = (2.0 * (t as f64).ln()).sqrt();
                    argmax((0..na).map(|i| mean(i) + bonus / (counts[i] as f64).sqrt()))
                }
                BanditAlgorithm::EpsGreedy => {
                    let eps = ((na as f64).cbrt() / (t as f64).cbrt()).min(1.0);
                    if rng.random::<f64>() < eps {
                        rng.random_range(0..na)
                    } else {
                        argmax((0..na).map(mean))
                    }
                }
                BanditAlgorithm::KnownMeanElim { .. } => match committed {
                    Some(a) => a,
                    None => {
                        // Round-robin over the survivors.
                        let mut a = next_rr % na;
                        while !alive[a] {
                            a = (a + 1) % na;
                        }
                        next_rr = a + 1;
                        a
                    }
                },
            }
        };
        let r = instance.pull(arm, rng);
        counts[arm] += 1;
        sums[arm] += r;
        regret += best - instance.means()[arm];
        trace.arms.push(arm);
        trace.rewards.push(r);
        trace.cumulative_regret.push(regret);

        if let BanditAlgorithm::KnownMeanElim { delta } = algorithm {
            if committed.is_none() && counts[arm] > 0 {
                let rad = elimination_radius(na, horizon, delta, counts[arm]);
                if (sums[arm] / counts[arm] as f64 - instance.optimal_mean()).abs() > rad {
                    alive[arm] = false;
                }
                let survivors: Vec<usize> = (0..na).filter(|&i| alive[i]).collect();
                match survivors.len() {
                    1 => committed = Some(survivors[0]),
                    // Every interval missed μ*: fall back to the empirical best.
                    0 => committed = Some(argmax((0..na).map(|i| sums[i] / counts[i].max(1) as f64))),
                    _ => {}
                }
            }
        }
    }
    Ok(trace)
}

/// Two-step system that encodes a bandit: scalar state, `s_0 = 0`,
/// one-hot action features, `W* = μᵀ`, unit noise, so `s_1 ~ N(μ_a, 1)`.
///
/// The state cost is `min(1, |s − μ*| / 4)`: it is constant at `s_0 = 0` and
/// at `s_1` in expectation smallest for arms whose mean is closest to `μ*`.
/// Expert states at step 1 carry exactly the information `μ*`.
pub fn reduction_mdp(instance: &MabInstance) -> Result<KnrSystem> {
    let na = instance.num_arms();
    KnrSystem::new(
        FeatureMap::OneHotAction { num_actions: na },
        DMatrix::from_row_slice(1, na, instance.means()),
        1.0,
        2,
        na,
        DVector::zeros(1),
        StateCost::DistanceToTarget {
            target: DVector::from_element(1, instance.optimal_mean()),
            scale: 4.0,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    /// 1-based rounds.
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
    /// Standard error of the mean across traces (0 for a single trace).
    pub stderr: Vec<f64>,
}

pub fn cumulative_regret_curve(traces: &[BanditTrace]) -> Result<RegretCurve> {
    let first = traces.first().ok_or_else(|| Error::invalid("need at least one trace"))?;
    let len = first.cumulative_regret.len();
    if traces.iter().any(|tr| tr.cumulative_regret.len() != len) {
        return Err(Error::invalid("traces have different lengths"));
    }
    let n = traces.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for i in 0..len {
        let m = traces.iter().map(|tr| tr.cumulative_regret[i]).sum::<f64>() / n;
        let se = if traces.len() > 1 {
            let var = traces.iter().map(|tr| (tr.cumulative_regret[i] - m).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(RegretCurve {
        t: (1..=len).collect(),
        mean,
        stderr,
    })
}

/// Least-squares slope of `ln R(t)` against `ln t` on `points` log-spaced
/// rounds between `t_min` and the end of the curve. Rounds with zero regret
/// are skipped.
pub fn loglog_slope(curve: &RegretCurve, t_min: usize, points: usize) -> Result<f64> {
    let t_max = curve.t.len();
    if t_min < 1 || t_min >= t_max || points < 2 {
        return Err(Error::invalid("slope fit needs 1 ≤ t_min < T and at least two points"));
    }
    let (lo, hi) = ((t_min as f64).ln(), (t_max as f64).ln());
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for k in 0..points {
        let t = (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp().round() as usize;
        let r = curve.mean[t.clamp(1, t_max) - 1];
        if r > 0.0 {
            xs.push((t as f64).ln());
            ys.push(r.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::invalid("not enough positive regret values to fit a slope"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub const REGRET_CSV_HEADER: &str = "t,mean_regret,stderr,algorithm,instance_id";

/// Rows every `stride` rounds (plus the last round) for each labelled curve.
pub fn regret_curves_csv(curves: &[(&str, usize, &RegretCurve)], stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from(REGRET_CSV_HEADER);
    out.push('\n');
    for (alg, id, c) in curves {
        let n = c.t.len();
        for i in (0..n).filter(|&i| (i + 1) % stride == 0 || i + 1 == n) {
            writeln!(out, "{},{},{},{},{}", c.t[i], fmt_float(c.mean[i]), fmt_float(c.stderr[i]), alg, id)
                .expect("writing to a string");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, Environment, OpenLoopPolicy, Policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hard_gap_arithmetic() {
        assert_eq!(hard_gap(2, 32), 1.0 / 16.0);
        let fam = make_hard_family(4, 400).unwrap();
        assert_eq!(fam.instances.len(), 4);
        for (i, inst) in fam.instances.iter().enumerate() {
            assert_eq!(inst.optimal_mean(), fam.gap);
            assert_eq!(inst.means()[i], fam.gap);
        }
        assert_eq!(fam.zero.optimal_mean(), fam.gap);
        assert_eq!(fam.zero.best_mean(), 0.0);
        assert!(make_hard_family(1, 10).is_err());
        assert!(make_hard_family(5, 4).is_err());
    }

    #[test]
    fn equal_means_give_zero_regret() {
        let inst = MabInstance::new(vec![0.3; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for alg in [BanditAlgorithm::Ucb1, BanditAlgorithm::EpsGreedy, BanditAlgorithm::KnownMeanElim { delta: 0.1 }] {
            assert_eq!(run_bandit(&inst, alg, 500, &mut rng).unwrap().final_regret(), 0.0);
        }
    }

    #[test]
    fn ucb_on_a_wide_gap_is_logarithmic() {
        let inst = MabInstance::new(vec![10.0, 0.0]).unwrap();
        let mut finals: Vec<f64> = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                run_bandit(&inst, BanditAlgorithm::Ucb1, 10_000, &mut rng).unwrap().final_regret()
            })
            .collect();
        finals.sort_by(f64::total_cmp);
        // 8 ln T / Δ + Δ(1 + π²/3), the classical envelope.
        let envelope = 8.0 * 10_000f64.ln() / 10.0 + 10.0 * (1.0 + std::f64::consts::PI.powi(2) / 3.0);
        assert!(finals[10] <= 50.0 && finals[10] <= envelope, "median {}", finals[10]);
    }

    #[test]
    fn every_arm_pulled_once_first_and_ties_go_low() {
        let inst = MabInstance::new(vec![0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = run_bandit(&inst, BanditAlgorithm::Ucb1, 3, &mut rng).unwrap();
        assert_eq!(tr.arms, vec![0, 1, 2]);
        assert_eq!(argmax([1.0, 2.0, 2.0].into_iter()), 1);
        assert!(run_bandit(&inst, BanditAlgorithm::Ucb1, 2, &mut rng).is_err());
    }

    #[test]
    fn elimination_commits_to_the_known_optimum() {
        let inst = MabInstance::new(vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tr = run_bandit(&inst, BanditAlgorithm::KnownMeanElim { delta: 0.05 }, 3000, &mut rng).unwrap();
        assert!(tr.arms[2500..].iter().all(|&a| a == 1));
        // Zero regret once committed.
        assert_eq!(tr.cumulative_regret[2999], tr.cumulative_regret[2500]);
    }

    #[test]
    fn elimination_rarely_drops_the_best_arm() {
        let inst = MabInstance::new(vec![0.5, 0.0, 0.0, 0.0]).unwrap();
        let delta = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 10_000;
        let mut failures = 0;
        for _ in 0..trials {
            let tr = run_bandit(&inst, BanditAlgorithm::KnownMeanElim { delta }, 200, &mut rng).unwrap();
            // The best arm was dropped iff the committed arm is not arm 0.
            let last = *tr.arms.last().unwrap();
            let committed = tr.arms[150..].iter().all(|&a| a == last);
            if committed && last != 0 {
                failures += 1;
            }
        }
        assert!((failures as f64) <= delta * trials as f64, "failures {failures}");
    }

    #[test]
    fn regret_is_monotone() {
        let fam = make_hard_family(4, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for alg in [BanditAlgorithm::Ucb1, BanditAlgorithm::EpsGreedy, BanditAlgorithm::KnownMeanElim { delta: 0.1 }] {
            let tr = run_bandit(&fam.instances[2], alg, 1000, &mut rng).unwrap();
            assert_eq!(tr.cumulative_regret.len(), 1000);
            assert!(tr.cumulative_regret.windows(2).all(|w| w[1] >= w[0] && w[0] >= 0.0));
        }
    }

    #[test]
    fn curve_statistics() {
        let inst = MabInstance::new(vec![0.0, 0.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = run_bandit(&inst, BanditAlgorithm::EpsGreedy, 50, &mut rng).unwrap();
        let one = cumulative_regret_curve(std::slice::from_ref(&tr)).unwrap();
        assert_eq!(one.mean, tr.cumulative_regret);
        assert!(one.stderr.iter().all(|&s| s == 0.0));
        let same = cumulative_regret_curve(&[tr.clone(), tr.clone()]).unwrap();
        assert!(same.stderr.iter().all(|&s| s == 0.0));
        let mut short = tr.clone();
        short.cumulative_regret.pop();
        assert!(cumulative_regret_curve(&[tr, short]).is_err());
        assert!(cumulative_regret_curve(&[]).is_err());
    }

    #[test]
    fn slope_of_power_laws() {
        for p in [0.5, 2.0 / 3.0, 1.0] {
            let n = 5000;
            let curve = RegretCurve {
                t: (1..=n).collect(),
                mean: (1..=n).map(|t| 3.0 * (t as f64).powf(p)).collect(),
                stderr: vec![0.0; n],
            };
            assert!((loglog_slope(&curve, 10, 40).unwrap() - p).abs() < 1e-3);
        }
    }

    #[test]
    fn reduction_exposes_the_optimal_mean() {
        let inst = MabInstance::new(vec![0.1, 0.7, -0.2]).unwrap();
        let sys = reduction_mdp(&inst).unwrap();
        assert_eq!((sys.horizon(), sys.num_actions(), sys.state_dim()), (2, 3, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let expert = Policy::OpenLoop(OpenLoopPolicy::new(vec![1, 0]));
        let n = 100_000;
        let mean = (0..n).map(|_| rollout(&sys, &expert, &mut rng).unwrap().states[1][0]).sum::<f64>() / n as f64;
        assert!((mean - 0.7).abs() < 0.02);
        // Expected cost at step 1 is smallest for the best arm.
        let mut cost = |a: usize| {
            let p = Policy::OpenLoop(OpenLoopPolicy::new(vec![a, 0]));
            (0..20_000).map(|_| sys.cost().eval(&rollout(&sys, &p, &mut rng).unwrap().states[1])).sum::<f64>()
        };
        let (c0, c1) = (cost(0), cost(1));
        assert!(c1 < c0);
        // A single arm is a trivial system.
        let one = reduction_mdp(&MabInstance::new(vec![0.4]).unwrap()).unwrap();
        assert_eq!(one.num_actions(), 1);
    }

    #[test]
    fn csv_has_header_and_stride() {
        let curve = RegretCurve { t: vec![1, 2, 3, 4, 5], mean: vec![0.0; 5], stderr: vec![0.0; 5] };
        let csv = regret_curves_csv(&[("ucb1", 3, &curve)], 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REGRET_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("5,") && lines[3].ends_with(",ucb1,3"));
    }
}
