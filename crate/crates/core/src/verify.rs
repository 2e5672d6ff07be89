//! Numerical checks of the lemmas behind the algorithm, each producing a
//! serializable report.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::discriminator::FiniteClass;
use crate::env::random::{random_kernel, random_mdp, random_policy};
use crate::env::{
    occupancy_exact, rollout, value_functions, Policy, TabularDynamics, TabularMdp, TabularPolicy,
};
use crate::error::{Error, Result};
use crate::mobile::{concentration_width, KnrDiagnostics};
use crate::model::{fit_tabular, TabularBuffer, Transition};

/// Outcome of one check over one or more trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Failures tolerated before the check fails (0 for deterministic
    /// identities, `⌊δ·trials⌋` for coverage checks).
    pub allowed_failures: usize,
    /// Largest amount by which a trial exceeded its bound; negative when
    /// every trial had slack.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            trials: 0,
            failures: 0,
            allowed_failures: 0,
            worst_violation: f64::NEG_INFINITY,
            tolerance,
            passed: true,
        }
    }

    /// Records one trial whose bound was exceeded by `violation`
    /// (`lhs − rhs` for `lhs ≤ rhs`).
    pub fn record(&mut self, violation: f64) {
        self.trials += 1;
        self.worst_violation = self.worst_violation.max(violation);
        if !(violation <= self.tolerance) {
            self.failures += 1;
        }
        self.passed = self.failures <= self.allowed_failures;
    }

    pub fn allow_failures(mut self, allowed: usize) -> Self {
        self.allowed_failures = allowed;
        self.passed = self.failures <= allowed;
        self
    }

    /// Folds another report of the same check into this one.
    pub fn absorb(&mut self, other: &CheckReport) {
        self.trials += other.trials;
        self.failures += other.failures;
        self.worst_violation = self.worst_violation.max(other.worst_violation);
        self.passed = self.failures <= self.allowed_failures;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// Both sides of the simulation-lemma equality and the inequality bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSides {
    /// `V^π_{P,f} − V^π_{P̂,f̂}`.
    pub lhs: f64,
    /// `Σ_h E_{d_h^π(P)}[f − f̂ + E_P V̂_{h+1} − E_P̂ V̂_{h+1}]`.
    pub rhs: f64,
    /// `Σ_h E_{d_h^π(P)}[f − f̂ + ‖V̂_{h+1}‖_∞ ‖P − P̂‖₁]`.
    pub bound: f64,
}

/// Costs are `[s * A + a]` tables.
pub fn simulation_sides<P: TabularDynamics + ?Sized, Q: TabularDynamics + ?Sized>(
    p: &P,
    p_hat: &Q,
    f: &[f64],
    f_hat: &[f64],
    pi: &TabularPolicy,
) -> Result<SimulationSides> {
    let (ns, na, horizon) = (p.num_states(), p.num_actions(), p.horizon());
    if (p_hat.num_states(), p_hat.num_actions(), p_hat.horizon()) != (ns, na, horizon)
        || p.initial_state() != p_hat.initial_state()
    {
        return Err(Error::invalid("the two models must share shape and start state"));
    }
    let v = value_functions(p, pi, f)?;
    let v_hat = value_functions(p_hat, pi, f_hat)?;
    let lhs = v[0][p.initial_state()] - v_hat[0][p.initial_state()];
    let occ = occupancy_exact(p, pi)?;
    let (mut rhs, mut bound) = (0.0, 0.0);
    for h in 0..horizon {
        let next = &v_hat[h + 1];
        let sup = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let d = occ.step(h);
        for s in 0..ns {
            for a in 0..na {
                let w = d[s * na + a];
                if w == 0.0 {
                    continue;
                }
                let (row, row_hat) = (p.next_state_dist(h, s, a), p_hat.next_state_dist(h, s, a));
                let ev: f64 = row.iter().zip(next).map(|(q, x)| q * x).sum();
                let ev_hat: f64 = row_hat.iter().zip(next).map(|(q, x)| q * x).sum();
                let l1: f64 = row.iter().zip(row_hat).map(|(x, y)| (x - y).abs()).sum();
                let gap = f[s * na + a] - f_hat[s * na + a];
                rhs += w * (gap + ev - ev_hat);
                bound += w * (gap + sup * l1);
            }
        }
    }
    Ok(SimulationSides { lhs, rhs, bound })
}

pub const SIMULATION_TOL: f64 = 1e-9;

pub fn check_simulation_lemma<P: TabularDynamics + ?Sized, Q: TabularDynamics + ?Sized>(
    p: &P,
    p_hat: &Q,
    f: &[f64],
    f_hat: &[f64],
    pi: &TabularPolicy,
) -> Result<CheckReport> {
    let sides = simulation_sides(p, p_hat, f, f_hat, pi)?;
    let mut report = CheckReport::new("simulation_lemma", SIMULATION_TOL);
    report.record((sides.lhs - sides.rhs).abs().max(sides.lhs - sides.bound));
    Ok(report)
}

fn random_costs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random()).collect()
}

/// Random instances with `S ≤ 8`, `A ≤ 4`, `H ≤ 6`.
pub fn simulation_lemma_suite<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut report = CheckReport::new("simulation_lemma", SIMULATION_TOL);
    for _ in 0..trials {
        let (ns, na, horizon) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=6));
        let p = random_mdp(ns, na, horizon, rng);
        let p_hat = TabularMdp::new(horizon, random_kernel(ns, na, rng), vec![0.0; ns], 0)?;
        let f = random_costs(ns * na, rng);
        let f_hat = random_costs(ns * na, rng);
        let pi = random_policy(horizon, ns, na, rng);
        report.absorb(&check_simulation_lemma(&p, &p_hat, &f, &f_hat, &pi)?);
    }
    Ok(report)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// `‖N(μ₁,σ²) − N(μ₂,σ²)‖₁ = 2(2Φ(|μ₁−μ₂|/2σ) − 1)`.
pub fn gaussian_l1_closed_form(mu1: f64, mu2: f64, sigma: f64) -> f64 {
    2.0 * (2.0 * std_normal_cdf((mu1 - mu2).abs() / (2.0 * sigma)) - 1.0)
}

/// Trapezoid rule for `∫|p₁ − p₂|` with step `σ/1000` over 10σ beyond both
/// means. The grid is centred on the midpoint, where the integrand has its
/// only kink, so every cell integrates a smooth function.
pub fn gaussian_l1_quadrature(mu1: f64, mu2: f64, sigma: f64) -> f64 {
    let step = sigma / 1000.0;
    let mid = 0.5 * (mu1 + mu2);
    let half = 0.5 * (mu1 - mu2).abs() + 10.0 * sigma;
    let k = (half / step).ceil() as i64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let density = |x: f64, m: f64| norm * (-0.5 * ((x - m) / sigma).powi(2)).exp();
    let g = |i: i64| {
        let x = mid + i as f64 * step;
        (density(x, mu1) - density(x, mu2)).abs()
    };
    let interior: f64 = (-k + 1..k).map(g).sum();
    step * (interior + 0.5 * (g(-k) + g(k)))
}

pub const GAUSSIAN_TV_TOL: f64 = 1e-6;

/// The bound `‖P₁ − P₂‖₁ ≤ |μ₁ − μ₂|/σ` by quadrature, plus agreement of
/// quadrature with the closed form.
pub fn check_gaussian_tv(mu1: f64, mu2: f64, sigma: f64) -> Result<CheckReport> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let quad = gaussian_l1_quadrature(mu1, mu2, sigma);
    let exact = gaussian_l1_closed_form(mu1, mu2, sigma);
    let mut report = CheckReport::new("gaussian_tv", GAUSSIAN_TV_TOL);
    report.record((quad - (mu1 - mu2).abs() / sigma).max((quad - exact).abs()));
    Ok(report)
}

pub fn gaussian_tv_suite<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut report = CheckReport::new("gaussian_tv", GAUSSIAN_TV_TOL);
    for _ in 0..trials {
        let mu1 = rng.random_range(-3.0..3.0);
        let mu2 = rng.random_range(-3.0..3.0);
        let sigma = rng.random_range(0.2..3.0);
        report.absorb(&check_gaussian_tv(mu1, mu2, sigma)?);
    }
    Ok(report)
}

pub const OPTIMISM_TOL: f64 = 1e-9;

/// `V^π_{P̂, f − b} ≤ V^π_{P, f}` with the oracle uncertainty
/// `σ̂(s,a) = ‖P̂(s,a) − P(s,a)‖₁` and `b = H·min{σ̂, 2}`.
/// `f` is a state function in `[0, 1]`.
pub fn check_optimism<P: TabularDynamics + ?Sized, Q: TabularDynamics + ?Sized>(
    p: &P,
    p_hat: &Q,
    f: &[f64],
    pi: &TabularPolicy,
) -> Result<CheckReport> {
    let (ns, na, horizon) = (p.num_states(), p.num_actions(), p.horizon());
    if f.len() != ns {
        return Err(Error::invalid("f must have one value per state"));
    }
    let hf = horizon as f64;
    let true_cost: Vec<f64> = (0..ns * na).map(|i| f[i / na]).collect();
    let mut optimistic = true_cost.clone();
    for s in 0..ns {
        for a in 0..na {
            // Pooled models: the step index does not matter for the row.
            let sigma = (0..horizon)
                .map(|h| {
                    p.next_state_dist(h, s, a)
                        .iter()
                        .zip(p_hat.next_state_dist(h, s, a))
                        .map(|(x, y)| (x - y).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            optimistic[s * na + a] -= hf * sigma.min(2.0);
        }
    }
    let v_true = value_functions(p, pi, &true_cost)?[0][p.initial_state()];
    let v_model = value_functions(p_hat, pi, &optimistic)?[0][p_hat.initial_state()];
    let mut report = CheckReport::new("optimism", OPTIMISM_TOL);
    report.record(v_model - v_true);
    Ok(report)
}

pub fn optimism_suite<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut report = CheckReport::new("optimism", OPTIMISM_TOL);
    for _ in 0..trials {
        let (ns, na, horizon) = (rng.random_range(2..=8), rng.random_range(1..=4), rng.random_range(1..=6));
        let p = random_mdp(ns, na, horizon, rng);
        let p_hat = TabularMdp::new(horizon, random_kernel(ns, na, rng), vec![0.0; ns], 0)?;
        let f = random_costs(ns, rng);
        let pi = random_policy(horizon, ns, na, rng);
        report.absorb(&check_optimism(&p, &p_hat, &f, &pi)?);
    }
    Ok(report)
}

/// Coverage of the fitted tabular uncertainty: each draw is a fresh random
/// instance, a buffer of uniformly placed transitions and one `(s, a)`; the
/// draw fails when `‖P̂(s,a) − P(s,a)‖₁ > σ̂(s,a)`. The model uses `t = 1`,
/// the narrowest radius.
pub fn calibration_suite<R: Rng + ?Sized>(draws: usize, delta: f64, rng: &mut R) -> Result<CheckReport> {
    let mut report = CheckReport::new("tabular_calibration", 0.0);
    for _ in 0..draws {
        let (ns, na) = (rng.random_range(2..=8), rng.random_range(1..=4));
        let env = random_mdp(ns, na, 1, rng);
        let mut buffer = TabularBuffer::new(ns, na, 0);
        let m = rng.random_range(ns * na..=50 * ns * na);
        for _ in 0..m {
            let (s, a) = (rng.random_range(0..ns), rng.random_range(0..na));
            let next = env.sample_next(0, s, a, rng);
            buffer.push(Transition { h: 0, state: s, action: a, next })?;
        }
        let model = fit_tabular(&buffer, 1, 0, 1, delta)?;
        let (s, a) = (rng.random_range(0..ns), rng.random_range(0..na));
        let err = model.kernel().l1_distance(env.kernel(), s, a);
        report.record(err - model.uncertainty_table()[s * na + a]);
    }
    let allowed = (delta * draws as f64).floor() as usize;
    Ok(report.allow_failures(allowed))
}

/// Uniform concentration over a finite class: the fraction of trials in
/// which `sup_f |E_{d^{π^e}} f − (1/N) Σ f(s_i)|` exceeds
/// `2√(ln(2t²|F|/δ)/N)` must be at most `δ`. Samples are iid from the
/// expert's average state occupancy (one rollout, one uniform step each).
pub fn check_concentration<R: Rng + ?Sized>(
    class: &FiniteClass,
    env: &TabularMdp,
    expert: &TabularPolicy,
    n: usize,
    delta: f64,
    t: usize,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    if n == 0 || trials == 0 {
        return Err(Error::config("need N ≥ 1 and at least one trial"));
    }
    let d = occupancy_exact(env, expert)?.state_marginal();
    let truth: Vec<f64> = class
        .members()
        .iter()
        .map(|f| f.values().iter().zip(&d).map(|(x, p)| x * p).sum())
        .collect();
    let width = concentration_width(t, class.len() as f64, delta, n);
    let policy = Policy::Tabular(expert.clone());
    let mut report = CheckReport::new("concentration", 0.0);
    for _ in 0..trials {
        let mut counts = vec![0usize; env.num_states()];
        for _ in 0..n {
            let traj = rollout(env, &policy, rng)?;
            counts[traj.states[rng.random_range(0..env.horizon())]] += 1;
        }
        let dev = class
            .members()
            .iter()
            .zip(&truth)
            .map(|(f, m)| {
                let emp: f64 = f.values().iter().zip(&counts).map(|(x, c)| x * *c as f64).sum::<f64>() / n as f64;
                (emp - m).abs()
            })
            .fold(0.0, f64::max);
        report.record(dev - width);
    }
    let allowed = (delta * trials as f64).floor() as usize;
    Ok(report.allow_failures(allowed))
}

/// `Σ_t min{p_t, 1}` against `2 ln(det Σ_T / det λI)` and
/// `2d ln(1 + TH W_max²/σ²)`. The second form assumes `λ ≥ σ²/W_max²`.
pub fn check_elliptical_potential(
    diagnostics: &KnrDiagnostics,
    horizon: usize,
    w_max: f64,
    noise_std: f64,
) -> Result<CheckReport> {
    if !(noise_std > 0.0) {
        return Err(Error::invalid("noise std must be positive"));
    }
    let t = diagnostics.potentials.len() as f64;
    let lhs: f64 = diagnostics.potentials.iter().map(|p| p.min(1.0)).sum();
    let by_det = 2.0 * diagnostics.final_log_det_ratio;
    let d = diagnostics.feature_dim as f64;
    let by_dim = 2.0 * d * (1.0 + t * horizon as f64 * w_max * w_max / (noise_std * noise_std)).ln();
    let mut report = CheckReport::new("elliptical_potential", 1e-9);
    report.record((lhs - by_det).max(lhs - by_dim));
    Ok(report)
}

/// `2 H S² A ln(T² S A / δ) ln(1 + T H)`.
pub fn tabular_info_gain_bound(horizon: usize, ns: usize, na: usize, iterations: usize, delta: f64) -> f64 {
    if iterations == 0 {
        return 0.0;
    }
    let (h, s, a, t) = (horizon as f64, ns as f64, na as f64, iterations as f64);
    2.0 * h * s * s * a * (t * t * s * a / delta).ln() * (1.0 + t * h).ln()
}

/// `H (4d + 32 d d_s + 32 d ln(T²/δ) + 32 d + 2d² L) L` with
/// `L = ln(1 + W_max² T H / σ²)`.
pub fn knr_info_gain_bound(
    horizon: usize,
    feature_dim: usize,
    state_dim: usize,
    iterations: usize,
    delta: f64,
    w_max: f64,
    noise_std: f64,
) -> f64 {
    if iterations == 0 {
        return 0.0;
    }
    let (h, d, ds, t) = (horizon as f64, feature_dim as f64, state_dim as f64, iterations as f64);
    let l = (1.0 + w_max * w_max * t * h / (noise_std * noise_std)).ln();
    h * (4.0 * d + 32.0 * d * ds + 32.0 * d * (t * t / delta).ln() + 32.0 * d + 2.0 * d * d * l) * l
}

pub fn check_info_gain(name: &str, info_gain: f64, bound: f64) -> CheckReport {
    let mut report = CheckReport::new(name, 0.0);
    report.record(info_gain - bound);
    report
}

/// `ln det(λI + Σ_i x_i x_iᵀ) − d ln λ` by LU, independent of the model code.
pub fn log_det_ratio_direct(features: &[DVector<f64>], dim: usize, lambda: f64) -> f64 {
    let mut cov = nalgebra::DMatrix::identity(dim, dim) * lambda;
    for x in features {
        cov += x * x.transpose();
    }
    cov.lu().determinant().ln() - dim as f64 * lambda.ln()
}
