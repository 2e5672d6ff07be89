//! The outer imitation loop: execute, record, refit, rebuild the bonus, plan.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{rff_featurize, tv_best_response, Bandwidth, MmdDiscriminator};
use crate::env::{
    occupancy_mixed, rollout, value_eval_mixed, Environment, KnrSystem, MixedPolicy, TabularMdp, Trajectory,
};
use crate::error::{Error, Result};
use crate::expert::ExpertDataset;
use crate::model::{
    fit_tabular, knr_ensemble_bonus, knr_uncertainty, tabular_ensemble_bonus, theory_bonus, BonusFunction,
    BonusMode, CalibratedModel, KnrModel, KnrModelParams, ReplayBuffer, TabularBuffer, TabularModel,
};
use crate::planner::{solve_minmax_knr, solve_minmax_tabular, MinMaxConfig, SearchConfig, Solver, WitnessClass};

/// Parameters of one imitation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobileConfig {
    /// Outer iterations `T`.
    pub iterations: usize,
    /// Expert trajectories `N`.
    pub expert_trajectories: usize,
    pub delta: f64,
    pub bonus: BonusMode,
    pub lambda_bonus: f64,
    pub lambda_ridge: f64,
    pub minmax: MinMaxConfig,
    /// 0 keeps every transition.
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for MobileConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            expert_trajectories: 500,
            delta: 0.05,
            bonus: BonusMode::Theory,
            lambda_bonus: 1.0,
            lambda_ridge: 1.0,
            minmax: MinMaxConfig::default(),
            buffer_capacity: 0,
            seed: 0,
        }
    }
}

impl MobileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations T must be at least 1"));
        }
        if self.expert_trajectories == 0 {
            return Err(Error::config("expert_trajectories N must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.lambda_ridge > 0.0) {
            return Err(Error::config("lambda_ridge must be positive"));
        }
        if !(self.lambda_bonus >= 0.0) {
            return Err(Error::config("lambda_bonus must be nonnegative"));
        }
        self.minmax.validate()
    }
}

/// Extra settings for continuous-state runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnrLoopConfig {
    /// Prior bound on `‖W*‖₂` used by the confidence radius.
    pub w_max: f64,
    pub rff_features: usize,
    pub bandwidth: Bandwidth,
    /// Witness radius `ζ`.
    pub zeta: f64,
    /// Monte-Carlo rollouts for the true value and IPM of each iterate.
    pub mc_rollouts: usize,
    pub search: SearchConfig,
}

impl Default for KnrLoopConfig {
    fn default() -> Self {
        Self {
            w_max: 2.0,
            rff_features: 128,
            bandwidth: Bandwidth::Auto,
            zeta: 1.0,
            mc_rollouts: 100,
            search: SearchConfig::default(),
        }
    }
}

/// Metrics of iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    /// True value `V^{π_t}`.
    pub value: f64,
    pub expert_value: f64,
    pub regret: f64,
    /// True IPM between `π_t` and the expert data.
    pub ipm: f64,
    /// Mean bonus along the executed trajectory.
    pub mean_bonus: f64,
    /// `Σ_{τ≤t} Σ_h min{σ̂_τ², 1}`.
    pub info_gain_cum: f64,
    /// Model-based min-max objective of `π_t`.
    pub objective: f64,
}

pub const RUN_CSV_HEADER: &str = "t,value,expert_value,regret,ipm,mean_bonus,info_gain_cum,objective";

/// Per-iteration record of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn info_gain(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.info_gain_cum)
    }

    /// Row index (0-based) of the lowest true value; ties to the earliest.
    pub fn best_iterate(&self) -> Option<usize> {
        argmin(self.rows.iter().map(|r| r.value))
    }

    /// Row index of the lowest model objective; ties to the earliest.
    pub fn best_by_objective(&self) -> Option<usize> {
        argmin(self.rows.iter().map(|r| r.objective))
    }

    /// CSV with a fixed header, `{:.16e}` floats and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RUN_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t,
                fmt_float(r.value),
                fmt_float(r.expert_value),
                fmt_float(r.regret),
                fmt_float(r.ipm),
                fmt_float(r.mean_bonus),
                fmt_float(r.info_gain_cum),
                fmt_float(r.objective)
            )
            .expect("writing to a string");
        }
        out
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    values
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// `Σ_h min{σ̂_h², 1}` for the uncertainties met along one trajectory.
pub fn info_gain_increment(sigmas: &[f64]) -> f64 {
    sigmas.iter().map(|s| (s * s).min(1.0)).sum()
}

/// Constants for the reported regret envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub horizon: usize,
    pub delta: f64,
    pub expert_trajectories: usize,
    /// `|F|`; for continuous classes an effective size chosen by the caller.
    pub class_size: f64,
    /// Regret level for `iteration_to_threshold`.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    /// 1-based iteration with the lowest true value.
    pub best_iterate: usize,
    pub best_regret: f64,
    pub final_regret: f64,
    /// First 1-based iteration whose regret is at most the threshold.
    pub iteration_to_threshold: Option<usize>,
    /// `6 H^{2.5} √I_T / √T`.
    pub optimism_envelope: f64,
    /// `2H √(ln(2T²|F|/δ)/N)`.
    pub statistical_envelope: f64,
}

impl RegretSummary {
    pub fn envelope(&self) -> f64 {
        self.optimism_envelope + self.statistical_envelope
    }
}

/// `6 H^{2.5} √I_T / √T`.
pub fn optimism_envelope(horizon: usize, info_gain: f64, iterations: usize) -> f64 {
    6.0 * (horizon as f64).powf(2.5) * info_gain.sqrt() / (iterations as f64).sqrt()
}

/// `2√(ln(2t²|F|/δ)/N)`.
pub fn concentration_width(t: usize, class_size: f64, delta: f64, n: usize) -> f64 {
    let t = t as f64;
    2.0 * ((2.0 * t * t * class_size / delta).ln() / n as f64).sqrt()
}

pub fn regret_summary(record: &RunRecord, v_expert: f64, params: &EnvelopeParams) -> Result<RegretSummary> {
    let best = record
        .best_iterate()
        .ok_or_else(|| Error::invalid("regret summary of an empty record"))?;
    let regret = |r: &RunRow| r.value - v_expert;
    let last = record.rows.last().expect("nonempty");
    let t = record.rows.len();
    Ok(RegretSummary {
        best_iterate: best + 1,
        best_regret: regret(&record.rows[best]),
        final_regret: regret(last),
        iteration_to_threshold: record.rows.iter().position(|r| regret(r) <= params.threshold).map(|i| i + 1),
        optimism_envelope: optimism_envelope(params.horizon, record.info_gain(), t),
        statistical_envelope: params.horizon as f64
            * concentration_width(t, params.class_size, params.delta, params.expert_trajectories),
    })
}

/// Result of a tabular run.
#[derive(Debug, Clone)]
pub struct TabularRun {
    /// `π_T`.
    pub policy: MixedPolicy,
    pub record: RunRecord,
    /// Final learned model (fitted on all `T` trajectories).
    pub model: TabularModel,
}

/// Imitation loop on a tabular environment with the box witness class.
pub fn run_mobile_tabular<R: Rng + ?Sized>(
    env: &TabularMdp,
    expert: &ExpertDataset<usize>,
    expert_value: f64,
    cfg: &MobileConfig,
    rng: &mut R,
) -> Result<TabularRun> {
    cfg.validate()?;
    if cfg.minmax.solver == Solver::MwFinite {
        return Err(Error::config("the tabular loop plays the box witness class; use frank_wolfe"));
    }
    if expert.horizon() != env.horizon() {
        return Err(Error::config("expert trajectories and environment disagree on the horizon"));
    }
    let (ns, na, horizon) = (env.num_states(), env.num_actions(), env.horizon());
    let d_e = expert.state_distribution(ns);
    let cost = env.state_action_cost();
    let mut buffer = TabularBuffer::new(ns, na, cfg.buffer_capacity);

    let build = |buffer: &TabularBuffer, t: usize, rng: &mut R| -> Result<(TabularModel, BonusFunction<usize>)> {
        let model = fit_tabular(buffer, horizon, env.initial_state(), t, cfg.delta)?;
        let bonus = match cfg.bonus {
            BonusMode::Theory => theory_bonus(Arc::new(model.clone()), horizon),
            BonusMode::Ensemble => tabular_ensemble_bonus(buffer, cfg.lambda_ridge, cfg.lambda_bonus, rng),
            BonusMode::Off => BonusFunction::zero(),
        };
        Ok((model, bonus))
    };
    let solve = |model: &TabularModel, bonus: &BonusFunction<usize>| {
        solve_minmax_tabular(model, &bonus.table(ns, na), &WitnessClass::Box, &d_e, &cfg.minmax)
    };

    let (mut model, mut bonus) = build(&buffer, 1, rng)?;
    let mut solution = solve(&model, &bonus)?;
    let mut record = RunRecord::default();
    let mut info_gain = 0.0;

    for t in 1..=cfg.iterations {
        let policy = &solution.policy;
        let traj = rollout(env, policy.sample_component(rng), rng)?;
        let sigmas: Vec<f64> = traj.transitions().map(|(_, s, a, _)| model.uncertainty(s, a)).collect();
        info_gain += info_gain_increment(&sigmas);
        let value = value_eval_mixed(env, policy, &cost)?;
        let true_marginal = occupancy_mixed(env, policy)?.state_marginal();
        let (_, ipm) = tv_best_response(&true_marginal, &d_e)?;
        record.rows.push(RunRow {
            t,
            value,
            expert_value,
            regret: value - expert_value,
            ipm,
            mean_bonus: mean_bonus(&bonus, &traj),
            info_gain_cum: info_gain,
            objective: solution.objective,
        });
        buffer.push_trajectory(&traj)?;
        (model, bonus) = build(&buffer, t + 1, rng)?;
        if t < cfg.iterations {
            solution = solve(&model, &bonus)?;
        }
    }
    Ok(TabularRun {
        policy: solution.policy,
        record,
        model,
    })
}

fn mean_bonus<S>(bonus: &BonusFunction<S>, traj: &Trajectory<S>) -> f64 {
    if bonus.mode() == BonusMode::Off {
        return 0.0;
    }
    let n = traj.horizon();
    traj.transitions().map(|(_, s, a, _)| bonus.eval(s, a)).sum::<f64>() / n as f64
}

/// Diagnostics kept by continuous-state runs for the elliptical-potential check.
#[derive(Debug, Clone, PartialEq)]
pub struct KnrDiagnostics {
    /// `Σ_h ‖φ(s_h, a_h)‖²_{Σ_t⁻¹}` of the trajectory executed at `t`,
    /// measured with the covariance the iteration planned with.
    pub potentials: Vec<f64>,
    /// `ln(det Σ / det λI)` after all `T` trajectories.
    pub final_log_det_ratio: f64,
    /// `β_t` of the model used at each iteration.
    pub betas: Vec<f64>,
    pub feature_dim: usize,
}

/// Result of a continuous-state run.
#[derive(Debug, Clone)]
pub struct KnrRun {
    pub policy: MixedPolicy,
    pub record: RunRecord,
    pub model: KnrModel,
    pub diagnostics: KnrDiagnostics,
}

/// Imitation loop on a KNR system with an RFF/MMD witness class and
/// open-loop planning on the learned mean dynamics.
pub fn run_mobile_knr<R: Rng + ?Sized>(
    env: &KnrSystem,
    expert: &ExpertDataset<DVector<f64>>,
    expert_value: f64,
    cfg: &MobileConfig,
    knr: &KnrLoopConfig,
    rng: &mut R,
) -> Result<KnrRun> {
    cfg.validate()?;
    if knr.mc_rollouts < 2 {
        return Err(Error::config("mc_rollouts must be at least 2"));
    }
    if expert.horizon() != env.horizon() {
        return Err(Error::config("expert trajectories and environment disagree on the horizon"));
    }
    let (horizon, na, ds) = (env.horizon(), env.num_actions(), env.state_dim());
    let features = env.features().clone();
    let params = KnrModelParams {
        lambda_ridge: cfg.lambda_ridge,
        noise_std: env.noise_std(),
        w_max: knr.w_max,
        delta: cfg.delta,
    };
    let expert_states = expert.flat_view();
    let (rff, _) = rff_featurize(&expert_states, knr.rff_features, knr.bandwidth, rng)?;
    let expert_mean = rff.mean_features(&expert_states);
    let mut disc = MmdDiscriminator::new(rff, knr.zeta)?;
    let init = env.initial_state();
    let mut buffer: ReplayBuffer<DVector<f64>> = ReplayBuffer::new(cfg.buffer_capacity);

    let build = |buffer: &ReplayBuffer<DVector<f64>>, t: usize, rng: &mut R| -> Result<(Arc<KnrModel>, BonusFunction<DVector<f64>>)> {
        let model = Arc::new(KnrModel::fit(buffer, &features, ds, params, t)?);
        let bonus = match cfg.bonus {
            BonusMode::Theory => theory_bonus(model.clone(), horizon),
            BonusMode::Ensemble => knr_ensemble_bonus(buffer, &features, ds, cfg.lambda_ridge, cfg.lambda_bonus, rng)?,
            BonusMode::Off => BonusFunction::zero(),
        };
        Ok((model, bonus))
    };

    let (mut model, mut bonus) = build(&buffer, 1, rng)?;
    let mut solution = solve_minmax_knr(
        model.as_ref(),
        &init,
        horizon,
        na,
        &bonus,
        &disc,
        &expert_mean,
        &cfg.minmax,
        &knr.search,
        rng,
    )?;
    let mut record = RunRecord::default();
    let mut info_gain = 0.0;
    let mut potentials = Vec::with_capacity(cfg.iterations);
    let mut betas = Vec::with_capacity(cfg.iterations);

    for t in 1..=cfg.iterations {
        disc = solution.witness.clone();
        let policy = &solution.policy;
        let traj = rollout(env, policy.sample_component(rng), rng)?;
        let mut sigmas = Vec::with_capacity(horizon);
        let mut potential = 0.0;
        for (_, s, a, _) in traj.transitions() {
            sigmas.push(knr_uncertainty(&model, s, a));
            potential += model.mahalanobis_sq(&env.phi(s, a)?);
        }
        info_gain += info_gain_increment(&sigmas);
        potentials.push(potential);
        betas.push(model.beta());

        // True value and IPM from fresh rollouts in the real system.
        let mut total = 0.0;
        let mut mu = DVector::zeros(disc.features().dim());
        for _ in 0..knr.mc_rollouts {
            let tr = rollout(env, policy.sample_component(rng), rng)?;
            for s in &tr.states[..horizon] {
                total += env.cost().eval(s);
                mu += disc.features().featurize(s);
            }
        }
        let n = knr.mc_rollouts as f64;
        let value = total / n;
        let ipm = knr.zeta * (mu / (n * horizon as f64) - &expert_mean).norm();
        record.rows.push(RunRow {
            t,
            value,
            expert_value,
            regret: value - expert_value,
            ipm,
            mean_bonus: mean_bonus(&bonus, &traj),
            info_gain_cum: info_gain,
            objective: solution.objective,
        });
        buffer.push_trajectory(&traj);
        (model, bonus) = build(&buffer, t + 1, rng)?;
        if t < cfg.iterations {
            solution = solve_minmax_knr(
                model.as_ref(),
                &init,
                horizon,
                na,
                &bonus,
                &disc,
                &expert_mean,
                &cfg.minmax,
                &knr.search,
                rng,
            )?;
        }
    }
    let diagnostics = KnrDiagnostics {
        potentials,
        final_log_det_ratio: model.log_det_ratio(),
        betas,
        feature_dim: features.dim(),
    };
    Ok(KnrRun {
        policy: solution.policy,
        record,
        model: Arc::try_unwrap(model).unwrap_or_else(|m| (*m).clone()),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_gain_increments() {
        assert_eq!(info_gain_increment(&[0.0, 0.0]), 0.0);
        assert_eq!(info_gain_increment(&[1.0, 1.5, 2.0]), 3.0);
        let v = info_gain_increment(&[0.5, 2.0, 0.5f64.sqrt()]);
        assert!((v - 1.75).abs() < 1e-15);
    }

    #[test]
    fn envelope_arithmetic() {
        let e = optimism_envelope(5, 40.0, 100);
        assert!((e - 6.0 * 5f64.powf(2.5) * 40f64.sqrt() / 10.0).abs() < 1e-12);
        assert!((e - 212.13).abs() < 0.01);
        let w = concentration_width(3, 50.0, 0.1, 100);
        assert!((concentration_width(3, 50.0, 0.1, 400) - w / 2.0).abs() < 1e-15);
    }

    fn row(t: usize, value: f64) -> RunRow {
        RunRow {
            t,
            value,
            expert_value: 1.0,
            regret: value - 1.0,
            ipm: 0.0,
            mean_bonus: 0.0,
            info_gain_cum: t as f64,
            objective: 0.0,
        }
    }

    #[test]
    fn summary_best_and_threshold() {
        let params = EnvelopeParams {
            horizon: 2,
            delta: 0.1,
            expert_trajectories: 10,
            class_size: 4.0,
            threshold: 0.25,
        };
        let flat = RunRecord { rows: (1..=4).map(|t| row(t, 1.0)).collect() };
        let s = regret_summary(&flat, 1.0, &params).unwrap();
        assert_eq!((s.best_iterate, s.best_regret, s.iteration_to_threshold), (1, 0.0, Some(1)));
        let falling = RunRecord { rows: (1..=4).map(|t| row(t, 3.0 - 0.5 * t as f64)).collect() };
        let s = regret_summary(&falling, 1.0, &params).unwrap();
        assert_eq!(s.best_iterate, 4);
        assert_eq!(s.iteration_to_threshold, Some(4));
        assert!(regret_summary(&RunRecord::default(), 1.0, &params).is_err());
    }

    #[test]
    fn csv_layout() {
        let rec = RunRecord { rows: vec![row(1, 0.1)] };
        let csv = rec.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RUN_CSV_HEADER);
        assert!(lines[1].starts_with("1,1.0000000000000001e-1,1.0000000000000000e0,"));
        assert!(!csv.contains('\r'));
    }
}
