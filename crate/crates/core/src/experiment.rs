//! Experiment configuration and the runner behind the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::random::{random_mdp, random_policy};
use crate::env::{value_eval_tabular, Environment, KnrSystem, TabularMdp, TransitionKernel};
use crate::error::{Error, Result};
use crate::expert::ExpertDataset;
use crate::instances::{chain_mdp, knr_task, random_combination_lock, tabular_task, toy_knr};
use crate::mab::{
    loglog_slope, make_hard_family, regret_curves_csv, run_bandit, BanditAlgorithm, MabInstance, RegretCurve,
};
use crate::mobile::{
    fmt_float, regret_summary, run_mobile_knr, run_mobile_tabular, EnvelopeParams, KnrLoopConfig, MobileConfig,
    RegretSummary, RunRecord,
};
use crate::model::BonusMode;
use crate::verify::{
    calibration_suite, check_concentration, check_elliptical_potential, check_info_gain, gaussian_tv_suite,
    knr_info_gain_bound, optimism_suite, simulation_lemma_suite, tabular_info_gain_bound, CheckReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    MobileTabular,
    MobileKnr,
    MabLb,
    VerifySuite,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::MobileTabular => "mobile-tabular",
            Subcommand::MobileKnr => "mobile-knr",
            Subcommand::MabLb => "mab-lb",
            Subcommand::VerifySuite => "verify-suite",
        }
    }
}

/// Environment description. Random pieces are drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Chain {
        states: usize,
        horizon: usize,
        slip: f64,
    },
    Lock {
        actions: usize,
        horizon: usize,
        wrong_advance: f64,
    },
    RandomTabular {
        states: usize,
        actions: usize,
        horizon: usize,
    },
    /// `transitions[(s * A + a) * S + s']` and one cost per state.
    Explicit {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<f64>,
        cost: Vec<f64>,
        initial_state: usize,
    },
    ToyKnr {
        horizon: usize,
        noise_std: f64,
    },
    /// JSON file holding another spec.
    File {
        path: PathBuf,
    },
}

impl EnvSpec {
    pub fn default_for(sub: Subcommand) -> Option<Self> {
        match sub {
            Subcommand::MobileTabular => Some(EnvSpec::Chain { states: 6, horizon: 5, slip: 0.1 }),
            Subcommand::MobileKnr => Some(EnvSpec::ToyKnr { horizon: 5, noise_std: 0.01 }),
            _ => None,
        }
    }

    fn resolve(&self) -> Result<EnvSpec> {
        match self {
            EnvSpec::File { path } => {
                let text = fs::read_to_string(path)?;
                let inner: EnvSpec = parse_json(&text)?;
                if matches!(inner, EnvSpec::File { .. }) {
                    return Err(Error::config("an environment file may not point to another file"));
                }
                Ok(inner)
            }
            other => Ok(other.clone()),
        }
    }

    fn tabular(&self, rng: &mut ChaCha8Rng) -> Result<TabularMdp> {
        match self.resolve()? {
            EnvSpec::Chain { states, horizon, slip } => chain_mdp(states, horizon, slip),
            EnvSpec::Lock { actions, horizon, wrong_advance } => {
                random_combination_lock(actions, horizon, wrong_advance, rng)
            }
            EnvSpec::RandomTabular { states, actions, horizon } => {
                if states == 0 || actions == 0 || horizon == 0 {
                    return Err(Error::config("random tabular sizes must be positive"));
                }
                Ok(random_mdp(states, actions, horizon, rng))
            }
            EnvSpec::Explicit { num_states, num_actions, horizon, transitions, cost, initial_state } => {
                TabularMdp::new(horizon, TransitionKernel::new(num_states, num_actions, transitions)?, cost, initial_state)
            }
            _ => Err(Error::config("mobile-tabular needs a tabular environment")),
        }
    }

    fn knr(&self) -> Result<KnrSystem> {
        match self.resolve()? {
            EnvSpec::ToyKnr { horizon, noise_std } => toy_knr(horizon, noise_std),
            _ => Err(Error::config("mobile-knr needs a KNR environment (kind = toy_knr)")),
        }
    }
}

/// Constants for the regret summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Regret threshold as a fraction of `H`.
    pub threshold_fraction: f64,
    /// Effective `|F|` used by the statistical envelope (heuristic for the box class).
    pub class_size: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { threshold_fraction: 0.1, class_size: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    pub arms: usize,
    pub horizon: usize,
    pub algorithms: Vec<BanditAlgorithm>,
    /// Rows are written every `csv_stride` rounds.
    pub csv_stride: usize,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            arms: 10,
            horizon: 20_000,
            algorithms: vec![
                BanditAlgorithm::Ucb1,
                BanditAlgorithm::EpsGreedy,
                BanditAlgorithm::KnownMeanElim { delta: 0.05 },
            ],
            csv_stride: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub simulation_trials: usize,
    pub gaussian_trials: usize,
    pub optimism_trials: usize,
    pub calibration_draws: usize,
    pub calibration_delta: f64,
    pub concentration_trials: usize,
    pub concentration_class_size: usize,
    pub concentration_samples: usize,
    pub concentration_delta: f64,
    /// Outer iterations of the chain run used for the information-gain check.
    pub tabular_iterations: usize,
    /// Outer iterations of the KNR run used for the potential checks.
    pub knr_iterations: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            simulation_trials: 200,
            gaussian_trials: 50,
            optimism_trials: 100,
            calibration_draws: 500,
            calibration_delta: 0.1,
            concentration_trials: 1000,
            concentration_class_size: 50,
            concentration_samples: 100,
            concentration_delta: 0.1,
            tabular_iterations: 300,
            knr_iterations: 200,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    /// Expert demonstrations in the text format of [`ExpertDataset`];
    /// sampled from the optimal policy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_file: Option<PathBuf>,
    #[serde(default)]
    pub mobile: MobileConfig,
    #[serde(default)]
    pub knr: KnrLoopConfig,
    /// Also run the configured loop with the bonus switched off.
    #[serde(default)]
    pub ablate_bonus: bool,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub bandit: BanditConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            subcommand: None,
            env: None,
            expert_file: None,
            mobile: MobileConfig::default(),
            knr: KnrLoopConfig::default(),
            ablate_bonus: false,
            report: ReportConfig::default(),
            bandit: BanditConfig::default(),
            verify: VerifyConfig::default(),
            seeds: default_seeds(),
            out_dir: default_out_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        self.mobile.validate()?;
        if self.bandit.arms < 2 || self.bandit.horizon < self.bandit.arms {
            return Err(Error::config("bandit: need arms ≥ 2 and horizon ≥ arms"));
        }
        if self.bandit.algorithms.is_empty() {
            return Err(Error::config("bandit.algorithms: list at least one algorithm"));
        }
        if !(self.report.class_size >= 1.0) || !(self.report.threshold_fraction >= 0.0) {
            return Err(Error::config("report: class_size ≥ 1 and threshold_fraction ≥ 0 required"));
        }
        Ok(())
    }

    /// Fills the subcommand and its default environment.
    pub fn resolved(&self, sub: Subcommand) -> Result<Self> {
        if let Some(s) = self.subcommand {
            if s != sub {
                return Err(Error::config(format!(
                    "subcommand: config is for `{}` but `{}` was requested",
                    s.name(),
                    sub.name()
                )));
            }
        }
        let mut out = self.clone();
        out.subcommand = Some(sub);
        if out.env.is_none() {
            out.env = EnvSpec::default_for(sub);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let mut message = e.inner().to_string();
        if message.contains("unknown field `lambda`") {
            message.push_str(
                "; `lambda` is ambiguous: write `lambda_ridge` for the model's ridge regularizer \
                 or `lambda_bonus` for the ensemble bonus scale",
            );
        }
        Error::Parse { path, message }
    })
}

/// Strict JSON parsing: unknown keys are rejected, defaults filled in,
/// ranges validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = parse_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// What a finished experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False only when a verify-suite check failed.
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

/// 0 success, 1 failed check or numerical failure, 2 configuration or
/// input error, 3 I/O error.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed => 0,
        Ok(_) => 1,
        Err(Error::Io(_)) => 3,
        Err(Error::Numerical(_)) => 1,
        Err(_) => 2,
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("jobs: cannot start worker pool: {e}")))
}

/// Runs `sub` with `cfg`, writing every file under `cfg.out_dir`. Seeds run
/// on `jobs` workers; output is identical for any worker count.
pub fn run_experiment(cfg: &ExperimentConfig, sub: Subcommand, jobs: usize) -> Result<Outcome> {
    cfg.validate()?;
    let cfg = cfg.resolved(sub)?;
    let mut out = Writer::new(&cfg.out_dir)?;
    out.write("config.json", &(cfg.to_json() + "\n"))?;
    let pool = pool(jobs)?;
    let passed = match sub {
        Subcommand::MobileTabular | Subcommand::MobileKnr => {
            run_mobile_experiment(&cfg, sub, &pool, &mut out)?;
            true
        }
        Subcommand::MabLb => {
            run_mab_experiment(&cfg, &pool, &mut out)?;
            true
        }
        Subcommand::VerifySuite => run_verify_experiment(&cfg, &pool, &mut out)?,
    };
    Ok(Outcome { passed, files: out.files })
}

fn mode_label(mode: BonusMode) -> &'static str {
    match mode {
        BonusMode::Theory => "theory",
        BonusMode::Ensemble => "ensemble",
        BonusMode::Off => "off",
    }
}

fn run_labels(cfg: &ExperimentConfig) -> Vec<BonusMode> {
    let mut modes = vec![cfg.mobile.bonus];
    if cfg.ablate_bonus && cfg.mobile.bonus != BonusMode::Off {
        modes.push(BonusMode::Off);
    }
    modes
}

struct SeedRun {
    seed: u64,
    label: &'static str,
    record: RunRecord,
    summary: RegretSummary,
}

/// One seed of a tabular run for each bonus label. The environment and the
/// demonstrations come from stream 0 of the seed, run `k` uses stream `k + 1`.
pub fn mobile_tabular_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(BonusMode, RunRecord, RegretSummary)>> {
    let spec = cfg.env.clone().or(EnvSpec::default_for(Subcommand::MobileTabular)).expect("default");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = spec.tabular(&mut rng)?;
    let mut task = tabular_task(env, cfg.mobile.expert_trajectories, &mut rng)?;
    if let Some(path) = &cfg.expert_file {
        task.expert_data = ExpertDataset::<usize>::from_text(&fs::read_to_string(path)?)?;
        if task.expert_data.trajectories().iter().flatten().any(|&s| s >= task.env.num_states()) {
            return Err(Error::invalid("expert file mentions a state outside the environment"));
        }
    }
    let horizon = task.env.horizon();
    let params = envelope_params(cfg, horizon, task.expert_data.len());
    run_labels(cfg)
        .into_iter()
        .enumerate()
        .map(|(k, mode)| {
            let mut run_rng = ChaCha8Rng::seed_from_u64(seed);
            run_rng.set_stream(k as u64 + 1);
            let mobile = MobileConfig { bonus: mode, seed, ..cfg.mobile.clone() };
            let run = run_mobile_tabular(&task.env, &task.expert_data, task.expert_value, &mobile, &mut run_rng)?;
            let summary = regret_summary(&run.record, task.expert_value, &params)?;
            Ok((mode, run.record, summary))
        })
        .collect()
}

fn envelope_params(cfg: &ExperimentConfig, horizon: usize, n: usize) -> EnvelopeParams {
    EnvelopeParams {
        horizon,
        delta: cfg.mobile.delta,
        expert_trajectories: n,
        class_size: cfg.report.class_size,
        threshold: cfg.report.threshold_fraction * horizon as f64,
    }
}

fn mobile_knr_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(BonusMode, RunRecord, RegretSummary)>> {
    let spec = cfg.env.clone().or(EnvSpec::default_for(Subcommand::MobileKnr)).expect("default");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = spec.knr()?;
    let mut task = knr_task(env, cfg.mobile.expert_trajectories, cfg.knr.mc_rollouts, &mut rng)?;
    if let Some(path) = &cfg.expert_file {
        task.expert_data = ExpertDataset::<nalgebra::DVector<f64>>::from_text(&fs::read_to_string(path)?)?;
        if task.expert_data.trajectories().iter().flatten().any(|s| s.len() != task.env.state_dim()) {
            return Err(Error::invalid("expert file state dimension differs from the environment"));
        }
    }
    let params = envelope_params(cfg, task.env.horizon(), task.expert_data.len());
    run_labels(cfg)
        .into_iter()
        .enumerate()
        .map(|(k, mode)| {
            let mut run_rng = ChaCha8Rng::seed_from_u64(seed);
            run_rng.set_stream(k as u64 + 1);
            let mobile = MobileConfig { bonus: mode, seed, ..cfg.mobile.clone() };
            let run = run_mobile_knr(&task.env, &task.expert_data, task.expert_value, &mobile, &cfg.knr, &mut run_rng)?;
            let summary = regret_summary(&run.record, task.expert_value, &params)?;
            Ok((mode, run.record, summary))
        })
        .collect()
}

const MOBILE_SUMMARY_HEADER: &str = "label,seed,best_iterate,best_regret,final_regret,iteration_to_threshold,info_gain,optimism_envelope,statistical_envelope";

fn run_mobile_experiment(
    cfg: &ExperimentConfig,
    sub: Subcommand,
    pool: &rayon::ThreadPool,
    out: &mut Writer,
) -> Result<()> {
    let per_seed: Vec<Result<Vec<SeedRun>>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let runs = if sub == Subcommand::MobileTabular {
                    mobile_tabular_seed(cfg, seed)?
                } else {
                    mobile_knr_seed(cfg, seed)?
                };
                Ok(runs
                    .into_iter()
                    .map(|(mode, record, summary)| SeedRun { seed, label: mode_label(mode), record, summary })
                    .collect())
            })
            .collect()
    });
    let mut summary = String::from(MOBILE_SUMMARY_HEADER);
    summary.push('\n');
    for runs in per_seed {
        for r in runs? {
            out.write(&format!("run_{}_seed{}.csv", r.label, r.seed), &r.record.to_csv())?;
            let s = &r.summary;
            writeln!(
                summary,
                "{},{},{},{},{},{},{},{},{}",
                r.label,
                r.seed,
                s.best_iterate,
                fmt_float(s.best_regret),
                fmt_float(s.final_regret),
                s.iteration_to_threshold.map(|t| t.to_string()).unwrap_or_default(),
                fmt_float(r.record.info_gain()),
                fmt_float(s.optimism_envelope),
                fmt_float(s.statistical_envelope)
            )
            .expect("writing to a string");
        }
    }
    out.write("summary.csv", &summary)
}

/// Running sums of cumulative-regret curves across seeds.
struct CurveSums {
    n: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl CurveSums {
    fn new(len: usize) -> Self {
        Self { n: 0, s1: vec![0.0; len], s2: vec![0.0; len] }
    }

    fn add(&mut self, curve: &[f64]) {
        self.n += 1;
        for ((a, b), x) in self.s1.iter_mut().zip(self.s2.iter_mut()).zip(curve) {
            *a += x;
            *b += x * x;
        }
    }

    fn curve(&self) -> RegretCurve {
        let n = self.n as f64;
        let mean: Vec<f64> = self.s1.iter().map(|s| s / n).collect();
        let stderr = if self.n > 1 {
            self.s2
                .iter()
                .zip(&mean)
                .map(|(s2, m)| ((s2 - n * m * m).max(0.0) / (n - 1.0) / n).sqrt())
                .collect()
        } else {
            vec![0.0; mean.len()]
        };
        RegretCurve { t: (1..=mean.len()).collect(), mean, stderr }
    }
}

/// Instance `0` is the all-zero member, `i ≥ 1` has its gap on arm `i − 1`.
fn mab_instances(cfg: &BanditConfig) -> Result<Vec<MabInstance>> {
    let fam = make_hard_family(cfg.arms, cfg.horizon)?;
    Ok(std::iter::once(fam.zero).chain(fam.instances).collect())
}

const BANDIT_TRACE_HEADER: &str = "t,arm,reward,cumulative_regret,algorithm,instance_id";
const MAB_SUMMARY_HEADER: &str = "algorithm,instance_id,final_mean_regret,stderr,loglog_slope,lower_bound";

fn run_mab_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool, out: &mut Writer) -> Result<()> {
    let b = &cfg.bandit;
    let instances = mab_instances(b)?;
    let runs: Vec<(usize, usize)> =
        (0..b.algorithms.len()).flat_map(|a| (0..instances.len()).map(move |i| (a, i))).collect();
    let mut sums: Vec<CurveSums> = runs.iter().map(|_| CurveSums::new(b.horizon)).collect();
    let stride = b.csv_stride.max(1);
    // Seeds are folded in order, a worker-count-sized batch at a time.
    for batch in cfg.seeds.chunks(pool.current_num_threads().max(1)) {
        let results: Vec<Result<(String, Vec<Vec<f64>>)>> = pool.install(|| {
            batch
                .par_iter()
                .map(|&seed| {
                    let mut csv = String::from(BANDIT_TRACE_HEADER);
                    csv.push('\n');
                    let mut curves = Vec::with_capacity(runs.len());
                    for (k, &(a, i)) in runs.iter().enumerate() {
                        let alg = b.algorithms[a];
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(k as u64);
                        let tr = run_bandit(&instances[i], alg, b.horizon, &mut rng)?;
                        for t in (0..b.horizon).filter(|t| (t + 1) % stride == 0 || t + 1 == b.horizon) {
                            writeln!(
                                csv,
                                "{},{},{},{},{},{}",
                                t + 1,
                                tr.arms[t],
                                fmt_float(tr.rewards[t]),
                                fmt_float(tr.cumulative_regret[t]),
                                alg.name(),
                                i
                            )
                            .expect("writing to a string");
                        }
                        curves.push(tr.cumulative_regret);
                    }
                    Ok((csv, curves))
                })
                .collect()
        });
        for (&seed, res) in batch.iter().zip(results) {
            let (csv, curves) = res?;
            out.write(&format!("bandit_seed{seed}.csv"), &csv)?;
            for (s, c) in sums.iter_mut().zip(&curves) {
                s.add(c);
            }
        }
    }
    let curves: Vec<RegretCurve> = sums.iter().map(CurveSums::curve).collect();
    let labelled: Vec<(&str, usize, &RegretCurve)> =
        runs.iter().zip(&curves).map(|(&(a, i), c)| (b.algorithms[a].name(), i, c)).collect();
    out.write("regret_curves.csv", &regret_curves_csv(&labelled, stride))?;
    let bound = (b.arms as f64 * b.horizon as f64).sqrt() / 16.0;
    let mut summary = String::from(MAB_SUMMARY_HEADER);
    summary.push('\n');
    for (alg, i, c) in labelled {
        let slope = loglog_slope(c, (10 * b.arms).min(b.horizon - 1).max(1), 50)
            .map(fmt_float)
            .unwrap_or_default();
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            alg,
            i,
            fmt_float(*c.mean.last().expect("nonempty")),
            fmt_float(*c.stderr.last().expect("nonempty")),
            slope,
            fmt_float(bound)
        )
        .expect("writing to a string");
    }
    out.write("summary.csv", &summary)
}

/// Every lemma check for one seed; reports come back in a fixed order.
pub fn verify_suite(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckReport>> {
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        rng
    };
    let mut reports = vec![
        simulation_lemma_suite(cfg.simulation_trials, &mut stream(0))?,
        gaussian_tv_suite(cfg.gaussian_trials, &mut stream(1))?,
        optimism_suite(cfg.optimism_trials, &mut stream(2))?,
        calibration_suite(cfg.calibration_draws, cfg.calibration_delta, &mut stream(3))?,
    ];

    let mut rng = stream(4);
    let env = random_mdp(6, 3, 5, &mut rng);
    let expert = random_policy(5, 6, 3, &mut rng);
    let class = crate::discriminator::FiniteClass::random(cfg.concentration_class_size, 6, &mut rng)?;
    reports.push(check_concentration(
        &class,
        &env,
        &expert,
        cfg.concentration_samples,
        cfg.concentration_delta,
        1,
        cfg.concentration_trials,
        &mut rng,
    )?);

    if cfg.tabular_iterations > 0 {
        let mut rng = stream(5);
        let task = tabular_task(chain_mdp(6, 5, 0.1)?, 500, &mut rng)?;
        let mobile = MobileConfig { iterations: cfg.tabular_iterations, seed, ..MobileConfig::default() };
        let run = run_mobile_tabular(&task.env, &task.expert_data, task.expert_value, &mobile, &mut rng)?;
        let bound = tabular_info_gain_bound(5, 6, 3, cfg.tabular_iterations, mobile.delta);
        reports.push(check_info_gain("info_gain_tabular", run.record.info_gain(), bound));
        // The expert the chain run imitates is optimal, so regret is nonnegative.
        let v = value_eval_tabular(&task.env, &task.expert_policy, &task.env.state_action_cost())?;
        let mut sanity = CheckReport::new("expert_optimality", 1e-9);
        for row in &run.record.rows {
            sanity.record(v - row.value);
        }
        reports.push(sanity);
    }
    if cfg.knr_iterations > 0 {
        let mut rng = stream(6);
        let (sigma, w_max) = (0.01, 2.0);
        let task = knr_task(toy_knr(5, sigma)?, 100, 100, &mut rng)?;
        let mobile = MobileConfig {
            iterations: cfg.knr_iterations,
            lambda_ridge: sigma * sigma / (w_max * w_max),
            seed,
            ..MobileConfig::default()
        };
        let knr = KnrLoopConfig { w_max, ..KnrLoopConfig::default() };
        let run = run_mobile_knr(&task.env, &task.expert_data, task.expert_value, &mobile, &knr, &mut rng)?;
        reports.push(check_elliptical_potential(&run.diagnostics, 5, w_max, sigma)?);
        let bound = knr_info_gain_bound(5, 4, 1, cfg.knr_iterations, mobile.delta, w_max, sigma);
        reports.push(check_info_gain("info_gain_knr", run.record.info_gain(), bound));
    }
    Ok(reports)
}

fn run_verify_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool, out: &mut Writer) -> Result<bool> {
    let per_seed: Vec<Result<Vec<CheckReport>>> =
        pool.install(|| cfg.seeds.par_iter().map(|&seed| verify_suite(&cfg.verify, seed)).collect());
    let mut merged: Vec<CheckReport> = Vec::new();
    for reports in per_seed {
        let reports = reports?;
        if merged.is_empty() {
            merged = reports;
        } else {
            for (m, r) in merged.iter_mut().zip(&reports) {
                m.allowed_failures += r.allowed_failures;
                m.absorb(r);
            }
        }
    }
    let json = serde_json::to_string_pretty(&merged).expect("reports serialize");
    out.write("verify_report.json", &(json + "\n"))?;
    Ok(merged.iter().all(|r| r.passed))
}
