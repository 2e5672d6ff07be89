use super::{Averaging, MinMaxConfig, Mixture, Solver};
use crate::discriminator::{tv_best_response, FiniteClass};
use crate::env::{
    occupancy_exact, optimal_policy, MixedPolicy, OccupancyMeasure, Policy, TabularDynamics, TabularPolicy,
};
use crate::error::{Error, Result};

/// Witness class for tabular games.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessClass {
    /// All of `[0, 1]^S`.
    Box,
    Finite(FiniteClass),
}

impl WitnessClass {
    /// Maximizing witness and `max_f E_{d_pi} f − E_{d_e} f`.
    fn best_response(&self, d_pi: &[f64], d_e: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            WitnessClass::Box => {
                let (f, v) = tv_best_response(d_pi, d_e)?;
                Ok((f.values().to_vec(), v))
            }
            WitnessClass::Finite(class) => {
                let (i, v) = class.best_response(d_pi, d_e)?;
                Ok((class.members()[i].values().to_vec(), v))
            }
        }
    }
}

/// Exactly optimal deterministic policy for the state-action cost table
/// under `model` (ties to the lowest action) and its total cost.
pub fn best_response_tabular<D: TabularDynamics + ?Sized>(model: &D, cost: &[f64]) -> Result<(TabularPolicy, f64)> {
    optimal_policy(model, cost)
}

/// Output of [`solve_minmax_tabular`].
#[derive(Debug, Clone)]
pub struct TabularSolution {
    pub policy: MixedPolicy,
    /// Occupancy of `policy` under the planning model.
    pub occupancy: OccupancyMeasure,
    /// `max_f E_{d^π}[f(s) − b(s,a)] − E_{D_e}[f(s)]` at the returned mixture.
    pub objective: f64,
    /// Certified lower bound on the game value.
    pub lower_bound: f64,
    /// Witness attaining `objective`.
    pub witness: Vec<f64>,
    pub iterations: usize,
}

fn state_marginal(d_sa: &[f64], num_actions: usize) -> Vec<f64> {
    d_sa.chunks(num_actions).map(|r| r.iter().sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `min_π max_f E_{d^π_{P̂}}[f(s) − b(s,a)] − E_{D_e}[f(s)]` over
/// mixtures of deterministic policies. `bonus` is a `[s][a]` table and
/// `expert` the empirical expert state distribution.
///
/// With harmonic averaging this is fictitious play: the witness best-responds
/// to the averaged occupancy, the learner best-responds (by exact DP) to the
/// averaged witness, and the learner's iterates are averaged with weight
/// `1/k`. Uniform averaging makes both players respond to the latest iterate
/// only. A finite class with `mw_finite` replaces the witness player by
/// multiplicative weights.
///
/// Returns the lowest-objective averaged iterate. Iteration stops early once
/// that objective is within `cfg.tolerance` of the best lower bound
/// `min_π L(π, f̄_k)` seen so far.
pub fn solve_minmax_tabular<D: TabularDynamics + ?Sized>(
    model: &D,
    bonus: &[f64],
    class: &WitnessClass,
    expert: &[f64],
    cfg: &MinMaxConfig,
) -> Result<TabularSolution> {
    cfg.validate()?;
    let (ns, na, horizon) = (model.num_states(), model.num_actions(), model.horizon());
    if bonus.len() != ns * na || expert.len() != ns {
        return Err(Error::invalid("bonus or expert distribution does not match the model"));
    }
    if cfg.solver == Solver::MwFinite && !matches!(class, WitnessClass::Finite(_)) {
        return Err(Error::config("mw_finite needs an explicit finite witness class"));
    }
    let hf = horizon as f64;
    let objective = |d_sa: &[f64]| -> Result<(Vec<f64>, f64)> {
        let (f, v) = class.best_response(&state_marginal(d_sa, na), expert)?;
        Ok((f, v - dot(d_sa, bonus)))
    };
    let uniform = occupancy_exact(model, &TabularPolicy::uniform(horizon, ns, na))?.average();

    let mut mix: Mixture<TabularPolicy> = Mixture::default();
    let mut d_bar = vec![0.0; ns * na];
    let mut d_last = uniform.clone();
    let mut lower = f64::NEG_INFINITY;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut mw = match class {
        WitnessClass::Finite(c) if cfg.solver == Solver::MwFinite => Some(vec![1.0 / c.len() as f64; c.len()]),
        _ => None,
    };
    let mut iterations = 0;
    let mut cost = vec![0.0; ns * na];
    let mut f_bar = vec![0.0; ns];

    for k in 1..=cfg.iterations {
        iterations = k;
        let f = match (&mut mw, class) {
            (Some(p), WitnessClass::Finite(c)) => {
                let mut f = vec![0.0; ns];
                for (w, m) in p.iter().zip(c.members()) {
                    for (acc, v) in f.iter_mut().zip(m.values()) {
                        *acc += w * v;
                    }
                }
                f
            }
            _ => {
                let target = if k == 1 {
                    &uniform
                } else {
                    match cfg.averaging {
                        Averaging::Harmonic => &d_bar,
                        Averaging::Uniform => &d_last,
                    }
                };
                let f_k = class.best_response(&state_marginal(target, na), expert)?.0;
                match cfg.averaging {
                    Averaging::Harmonic => {
                        let g = 1.0 / k as f64;
                        for (acc, v) in f_bar.iter_mut().zip(&f_k) {
                            *acc = (1.0 - g) * *acc + g * v;
                        }
                        f_bar.clone()
                    }
                    Averaging::Uniform => f_k,
                }
            }
        };
        for s in 0..ns {
            for a in 0..na {
                cost[s * na + a] = f[s] - bonus[s * na + a];
            }
        }
        let (pi, v) = best_response_tabular(model, &cost)?;
        lower = lower.max(v / hf - dot(expert, &f));
        let d_pi = occupancy_exact(model, &pi)?.average();
        if let (Some(p), WitnessClass::Finite(c)) = (&mut mw, class) {
            let marg = state_marginal(&d_pi, na);
            for (w, m) in p.iter_mut().zip(c.members()) {
                let gain: f64 = marg.iter().zip(expert).zip(m.values()).map(|((d, e), f)| (d - e) * f).sum();
                *w *= (cfg.mw_learning_rate * gain).exp();
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|w| *w /= total);
        }
        let gamma = 1.0 / k as f64;
        mix.step(pi, gamma);
        for (acc, v) in d_bar.iter_mut().zip(&d_pi) {
            *acc = (1.0 - gamma) * *acc + gamma * v;
        }
        d_last = d_pi;
        let (_, obj) = objective(&d_bar)?;
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, mix.weights.clone(), d_bar.clone()));
        }
        if best.as_ref().is_some_and(|b| b.0 - lower <= cfg.tolerance) {
            break;
        }
    }

    let (obj, weights, _) = best.expect("at least one iteration");
    let snapshot = Mixture {
        items: mix.items[..weights.len()].to_vec(),
        weights,
    };
    let components: Vec<(f64, Policy)> = snapshot
        .normalized()
        .into_iter()
        .map(|(w, p)| (w, Policy::Tabular(p.clone())))
        .collect();
    let policy = MixedPolicy::new(components)?;
    let occupancy = crate::env::occupancy_mixed(model, &policy)?;
    let (witness, objective_exact) = objective(&occupancy.average())?;
    debug_assert!((objective_exact - obj).abs() < 1e-9);
    Ok(TabularSolution {
        policy,
        occupancy,
        objective: objective_exact,
        lower_bound: lower,
        witness,
        iterations,
    })
}
