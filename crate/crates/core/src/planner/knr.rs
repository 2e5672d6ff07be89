use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Averaging, MinMaxConfig, Mixture, Solver};
use crate::discriminator::{mmd_update, project_ball, MmdDiscriminator};
use crate::env::{MixedPolicy, OpenLoopPolicy, Policy};
use crate::error::{Error, Result};
use crate::model::{BonusFunction, MeanModel};
use crate::search;

/// Open-loop search limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Largest `A^H` searched exhaustively.
    pub exhaustive_budget: u64,
    /// Fall back to random shooting above the budget instead of failing.
    pub random_shooting: bool,
    pub n_candidates: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exhaustive_budget: 1_000_000,
            random_shooting: true,
            n_candidates: 4096,
        }
    }
}

/// Nominal states `s_0..s_H` of `actions` under the mean model.
pub fn nominal_rollout<M: MeanModel<DVector<f64>> + ?Sized>(
    model: &M,
    initial_state: &DVector<f64>,
    actions: &[usize],
) -> Vec<DVector<f64>> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(initial_state.clone());
    for &a in actions {
        let next = model.predict_mean(states.last().expect("nonempty"), a);
        states.push(next);
    }
    states
}

/// Best open-loop sequence for `Σ_h [cost(s_h) − b(s_h, a_h)]` on the
/// noise-free rollout of the learned mean dynamics. Returns the sequence and
/// its total.
#[allow(clippy::too_many_arguments)]
pub fn best_response_knr<M, R>(
    model: &M,
    initial_state: &DVector<f64>,
    horizon: usize,
    num_actions: usize,
    cost: &dyn Fn(&DVector<f64>) -> f64,
    bonus: &BonusFunction<DVector<f64>>,
    search_cfg: &SearchConfig,
    rng: &mut R,
) -> Result<(OpenLoopPolicy, f64)>
where
    M: MeanModel<DVector<f64>> + ?Sized,
    R: Rng + ?Sized,
{
    let step = |s: &DVector<f64>, a: usize| Ok(model.predict_mean(s, a));
    let stage = |_h: usize, s: &DVector<f64>, a: usize| cost(s) - bonus.eval(s, a);
    let size = search::sequence_count(num_actions, horizon);
    let (seq, total) = if size <= search_cfg.exhaustive_budget as u128 {
        search::exhaustive(initial_state, horizon, num_actions, search_cfg.exhaustive_budget, &step, &stage)?
    } else if search_cfg.random_shooting {
        search::random_shooting(initial_state, horizon, num_actions, search_cfg.n_candidates, &step, &stage, rng)?
    } else {
        return Err(Error::SearchBudget {
            size,
            budget: search_cfg.exhaustive_budget,
        });
    };
    Ok((OpenLoopPolicy::new(seq), total))
}

/// Output of [`solve_minmax_knr`].
#[derive(Debug, Clone)]
pub struct KnrSolution {
    pub policy: MixedPolicy,
    /// `ζ‖μ_π − μ_e‖ − E_π[b]` on the nominal model.
    pub objective: f64,
    /// Lower bound on the game value (certified only under exhaustive search).
    pub lower_bound: f64,
    /// Last witness played.
    pub witness: MmdDiscriminator,
    pub iterations: usize,
}

/// Fictitious play over mixtures of open-loop sequences against the MMD
/// witness class `{wᵀψ : ‖w‖ ≤ ζ}`: the witness responds to the averaged
/// learner features, the learner best-responds to the averaged witness. The learner's feature mean is taken along the
/// nominal rollout, `μ_π = (1/H) Σ_{h<H} ψ(s_h)`. The weights of `disc`
/// seed the first witness.
#[allow(clippy::too_many_arguments)]
pub fn solve_minmax_knr<M, R>(
    model: &M,
    initial_state: &DVector<f64>,
    horizon: usize,
    num_actions: usize,
    bonus: &BonusFunction<DVector<f64>>,
    disc: &MmdDiscriminator,
    expert_mean: &DVector<f64>,
    cfg: &MinMaxConfig,
    search_cfg: &SearchConfig,
    rng: &mut R,
) -> Result<KnrSolution>
where
    M: MeanModel<DVector<f64>> + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if cfg.solver != Solver::FrankWolfe {
        return Err(Error::config("continuous-state planning supports frank_wolfe only"));
    }
    let features = disc.features();
    if expert_mean.len() != features.dim() {
        return Err(Error::invalid("expert feature mean has the wrong dimension"));
    }
    let hf = horizon as f64;
    let zeta = disc.zeta();
    let profile = |seq: &[usize]| -> (DVector<f64>, f64) {
        let states = nominal_rollout(model, initial_state, seq);
        let mut mu = DVector::zeros(features.dim());
        let mut b = 0.0;
        for (h, &a) in seq.iter().enumerate() {
            mu += features.featurize(&states[h]);
            b += bonus.eval(&states[h], a);
        }
        (mu / hf, b / hf)
    };

    let mut witness = disc.clone();
    let mut w_bar = DVector::zeros(features.dim());
    let mut mix: Mixture<Vec<usize>> = Mixture::default();
    let mut mu_bar = DVector::zeros(features.dim());
    let mut b_bar = 0.0;
    let mut mu_last: Option<DVector<f64>> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;

    for k in 1..=cfg.iterations {
        iterations = k;
        if k > 1 {
            let target = match cfg.averaging {
                Averaging::Harmonic => &mu_bar,
                Averaging::Uniform => mu_last.as_ref().expect("set after the first iterate"),
            };
            witness = match cfg.mmd_update {
                Some(mode) => mmd_update(&witness, target, expert_mean, mode),
                None => {
                    let diff = target - expert_mean;
                    let n = diff.norm();
                    let w = if n > 0.0 { diff * (zeta / n) } else { diff };
                    MmdDiscriminator::with_weights(&witness, project_ball(w, zeta))
                }
            };
        }
        let w = match cfg.averaging {
            Averaging::Harmonic => {
                w_bar = &w_bar * (1.0 - 1.0 / k as f64) + witness.weights() / k as f64;
                w_bar.clone()
            }
            Averaging::Uniform => witness.weights().clone(),
        };
        let cost = |s: &DVector<f64>| w.dot(&features.featurize(s));
        let (pi, v) = best_response_knr(model, initial_state, horizon, num_actions, &cost, bonus, search_cfg, rng)?;
        lower = lower.max(v / hf - w.dot(expert_mean));
        let (mu, b) = profile(pi.actions());
        let gamma = 1.0 / k as f64;
        mix.step(pi.actions().to_vec(), gamma);
        mu_bar = &mu_bar * (1.0 - gamma) + &mu * gamma;
        b_bar = (1.0 - gamma) * b_bar + gamma * b;
        mu_last = Some(mu);
        let obj = zeta * (&mu_bar - expert_mean).norm() - b_bar;
        if best.as_ref().is_none_or(|x| obj < x.0) {
            best = Some((obj, mix.weights.clone()));
        }
        if best.as_ref().is_some_and(|x| x.0 - lower <= cfg.tolerance) {
            break;
        }
    }

    let (objective, weights) = best.expect("at least one iteration");
    let snapshot = Mixture {
        items: mix.items[..weights.len()].to_vec(),
        weights,
    };
    let components: Vec<(f64, Policy)> = snapshot
        .normalized()
        .into_iter()
        .map(|(w, seq)| (w, Policy::OpenLoop(OpenLoopPolicy::new(seq.clone()))))
        .collect();
    Ok(KnrSolution {
        policy: MixedPolicy::new(components)?,
        objective,
        lower_bound: lower,
        witness,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminator::RffFeatureMap;
    use crate::env::FeatureMap;
    use crate::model::{theory_bonus, CalibratedModel, LinearDynamics};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn toy_model() -> LinearDynamics {
        LinearDynamics::new(
            FeatureMap::PerActionTanh { state_dim: 1, num_actions: 2 },
            DMatrix::from_row_slice(1, 4, &[0.9, 0.5, 0.9, -0.5]),
        )
    }

    #[test]
    fn single_action_has_a_unique_sequence() {
        let m = LinearDynamics::new(FeatureMap::OneHotAction { num_actions: 1 }, DMatrix::zeros(1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pi, _) = best_response_knr(
            &m,
            &DVector::zeros(1),
            4,
            1,
            &|_| 0.0,
            &BonusFunction::zero(),
            &SearchConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(pi.actions(), &[0, 0, 0, 0]);
    }

    struct OneUncertainAction;

    impl CalibratedModel for OneUncertainAction {
        type State = DVector<f64>;
        fn uncertainty(&self, _s: &DVector<f64>, a: usize) -> f64 {
            if a == 2 {
                1.5
            } else {
                0.1
            }
        }
    }

    #[test]
    fn dominant_bonus_selects_the_uncertain_action() {
        let m = LinearDynamics::new(FeatureMap::OneHotAction { num_actions: 3 }, DMatrix::from_row_slice(1, 3, &[0.0, 0.5, 1.0]));
        let bonus = theory_bonus(Arc::new(OneUncertainAction), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Cost would favor action 0; the bonus gap 1.4 outweighs any cost in [0, 1].
        let (pi, _) = best_response_knr(&m, &DVector::zeros(1), 1, 3, &|s| s[0].abs().min(1.0), &bonus, &SearchConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(pi.actions(), &[2]);
    }

    #[test]
    fn exhaustive_and_full_random_shooting_agree() {
        let m = toy_model();
        let cost = |s: &DVector<f64>| (s[0] - 0.7).abs().min(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = best_response_knr(&m, &DVector::zeros(1), 6, 2, &cost, &BonusFunction::zero(), &SearchConfig::default(), &mut rng)
            .unwrap();
        let rs_cfg = SearchConfig {
            exhaustive_budget: 10,
            random_shooting: true,
            n_candidates: 64,
        };
        let rs = best_response_knr(&m, &DVector::zeros(1), 6, 2, &cost, &BonusFunction::zero(), &rs_cfg, &mut rng).unwrap();
        assert_eq!(ex, rs);
        let strict = SearchConfig {
            random_shooting: false,
            ..rs_cfg
        };
        let err = best_response_knr(&m, &DVector::zeros(1), 6, 2, &cost, &BonusFunction::zero(), &strict, &mut rng);
        assert!(matches!(err, Err(Error::SearchBudget { size: 64, budget: 10 })));
    }

    #[test]
    fn imitating_a_feasible_expert_drives_the_objective_down() {
        let m = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let expert_seq = [1, 0, 0, 1, 0];
        let states = nominal_rollout(&m, &DVector::zeros(1), &expert_seq);
        let map = RffFeatureMap::new(1, 64, 0.5, &mut rng).unwrap();
        let expert_mean = map.mean_features(&states[..5]);
        let disc = MmdDiscriminator::new(map, 1.0).unwrap();
        let cfg = MinMaxConfig {
            iterations: 500,
            tolerance: 1e-4,
            ..MinMaxConfig::default()
        };
        let sol = solve_minmax_knr(&m, &DVector::zeros(1), 5, 2, &BonusFunction::zero(), &disc, &expert_mean, &cfg, &SearchConfig::default(), &mut rng)
            .unwrap();
        assert!(sol.objective <= 0.05, "objective {}", sol.objective);
        assert!(sol.lower_bound <= sol.objective + 1e-12);
    }
}
