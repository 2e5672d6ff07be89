//! Small benchmark environments used by the experiments and the test suite.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::env::{
    value_eval_mc, value_eval_tabular, FeatureMap, KnrSystem, MixedPolicy, OpenLoopPolicy, Policy, StateCost, TabularMdp,
    TabularPolicy, TransitionKernel,
};
use crate::error::{Error, Result};
use crate::expert::{sample_expert_states, solve_openloop_knr, solve_optimal_tabular, ExpertDataset};

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_STAY: usize = 1;
pub const CHAIN_RIGHT: usize = 2;

/// Chain of `n` states with actions left/stay/right. A move succeeds with
/// probability `1 - slip` and otherwise leaves the state unchanged. The cost
/// falls linearly from 1 at state 0 to 0 at the far end; the walk starts at 0.
pub fn chain_mdp(num_states: usize, horizon: usize, slip: f64) -> Result<TabularMdp> {
    if num_states < 2 {
        return Err(Error::invalid("a chain needs at least two states"));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::invalid("slip must lie in [0, 1)"));
    }
    let mut probs = vec![0.0; num_states * 3 * num_states];
    for s in 0..num_states {
        for a in 0..3 {
            let target = match a {
                CHAIN_LEFT => s.saturating_sub(1),
                CHAIN_STAY => s,
                _ => (s + 1).min(num_states - 1),
            };
            let row = &mut probs[(s * 3 + a) * num_states..(s * 3 + a + 1) * num_states];
            row[target] += 1.0 - slip;
            row[s] += slip;
        }
    }
    let last = (num_states - 1) as f64;
    let cost = (0..num_states).map(|s| 1.0 - s as f64 / last).collect();
    TabularMdp::new(horizon, TransitionKernel::new(num_states, 3, probs)?, cost, 0)
}

/// Combination lock of depth `horizon`: lock states `0..horizon` and one
/// absorbing dead state `horizon`. In lock state `h` the action
/// `combination[h]` always advances; any other action advances with
/// probability `wrong_advance` and otherwise drops into the dead state.
/// Lock states cost 0, the dead state costs 1. The last lock state loops.
///
/// With `wrong_advance > 0` a single lucky transition makes a wrong action
/// look exactly like the right one, which is what stalls a greedy learner.
pub fn combination_lock(num_actions: usize, combination: &[usize], wrong_advance: f64) -> Result<TabularMdp> {
    let horizon = combination.len();
    if horizon == 0 || num_actions < 2 {
        return Err(Error::invalid("a lock needs depth ≥ 1 and at least two actions"));
    }
    if combination.iter().any(|&a| a >= num_actions) {
        return Err(Error::invalid("combination action out of range"));
    }
    if !(0.0..1.0).contains(&wrong_advance) {
        return Err(Error::invalid("wrong_advance must lie in [0, 1)"));
    }
    let ns = horizon + 1;
    let dead = horizon;
    let mut probs = vec![0.0; ns * num_actions * ns];
    for s in 0..ns {
        for a in 0..num_actions {
            let row = &mut probs[(s * num_actions + a) * ns..(s * num_actions + a + 1) * ns];
            if s == dead {
                row[dead] = 1.0;
                continue;
            }
            let next = (s + 1).min(horizon - 1);
            let p = if a == combination[s] { 1.0 } else { wrong_advance };
            row[next] += p;
            row[dead] += 1.0 - p;
        }
    }
    let mut cost = vec![0.0; ns];
    cost[dead] = 1.0;
    TabularMdp::new(horizon, TransitionKernel::new(ns, num_actions, probs)?, cost, 0)
}

/// Lock whose combination is drawn uniformly, avoiding action 0 so that the
/// lowest-index tie-break never opens it by accident.
pub fn random_combination_lock<R: Rng + ?Sized>(
    num_actions: usize,
    horizon: usize,
    wrong_advance: f64,
    rng: &mut R,
) -> Result<TabularMdp> {
    if num_actions < 2 {
        return Err(Error::invalid("a lock needs at least two actions"));
    }
    let choices: Vec<usize> = (1..num_actions).collect();
    let combination: Vec<usize> = (0..horizon)
        .map(|_| *choices.choose(rng).expect("nonempty"))
        .collect();
    combination_lock(num_actions, &combination, wrong_advance)
}

/// One-dimensional KNR with two actions and `PerActionTanh` features (d = 4):
/// action 0 pulls towards `-0.5/√2`, action 1 pushes by `+0.5/√2`.
/// The cost is the distance to 1, saturating at 2.
pub fn toy_knr(horizon: usize, noise_std: f64) -> Result<KnrSystem> {
    KnrSystem::new(
        FeatureMap::PerActionTanh { state_dim: 1, num_actions: 2 },
        toy_knr_weights(),
        noise_std,
        horizon,
        2,
        DVector::zeros(1),
        StateCost::DistanceToTarget { target: DVector::from_element(1, 1.0), scale: 2.0 },
    )
}

pub fn toy_knr_weights() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 4, &[0.5, -0.5, 1.0, 0.5])
}

/// Environment, expert demonstrations and the expert's true value.
#[derive(Debug, Clone)]
pub struct TabularTask {
    pub env: TabularMdp,
    pub expert_policy: TabularPolicy,
    pub expert_value: f64,
    pub expert_data: ExpertDataset<usize>,
}

/// Optimal policy of `env` as the expert, with `n` demonstrations.
pub fn tabular_task<R: Rng + ?Sized>(env: TabularMdp, n: usize, rng: &mut R) -> Result<TabularTask> {
    let expert_policy = solve_optimal_tabular(&env)?;
    let expert_value = value_eval_tabular(&env, &expert_policy, &env.state_action_cost())?;
    let expert_data = sample_expert_states(&env, &Policy::Tabular(expert_policy.clone()), n, rng)?;
    Ok(TabularTask {
        env,
        expert_policy,
        expert_value,
        expert_data,
    })
}

#[derive(Debug, Clone)]
pub struct KnrTask {
    pub env: KnrSystem,
    pub expert_policy: OpenLoopPolicy,
    pub expert_value: f64,
    pub expert_data: ExpertDataset<DVector<f64>>,
}

/// Best nominal open-loop sequence as the expert. Its value is estimated
/// with `mc_rollouts` rollouts (exact when the system is noise free).
pub fn knr_task<R: Rng + ?Sized>(env: KnrSystem, n: usize, mc_rollouts: usize, rng: &mut R) -> Result<KnrTask> {
    let expert_policy = solve_openloop_knr(&env)?;
    let policy = Policy::OpenLoop(expert_policy.clone());
    let mixed = MixedPolicy::single(policy.clone());
    let expert_value = value_eval_mc(&env, &mixed, |s| env.cost().eval(s), mc_rollouts, rng)?.mean;
    let expert_data = sample_expert_states(&env, &policy, n, rng)?;
    Ok(KnrTask {
        env,
        expert_policy,
        expert_value,
        expert_data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{occupancy_exact, Environment};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_expert_walks_right() {
        let mdp = chain_mdp(6, 5, 0.0).unwrap();
        let pi = solve_optimal_tabular(&mdp).unwrap();
        for h in 0..4 {
            assert_eq!(pi.deterministic_action(h, h), Some(CHAIN_RIGHT));
        }
        let v = value_eval_tabular(&mdp, &pi, &mdp.state_action_cost()).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lock_expert_is_free_and_others_pay() {
        let mdp = combination_lock(3, &[2, 1, 2, 1], 0.0).unwrap();
        let pi = solve_optimal_tabular(&mdp).unwrap();
        let c = mdp.state_action_cost();
        assert_eq!(value_eval_tabular(&mdp, &pi, &c).unwrap(), 0.0);
        let zero = TabularPolicy::deterministic(4, 5, 3, &[0; 20]).unwrap();
        assert_eq!(value_eval_tabular(&mdp, &zero, &c).unwrap(), 3.0);
        let occ = occupancy_exact(&mdp, &pi).unwrap();
        for h in 0..4 {
            assert_eq!(occ.step_state_marginal(h)[h], 1.0);
        }
        // Wrong actions that advance half the time: dying at step h costs 3 - h more.
        let leaky = combination_lock(3, &[2, 1, 2, 1], 0.5).unwrap();
        let v = value_eval_tabular(&leaky, &zero, &leaky.state_action_cost()).unwrap();
        assert!((v - (0.5 + 0.75 + 0.875)).abs() < 1e-12);
    }

    #[test]
    fn toy_knr_shape_and_expert() {
        let sys = toy_knr(5, 0.0).unwrap();
        assert_eq!(sys.features().dim(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let task = knr_task(sys, 3, 2, &mut rng).unwrap();
        assert!(task.expert_value < 5.0 * 0.5);
        assert_eq!(task.expert_data.len(), 3);
        assert_eq!(task.env.horizon(), 5);
    }
}
