//! Finite-horizon environments, policies and exact/Monte-Carlo evaluation.

mod knr;
mod policy;
pub mod random;
mod tabular;

use rand::Rng;

use crate::error::{Error, Result};

pub use knr::{trajectory_cost, value_eval_mc, FeatureMap, KnrSystem, McEstimate, StateCost};
pub use policy::{MixedPolicy, OpenLoopPolicy, Policy, TabularPolicy};
pub use tabular::{
    occupancy_exact, occupancy_mixed, optimal_policy, value_eval_mixed, value_eval_tabular,
    value_functions, OccupancyMeasure, TabularDynamics, TabularMdp, TransitionKernel,
};

/// An episodic environment that can be simulated step by step.
pub trait Environment {
    type State: Clone;

    fn horizon(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn initial_state(&self) -> Self::State;

    fn step<R: Rng + ?Sized>(
        &self,
        h: usize,
        state: &Self::State,
        action: usize,
        rng: &mut R,
    ) -> Result<Self::State>;

    fn select_action<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        h: usize,
        state: &Self::State,
        rng: &mut R,
    ) -> Result<usize>;
}

/// States `s_0..s_H` and actions `a_0..a_{H-1}` of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<usize>,
}

impl<S> Trajectory<S> {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// `(h, s_h, a_h, s_{h+1})` transitions.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, &S, usize, &S)> {
        self.actions
            .iter()
            .enumerate()
            .map(|(h, &a)| (h, &self.states[h], a, &self.states[h + 1]))
    }
}

/// Samples one episode of `policy` in `env`.
pub fn rollout<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory<E::State>> {
    let horizon = env.horizon();
    if policy.horizon() != horizon {
        return Err(Error::config(format!(
            "policy horizon {} differs from environment horizon {horizon}",
            policy.horizon()
        )));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    states.push(env.initial_state());
    for h in 0..horizon {
        let s = &states[h];
        let a = env.select_action(policy, h, s, rng)?;
        if a >= env.num_actions() {
            return Err(Error::invalid(format!("action {a} out of range")));
        }
        let next = env.step(h, s, a, rng)?;
        actions.push(a);
        states.push(next);
    }
    Ok(Trajectory { states, actions })
}

/// Draws a mixture component, then rolls it out.
pub fn rollout_mixed<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &MixedPolicy,
    rng: &mut R,
) -> Result<Trajectory<E::State>> {
    let component = policy.sample_component(rng);
    rollout(env, component, rng)
}

impl Environment for TabularMdp {
    type State = usize;

    fn horizon(&self) -> usize {
        TabularMdp::horizon(self)
    }

    fn num_actions(&self) -> usize {
        TabularMdp::num_actions(self)
    }

    fn initial_state(&self) -> usize {
        TabularMdp::initial_state(self)
    }

    fn step<R: Rng + ?Sized>(&self, h: usize, state: &usize, action: usize, rng: &mut R) -> Result<usize> {
        Ok(self.sample_next(h, *state, action, rng))
    }

    fn select_action<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        h: usize,
        state: &usize,
        rng: &mut R,
    ) -> Result<usize> {
        match policy {
            Policy::Tabular(p) => {
                if p.num_states() != self.num_states() || p.num_actions() != self.num_actions() {
                    return Err(Error::config("tabular policy shape differs from the MDP"));
                }
                Ok(p.sample_action(h, *state, rng))
            }
            Policy::OpenLoop(p) => Ok(p.actions()[h]),
        }
    }
}
