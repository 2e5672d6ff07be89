use rand::Rng;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Nonstationary tabular policy: one action distribution per `(h, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    /// Builds a policy from a flat `[h][s][a]` probability table.
    pub fn from_probs(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != horizon * num_states * num_actions {
            return Err(Error::invalid(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                horizon * num_states * num_actions
            )));
        }
        for (i, row) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid(format!(
                    "action distribution at (h={}, s={}) is not a probability vector (sum {sum})",
                    i / num_states,
                    i % num_states
                )));
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    /// Deterministic policy from a `[h][s]` action table.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::invalid(format!(
                "action table has {} entries, expected {}",
                actions.len(),
                horizon * num_states
            )));
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (i, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::invalid(format!("action {a} out of range")));
            }
            probs[i * num_actions + a] = 1.0;
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn action_probs(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// The action chosen with probability one at `(h, s)`, if any.
    pub fn deterministic_action(&self, h: usize, s: usize) -> Option<usize> {
        self.action_probs(h, s).iter().position(|&p| p == 1.0)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        sample_index(self.action_probs(h, s), rng)
    }
}

/// Fixed action sequence, ignoring the state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpenLoopPolicy {
    actions: Vec<usize>,
}

impl OpenLoopPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// The same sequence as a deterministic tabular policy.
    pub fn to_tabular(&self, num_states: usize, num_actions: usize) -> Result<TabularPolicy> {
        let table: Vec<usize> = self
            .actions
            .iter()
            .flat_map(|&a| std::iter::repeat_n(a, num_states))
            .collect();
        TabularPolicy::deterministic(self.horizon(), num_states, num_actions, &table)
    }
}

/// A single learner or expert policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Tabular(TabularPolicy),
    OpenLoop(OpenLoopPolicy),
}

impl Policy {
    pub fn horizon(&self) -> usize {
        match self {
            Policy::Tabular(p) => p.horizon(),
            Policy::OpenLoop(p) => p.horizon(),
        }
    }

    /// Tabular view; open-loop sequences become state-independent tables.
    pub fn to_tabular(&self, num_states: usize, num_actions: usize) -> Result<TabularPolicy> {
        match self {
            Policy::Tabular(p) => {
                if p.num_states() != num_states || p.num_actions() != num_actions {
                    return Err(Error::config(format!(
                        "policy is defined over {}x{} state-actions, environment has {}x{}",
                        p.num_states(),
                        p.num_actions(),
                        num_states,
                        num_actions
                    )));
                }
                Ok(p.clone())
            }
            Policy::OpenLoop(p) => p.to_tabular(num_states, num_actions),
        }
    }
}

impl From<TabularPolicy> for Policy {
    fn from(p: TabularPolicy) -> Self {
        Policy::Tabular(p)
    }
}

impl From<OpenLoopPolicy> for Policy {
    fn from(p: OpenLoopPolicy) -> Self {
        Policy::OpenLoop(p)
    }
}

/// Explicit convex combination of policies. Executing it draws one component
/// per episode, so its occupancy is the weighted sum of component occupancies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPolicy {
    components: Vec<(f64, Policy)>,
}

impl MixedPolicy {
    pub fn new(components: Vec<(f64, Policy)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixed policy needs at least one component"));
        }
        let horizon = components[0].1.horizon();
        if components.iter().any(|(_, p)| p.horizon() != horizon) {
            return Err(Error::invalid("mixture components disagree on the horizon"));
        }
        if components.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn single(policy: impl Into<Policy>) -> Self {
        Self {
            components: vec![(1.0, policy.into())],
        }
    }

    pub fn components(&self) -> &[(f64, Policy)] {
        &self.components
    }

    pub fn horizon(&self) -> usize {
        self.components[0].1.horizon()
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> &Policy {
        let weights: Vec<f64> = self.components.iter().map(|(w, _)| *w).collect();
        &self.components[sample_index(&weights, rng)].1
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
