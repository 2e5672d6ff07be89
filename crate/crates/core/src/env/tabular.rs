//! Finite state-action MDPs with exact forward (occupancy) and backward
//! (value) dynamic programs.

use rand::Rng;

use super::policy::{sample_index, MixedPolicy, TabularPolicy};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Read access to a finite-horizon tabular transition model, true or learned.
pub trait TabularDynamics {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> usize;
    /// Next-state distribution at step `h`.
    fn next_state_dist(&self, h: usize, s: usize, a: usize) -> &[f64];
}

/// Row-stochastic `S x A -> Δ(S)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Builds a kernel from a flat `[s][a][s']` table, validating every row.
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("kernel needs at least one state and one action"));
        }
        if probs.len() != num_states * num_actions * num_states {
            return Err(Error::invalid(format!(
                "kernel table has {} entries, expected {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        for (i, row) in probs.chunks(num_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid(format!(
                    "transition row (s={}, a={}) is not a distribution (sum {sum})",
                    i / num_actions,
                    i % num_actions
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    /// Every `(s, a)` row is uniform over states.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_states as f64;
        Self {
            num_states,
            num_actions,
            probs: vec![p; num_states * num_actions * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    /// ℓ₁ distance between the `(s, a)` rows of two kernels.
    pub fn l1_distance(&self, other: &TransitionKernel, s: usize, a: usize) -> f64 {
        self.row(s, a)
            .iter()
            .zip(other.row(s, a))
            .map(|(p, q)| (p - q).abs())
            .sum()
    }
}

/// Episodic MDP with state-dependent costs in `[0, 1]` and a fixed start state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    horizon: usize,
    kernel: TransitionKernel,
    step_kernels: Option<Vec<TransitionKernel>>,
    cost: Vec<f64>,
    initial_state: usize,
}

impl TabularMdp {
    pub fn new(
        horizon: usize,
        kernel: TransitionKernel,
        cost: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        if cost.len() != kernel.num_states() {
            return Err(Error::invalid("cost vector length differs from the state count"));
        }
        if cost.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("costs must lie in [0, 1]"));
        }
        if initial_state >= kernel.num_states() {
            return Err(Error::invalid("initial state out of range"));
        }
        Ok(Self {
            horizon,
            kernel,
            step_kernels: None,
            cost,
            initial_state,
        })
    }

    /// Replaces the pooled kernel by one kernel per step.
    pub fn with_step_kernels(mut self, kernels: Vec<TransitionKernel>) -> Result<Self> {
        if kernels.len() != self.horizon {
            return Err(Error::invalid("need exactly one kernel per step"));
        }
        if kernels.iter().any(|k| {
            k.num_states() != self.kernel.num_states() || k.num_actions() != self.kernel.num_actions()
        }) {
            return Err(Error::invalid("per-step kernel shape mismatch"));
        }
        self.step_kernels = Some(kernels);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn kernel_at(&self, h: usize) -> &TransitionKernel {
        match &self.step_kernels {
            Some(ks) => &ks[h],
            None => &self.kernel,
        }
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Cost as a state-action function (constant in the action).
    pub fn state_action_cost(&self) -> Vec<f64> {
        let a = self.num_actions();
        self.cost
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, a))
            .collect()
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.next_state_dist(h, s, a), rng)
    }
}

impl TabularDynamics for TabularMdp {
    fn num_states(&self) -> usize {
        TabularMdp::num_states(self)
    }

    fn num_actions(&self) -> usize {
        TabularMdp::num_actions(self)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn next_state_dist(&self, h: usize, s: usize, a: usize) -> &[f64] {
        self.kernel_at(h).row(s, a)
    }
}

/// Per-step state-action visitation distributions `d_h(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    per_step: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `d_h` as a flat `[s][a]` table.
    pub fn step(&self, h: usize) -> &[f64] {
        let n = self.num_states * self.num_actions;
        &self.per_step[h * n..(h + 1) * n]
    }

    pub fn step_state_marginal(&self, h: usize) -> Vec<f64> {
        self.step(h)
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// `d(s, a) = (1/H) Σ_h d_h(s, a)`.
    pub fn average(&self) -> Vec<f64> {
        let n = self.num_states * self.num_actions;
        let mut avg = vec![0.0; n];
        for h in 0..self.horizon {
            for (acc, v) in avg.iter_mut().zip(self.step(h)) {
                *acc += v;
            }
        }
        let scale = 1.0 / self.horizon as f64;
        avg.iter_mut().for_each(|v| *v *= scale);
        avg
    }

    /// `d(s) = Σ_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.average()
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// `Σ_h Σ_{s,a} d_h(s, a) g(s, a)`, i.e. the expected total of `g`.
    pub fn total(&self, g: &[f64]) -> f64 {
        (0..self.horizon)
            .map(|h| self.step(h).iter().zip(g).map(|(d, c)| d * c).sum::<f64>())
            .sum()
    }

    /// `Σ_i w_i d_i`; all inputs must share one shape.
    pub fn mix(parts: &[(f64, OccupancyMeasure)]) -> Result<OccupancyMeasure> {
        let first = &parts
            .first()
            .ok_or_else(|| Error::invalid("cannot mix zero occupancy measures"))?
            .1;
        let mut per_step = vec![0.0; first.per_step.len()];
        for (w, occ) in parts {
            if occ.per_step.len() != per_step.len() {
                return Err(Error::invalid("occupancy shapes differ"));
            }
            for (acc, v) in per_step.iter_mut().zip(&occ.per_step) {
                *acc += w * v;
            }
        }
        Ok(OccupancyMeasure {
            per_step,
            ..first.clone()
        })
    }
}

/// Forward recursion for `d_h^π` under the given dynamics.
pub fn occupancy_exact<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    policy: &TabularPolicy,
) -> Result<OccupancyMeasure> {
    let (ns, na, horizon) = (dynamics.num_states(), dynamics.num_actions(), dynamics.horizon());
    check_policy_shape(dynamics, policy)?;
    let mut per_step = vec![0.0; horizon * ns * na];
    let mut state_dist = vec![0.0; ns];
    state_dist[dynamics.initial_state()] = 1.0;
    for h in 0..horizon {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mass = state_dist[s];
            if mass == 0.0 {
                continue;
            }
            for (a, &p) in policy.action_probs(h, s).iter().enumerate() {
                let m = mass * p;
                if m == 0.0 {
                    continue;
                }
                per_step[(h * ns + s) * na + a] += m;
                for (sn, &q) in dynamics.next_state_dist(h, s, a).iter().enumerate() {
                    next[sn] += m * q;
                }
            }
        }
        state_dist = next;
    }
    Ok(OccupancyMeasure {
        horizon,
        num_states: ns,
        num_actions: na,
        per_step,
    })
}

/// Occupancy of a mixture: the weighted sum of component occupancies.
pub fn occupancy_mixed<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    policy: &MixedPolicy,
) -> Result<OccupancyMeasure> {
    let parts = policy
        .components()
        .iter()
        .map(|(w, p)| {
            let tab = p.to_tabular(dynamics.num_states(), dynamics.num_actions())?;
            Ok((*w, occupancy_exact(dynamics, &tab)?))
        })
        .collect::<Result<Vec<_>>>()?;
    OccupancyMeasure::mix(&parts)
}

/// Backward recursion: `V_h(s)` for `h = 0..=H` (with `V_H ≡ 0`) under the
/// state-action cost table `cost[s * A + a]`.
pub fn value_functions<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    policy: &TabularPolicy,
    cost: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let (ns, na, horizon) = (dynamics.num_states(), dynamics.num_actions(), dynamics.horizon());
    check_policy_shape(dynamics, policy)?;
    check_cost_shape(dynamics, cost)?;
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            let mut v = 0.0;
            for (a, &p) in policy.action_probs(h, s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let cont: f64 = dynamics
                    .next_state_dist(h, s, a)
                    .iter()
                    .zip(&values[h + 1])
                    .map(|(q, v)| q * v)
                    .sum();
                v += p * (cost[s * na + a] + cont);
            }
            values[h][s] = v;
        }
    }
    Ok(values)
}

/// Expected total cost `V^π = Σ_h E[cost(s_h, a_h)]` via backward DP.
pub fn value_eval_tabular<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    policy: &TabularPolicy,
    cost: &[f64],
) -> Result<f64> {
    Ok(value_functions(dynamics, policy, cost)?[0][dynamics.initial_state()])
}

/// Value of a mixture (linear in the mixture weights).
pub fn value_eval_mixed<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    policy: &MixedPolicy,
    cost: &[f64],
) -> Result<f64> {
    policy.components().iter().try_fold(0.0, |acc, (w, p)| {
        let tab = p.to_tabular(dynamics.num_states(), dynamics.num_actions())?;
        Ok(acc + w * value_eval_tabular(dynamics, &tab, cost)?)
    })
}

/// Cost-minimizing deterministic nonstationary policy by backward induction.
/// Ties go to the lowest action index. Returns the policy and its value.
pub fn optimal_policy<D: TabularDynamics + ?Sized>(
    dynamics: &D,
    cost: &[f64],
) -> Result<(TabularPolicy, f64)> {
    let (ns, na, horizon) = (dynamics.num_states(), dynamics.num_actions(), dynamics.horizon());
    check_cost_shape(dynamics, cost)?;
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost table contains non-finite entries"));
    }
    let mut next_v = vec![0.0; ns];
    let mut actions = vec![0usize; horizon * ns];
    for h in (0..horizon).rev() {
        let mut v = vec![0.0; ns];
        for s in 0..ns {
            let mut best = f64::INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let q = cost[s * na + a]
                    + dynamics
                        .next_state_dist(h, s, a)
                        .iter()
                        .zip(&next_v)
                        .map(|(p, v)| p * v)
                        .sum::<f64>();
                if q < best {
                    best = q;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[h * ns + s] = best_a;
        }
        next_v = v;
    }
    let policy = TabularPolicy::deterministic(horizon, ns, na, &actions)?;
    Ok((policy, next_v[dynamics.initial_state()]))
}

fn check_policy_shape<D: TabularDynamics + ?Sized>(dynamics: &D, policy: &TabularPolicy) -> Result<()> {
    if policy.horizon() != dynamics.horizon()
        || policy.num_states() != dynamics.num_states()
        || policy.num_actions() != dynamics.num_actions()
    {
        return Err(Error::config(format!(
            "policy shape (H={}, S={}, A={}) does not match dynamics (H={}, S={}, A={})",
            policy.horizon(),
            policy.num_states(),
            policy.num_actions(),
            dynamics.horizon(),
            dynamics.num_states(),
            dynamics.num_actions()
        )));
    }
    Ok(())
}

fn check_cost_shape<D: TabularDynamics + ?Sized>(dynamics: &D, cost: &[f64]) -> Result<()> {
    if cost.len() != dynamics.num_states() * dynamics.num_actions() {
        return Err(Error::invalid(format!(
            "cost table has {} entries, expected S*A = {}",
            cost.len(),
            dynamics.num_states() * dynamics.num_actions()
        )));
    }
    Ok(())
}
