//! Random instance generators used by property tests and the verification suite.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{TabularMdp, TabularPolicy, TransitionKernel};

/// Probability vector drawn from a flat Dirichlet.
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut p: Vec<f64> = draws.iter().map(|x| x / total).collect();
    // Push the rounding residue into the largest entry so rows sum to 1 tightly.
    let residue = 1.0 - p.iter().sum::<f64>();
    let imax = (0..n).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
    p[imax] += residue;
    p
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    super::policy::sample_index(probs, rng)
}

pub fn random_kernel<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> TransitionKernel {
    let probs = (0..num_states * num_actions)
        .flat_map(|_| random_simplex(num_states, rng))
        .collect();
    TransitionKernel::new(num_states, num_actions, probs).expect("rows are normalized")
}

/// Random kernel, uniform `[0, 1]` state costs, start state 0.
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> TabularMdp {
    let kernel = random_kernel(num_states, num_actions, rng);
    let cost = (0..num_states).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(horizon, kernel, cost, 0).expect("valid random instance")
}

pub fn random_policy<R: Rng + ?Sized>(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> TabularPolicy {
    let probs = (0..horizon * num_states)
        .flat_map(|_| random_simplex(num_actions, rng))
        .collect();
    TabularPolicy::from_probs(horizon, num_states, num_actions, probs).expect("rows are normalized")
}

pub fn random_deterministic_policy<R: Rng + ?Sized>(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> TabularPolicy {
    let actions: Vec<usize> = (0..horizon * num_states)
        .map(|_| rng.random_range(0..num_actions))
        .collect();
    TabularPolicy::deterministic(horizon, num_states, num_actions, &actions).expect("in range")
}
