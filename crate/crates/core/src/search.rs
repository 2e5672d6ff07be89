//! Open-loop action-sequence search shared by the expert and the planner.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// `A^H`, saturating at `u128::MAX`.
pub(crate) fn sequence_count(num_actions: usize, horizon: usize) -> u128 {
    (0..horizon).fold(1u128, |acc, _| acc.saturating_mul(num_actions as u128))
}

/// Minimizes `Σ_h stage_cost(s_h, a_h)` over all `A^H` sequences by depth-first
/// enumeration. Ties keep the lexicographically first sequence.
pub(crate) fn exhaustive<S: Clone>(
    init: &S,
    horizon: usize,
    num_actions: usize,
    budget: u64,
    step: &dyn Fn(&S, usize) -> Result<S>,
    stage_cost: &dyn Fn(usize, &S, usize) -> f64,
) -> Result<(Vec<usize>, f64)> {
    let size = sequence_count(num_actions, horizon);
    if size > budget as u128 {
        return Err(Error::SearchBudget { size, budget });
    }
    let mut best = (vec![0; horizon], f64::INFINITY);
    let mut prefix = Vec::with_capacity(horizon);
    dfs(init, 0.0, &mut prefix, horizon, num_actions, step, stage_cost, &mut best)?;
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn dfs<S: Clone>(
    state: &S,
    acc: f64,
    prefix: &mut Vec<usize>,
    horizon: usize,
    num_actions: usize,
    step: &dyn Fn(&S, usize) -> Result<S>,
    stage_cost: &dyn Fn(usize, &S, usize) -> f64,
    best: &mut (Vec<usize>, f64),
) -> Result<()> {
    let h = prefix.len();
    if h == horizon {
        if acc < best.1 {
            best.0.clone_from(prefix);
            best.1 = acc;
        }
        return Ok(());
    }
    for a in 0..num_actions {
        let c = acc + stage_cost(h, state, a);
        let next = if h + 1 < horizon { step(state, a)? } else { state.clone() };
        prefix.push(a);
        dfs(&next, c, prefix, horizon, num_actions, step, stage_cost, best)?;
        prefix.pop();
    }
    Ok(())
}

/// Decodes a base-`A` index into a sequence with `a_0` most significant, so
/// index order is lexicographic order.
pub(crate) fn decode(mut idx: u128, horizon: usize, num_actions: usize) -> Vec<usize> {
    let mut seq = vec![0; horizon];
    for h in (0..horizon).rev() {
        seq[h] = (idx % num_actions as u128) as usize;
        idx /= num_actions as u128;
    }
    seq
}

/// Scores `n_candidates` distinct sequences drawn without replacement and
/// returns the best; candidates are scored in index order so ties resolve to
/// the lexicographically first.
pub(crate) fn random_shooting<S: Clone, R: Rng + ?Sized>(
    init: &S,
    horizon: usize,
    num_actions: usize,
    n_candidates: usize,
    step: &dyn Fn(&S, usize) -> Result<S>,
    stage_cost: &dyn Fn(usize, &S, usize) -> f64,
    rng: &mut R,
) -> Result<(Vec<usize>, f64)> {
    if n_candidates == 0 {
        return Err(Error::config("random shooting needs at least one candidate"));
    }
    let size = sequence_count(num_actions, horizon);
    let mut picks: Vec<u128> = if size <= usize::MAX as u128 && (size as usize) <= n_candidates {
        (0..size).collect()
    } else if size <= (1u128 << 48) {
        index::sample(rng, size as usize, n_candidates)
            .into_iter()
            .map(|i| i as u128)
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(n_candidates);
        while seen.len() < n_candidates {
            let seq: Vec<usize> = (0..horizon).map(|_| rng.random_range(0..num_actions)).collect();
            let idx = seq.iter().fold(0u128, |acc, &a| acc * num_actions as u128 + a as u128);
            seen.insert(idx);
        }
        seen.into_iter().collect()
    };
    picks.sort_unstable();
    let mut best = (Vec::new(), f64::INFINITY);
    for idx in picks {
        let seq = decode(idx, horizon, num_actions);
        let cost = sequence_cost(init, &seq, step, stage_cost)?;
        if cost < best.1 {
            best = (seq, cost);
        }
    }
    Ok(best)
}

/// `Σ_h stage_cost(s_h, a_h)` along the nominal rollout of `seq`.
pub(crate) fn sequence_cost<S: Clone>(
    init: &S,
    seq: &[usize],
    step: &dyn Fn(&S, usize) -> Result<S>,
    stage_cost: &dyn Fn(usize, &S, usize) -> f64,
) -> Result<f64> {
    let mut s = init.clone();
    let mut total = 0.0;
    for (h, &a) in seq.iter().enumerate() {
        total += stage_cost(h, &s, a);
        if h + 1 < seq.len() {
            s = step(&s, a)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Integer walk: state += action - 1, stage cost |state - 2| + 0.01 a.
    fn step(s: &i64, a: usize) -> Result<i64> {
        Ok(s + a as i64 - 1)
    }

    fn cost(_h: usize, s: &i64, a: usize) -> f64 {
        (s - 2).abs() as f64 + 0.01 * a as f64
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let (seq, best) = exhaustive(&0i64, 4, 3, 1000, &step, &cost).unwrap();
        let mut brute = f64::INFINITY;
        for idx in 0..81u128 {
            let c = sequence_cost(&0i64, &decode(idx, 4, 3), &step, &cost).unwrap();
            brute = brute.min(c);
        }
        assert_eq!(best, brute);
        assert_eq!(sequence_cost(&0i64, &seq, &step, &cost).unwrap(), best);
    }

    #[test]
    fn budget_overflow_is_reported() {
        let err = exhaustive(&0i64, 10, 3, 1000, &step, &cost).unwrap_err();
        assert!(matches!(err, Error::SearchBudget { size: 59049, budget: 1000 }));
    }

    #[test]
    fn full_random_shooting_equals_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = exhaustive(&0i64, 4, 3, 1000, &step, &cost).unwrap();
        let rs = random_shooting(&0i64, 4, 3, 81, &step, &cost, &mut rng).unwrap();
        assert_eq!(ex, rs);
    }

    #[test]
    fn decode_is_lexicographic() {
        assert_eq!(decode(0, 3, 2), vec![0, 0, 0]);
        assert_eq!(decode(1, 3, 2), vec![0, 0, 1]);
        assert_eq!(decode(6, 3, 2), vec![1, 1, 0]);
    }
}
