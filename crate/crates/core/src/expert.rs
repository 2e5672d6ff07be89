//! Expert construction and state-only demonstration datasets.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng;

use crate::env::{rollout, Environment, KnrSystem, OpenLoopPolicy, Policy, TabularMdp, TabularPolicy};
use crate::env::optimal_policy;
use crate::error::{Error, Result};
use crate::search;

/// Largest `A^H` the open-loop expert will enumerate.
pub const EXPERT_SEARCH_BUDGET: u64 = 1_000_000;

/// `N` state-only trajectories `s_0..s_H`. Actions are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDataset<S> {
    trajectories: Vec<Vec<S>>,
}

impl<S: Clone> ExpertDataset<S> {
    pub fn new(trajectories: Vec<Vec<S>>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::invalid("expert dataset needs at least one trajectory"))?;
        let len = first.len();
        if len < 2 {
            return Err(Error::invalid("expert trajectories need at least two states"));
        }
        if trajectories.iter().any(|t| t.len() != len) {
            return Err(Error::invalid("expert trajectories have different lengths"));
        }
        Ok(Self { trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].len() - 1
    }

    pub fn trajectories(&self) -> &[Vec<S>] {
        &self.trajectories
    }

    /// One state per trajectory at a uniformly drawn step `h ∈ [0, H)`.
    pub fn single_sample_view<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        let horizon = self.horizon();
        self.trajectories
            .iter()
            .map(|t| t[rng.random_range(0..horizon)].clone())
            .collect()
    }

    /// All states `s_h`, `h ∈ [0, H)`, of all trajectories.
    pub fn flat_view(&self) -> Vec<S> {
        let horizon = self.horizon();
        self.trajectories
            .iter()
            .flat_map(|t| t[..horizon].iter().cloned())
            .collect()
    }
}

impl ExpertDataset<usize> {
    /// Flat empirical state distribution `(1/NH) Σ_i Σ_{h<H} 1{s_h^i = s}`.
    pub fn state_distribution(&self, num_states: usize) -> Vec<f64> {
        let flat = self.flat_view();
        let mut d = vec![0.0; num_states];
        let w = 1.0 / flat.len() as f64;
        for s in flat {
            d[s] += w;
        }
        d
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# state_dim=1\n");
        for t in &self.trajectories {
            let row: Vec<String> = t.iter().map(|s| s.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (dim, rows) = parse_rows(text)?;
        if dim != 1 {
            return Err(Error::invalid("tabular datasets must have state_dim=1"));
        }
        let trajectories = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| {
                        if x >= 0.0 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(Error::invalid(format!("{x} is not a state index")))
                        }
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(trajectories)
    }
}

impl ExpertDataset<DVector<f64>> {
    pub fn to_text(&self) -> String {
        let dim = self.trajectories[0][0].len();
        let mut out = format!("# state_dim={dim}\n");
        for t in &self.trajectories {
            let mut first = true;
            for x in t.iter().flat_map(|s| s.iter()) {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{x:.16e}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (dim, rows) = parse_rows(text)?;
        let trajectories = rows
            .into_iter()
            .map(|r| {
                if r.len() % dim != 0 {
                    return Err(Error::invalid("row length is not a multiple of state_dim"));
                }
                Ok(r.chunks(dim).map(DVector::from_column_slice).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(trajectories)
    }
}

fn parse_rows(text: &str) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid("empty dataset text"))?;
    let dim: usize = header
        .trim()
        .strip_prefix("# state_dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::invalid("dataset header must read `# state_dim=<k>`"))?;
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("record {}: {e}", i + 1)))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((dim, rows))
}

/// Cost-minimizing deterministic nonstationary policy (ties to the lowest action).
pub fn solve_optimal_tabular(mdp: &TabularMdp) -> Result<TabularPolicy> {
    Ok(optimal_policy(mdp, &mdp.state_action_cost())?.0)
}

/// Best open-loop sequence on the noise-free nominal rollout, by exhaustive
/// search over all `A^H` sequences.
pub fn solve_openloop_knr(system: &KnrSystem) -> Result<OpenLoopPolicy> {
    let step = |s: &DVector<f64>, a: usize| system.nominal_next(s, a);
    let cost = |_h: usize, s: &DVector<f64>, _a: usize| system.cost().eval(s);
    let (seq, _) = search::exhaustive(
        &system.initial_state(),
        system.horizon(),
        system.num_actions(),
        EXPERT_SEARCH_BUDGET,
        &step,
        &cost,
    )?;
    Ok(OpenLoopPolicy::new(seq))
}

/// `N` independent expert rollouts with the actions dropped.
pub fn sample_expert_states<E: Environment, R: Rng + ?Sized>(
    env: &E,
    expert: &Policy,
    n: usize,
    rng: &mut R,
) -> Result<ExpertDataset<E::State>> {
    if n == 0 {
        return Err(Error::config("expert dataset size N must be at least 1"));
    }
    let trajectories = (0..n)
        .map(|_| Ok(rollout(env, expert, rng)?.states))
        .collect::<Result<Vec<_>>>()?;
    ExpertDataset::new(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::random::{random_mdp, random_policy};
    use crate::env::{occupancy_exact, value_eval_tabular, FeatureMap, StateCost, TransitionKernel};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cost_expert_is_all_action_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(3, 3, 4, &mut rng);
        let zero = TabularMdp::new(4, mdp.kernel().clone(), vec![0.0; 3], 0).unwrap();
        let pi = solve_optimal_tabular(&zero).unwrap();
        for h in 0..4 {
            for s in 0..3 {
                assert_eq!(pi.deterministic_action(h, s), Some(0));
            }
        }
    }

    #[test]
    fn absorbing_mdp_expert_takes_the_exit() {
        // Action 1 moves s0 to the zero-cost absorbing state 1.
        let kernel = TransitionKernel::new(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let mdp = TabularMdp::new(3, kernel, vec![1.0, 0.0], 0).unwrap();
        let pi = solve_optimal_tabular(&mdp).unwrap();
        assert_eq!(pi.deterministic_action(0, 0), Some(1));
    }

    #[test]
    fn expert_beats_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let mdp = random_mdp(4, 3, 4, &mut rng);
            let c = mdp.state_action_cost();
            let v = value_eval_tabular(&mdp, &solve_optimal_tabular(&mdp).unwrap(), &c).unwrap();
            for _ in 0..200 {
                let pi = random_policy(4, 4, 3, &mut rng);
                assert!(v <= value_eval_tabular(&mdp, &pi, &c).unwrap() + 1e-12);
            }
        }
    }

    fn one_step_knr(num_actions: usize) -> KnrSystem {
        let w = DMatrix::from_row_slice(1, 3, &[-1.0, 0.2, 0.9]);
        KnrSystem::new(
            FeatureMap::OneHotAction { num_actions: 3 },
            w.columns(0, 3).into_owned(),
            0.0,
            2,
            num_actions,
            DVector::zeros(1),
            StateCost::DistanceToTarget {
                target: DVector::from_element(1, 0.25),
                scale: 2.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn open_loop_expert_picks_the_closest_successor() {
        // H = 2 so s_1 = W e_a is costed: |−1−0.25|, |0.2−0.25|, |0.9−0.25|.
        let pi = solve_openloop_knr(&one_step_knr(3)).unwrap();
        assert_eq!(pi.actions()[0], 1);
        let single = solve_openloop_knr(&one_step_knr(1)).unwrap();
        assert_eq!(single.actions(), &[0, 0]);
    }

    #[test]
    fn dataset_shapes_and_no_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = one_step_knr(3);
        let pi = Policy::OpenLoop(solve_openloop_knr(&sys).unwrap());
        let one = sample_expert_states(&sys, &pi, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.trajectories()[0].len(), 3);
        let many = sample_expert_states(&sys, &pi, 5, &mut rng).unwrap();
        assert!(many.trajectories().iter().all(|t| t == &many.trajectories()[0]));
    }

    #[test]
    fn expert_state_frequencies_match_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = random_mdp(4, 2, 3, &mut rng);
        let pi = solve_optimal_tabular(&mdp).unwrap();
        let occ = occupancy_exact(&mdp, &pi).unwrap();
        let n = 10_000;
        let data = sample_expert_states(&mdp, &Policy::Tabular(pi), n, &mut rng).unwrap();
        for h in 0..3 {
            let marg = occ.step_state_marginal(h);
            for (s, &p) in marg.iter().enumerate() {
                let f = data.trajectories().iter().filter(|t| t[h] == s).count() as f64 / n as f64;
                assert!((f - p).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let v = ExpertDataset::new(vec![
            vec![DVector::from_vec(vec![0.1, -2.5]), DVector::from_vec(vec![1.0 / 3.0, 7.0])],
            vec![DVector::from_vec(vec![0.0, 1e-300]), DVector::from_vec(vec![-0.0, 4.25])],
        ])
        .unwrap();
        assert_eq!(ExpertDataset::<DVector<f64>>::from_text(&v.to_text()).unwrap(), v);
        let t = ExpertDataset::new(vec![vec![0usize, 2, 1], vec![1, 1, 1]]).unwrap();
        assert_eq!(ExpertDataset::<usize>::from_text(&t.to_text()).unwrap(), t);
        assert!(ExpertDataset::<usize>::from_text("state_dim=1\n0,1\n").is_err());
    }

    #[test]
    fn views() {
        let d = ExpertDataset::new(vec![vec![0usize, 1, 2], vec![3, 4, 5]]).unwrap();
        assert_eq!(d.flat_view(), vec![0, 1, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = d.single_sample_view(&mut rng);
        assert!([0, 1].contains(&s[0]) && [3, 4].contains(&s[1]));
        assert_eq!(d.state_distribution(6), vec![0.25, 0.25, 0.0, 0.25, 0.25, 0.0]);
    }
}
