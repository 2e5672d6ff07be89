//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ilfo_core::env::TabularMdp;
use microlp::{ComparisonOp, OptimizationDirection, Problem};

/// Value of `min_d Σ_s (d(s) − d_e(s))₊ − ⟨d, b⟩` over the average
/// state-action occupancy polytope of `mdp`, solved as a linear program.
///
/// Variables are the per-step occupancies `x_h(s, a) ≥ 0` with the flow
/// constraints, plus slacks `u_s ≥ max(0, d(s) − d_e(s))`.
pub fn lp_game_value(mdp: &TabularMdp, bonus: &[f64], expert: &[f64]) -> f64 {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let hf = horizon as f64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<Vec<_>> = (0..horizon)
        .map(|_| {
            (0..ns * na)
                .map(|i| lp.add_var(-bonus[i] / hf, (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    let u: Vec<_> = (0..ns).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();

    for s in 0..ns {
        let terms: Vec<_> = (0..na).map(|a| (x[0][s * na + a], 1.0)).collect();
        let rhs = if s == mdp.initial_state() { 1.0 } else { 0.0 };
        lp.add_constraint(&terms, ComparisonOp::Eq, rhs);
    }
    for h in 0..horizon - 1 {
        let kernel = mdp.kernel_at(h);
        for s2 in 0..ns {
            let mut terms: Vec<_> = (0..na).map(|a| (x[h + 1][s2 * na + a], 1.0)).collect();
            for s in 0..ns {
                for a in 0..na {
                    let p = kernel.row(s, a)[s2];
                    if p != 0.0 {
                        terms.push((x[h][s * na + a], -p));
                    }
                }
            }
            lp.add_constraint(&terms, ComparisonOp::Eq, 0.0);
        }
    }
    // u_s − (1/H) Σ_h Σ_a x_h(s, a) ≥ −d_e(s)
    for s in 0..ns {
        let mut terms = vec![(u[s], 1.0)];
        for xh in &x {
            for a in 0..na {
                terms.push((xh[s * na + a], -1.0 / hf));
            }
        }
        lp.add_constraint(&terms, ComparisonOp::Ge, -expert[s]);
    }
    lp.solve()
        .expect("LP solves")
        .into_solution()
        .expect("LP is feasible and bounded")
        .objective()
}

/// `Σ_s (p(s) − q(s))₊`, written out directly.
pub fn positive_part_gap(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).max(0.0)).sum()
}

/// Wall-clock guard used by the timed acceptance checks.
pub struct Timer(std::time::Instant);

impl Timer {
    pub fn start() -> Self {
        Timer(std::time::Instant::now())
    }

    pub fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Plain backward recursion `V_h(s) = Σ_a π(a|s) [c(s,a) + Σ_s' P(s'|s,a) V_{h+1}(s')]`,
/// written independently of the library's dynamic programs.
pub fn oracle_values<D: ilfo_core::env::TabularDynamics>(
    model: &D,
    pi: &ilfo_core::env::TabularPolicy,
    cost: &[f64],
) -> Vec<Vec<f64>> {
    let (ns, na, horizon) = (model.num_states(), model.num_actions(), model.horizon());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            let mut acc = 0.0;
            for a in 0..na {
                let p = pi.action_probs(h, s)[a];
                let mut next = 0.0;
                for s2 in 0..ns {
                    next += model.next_state_dist(h, s, a)[s2] * v[h + 1][s2];
                }
                acc += p * (cost[s * na + a] + next);
            }
            v[h][s] = acc;
        }
    }
    v
}

/// Per-step state-action occupancies `d_h(s, a)` by forward propagation.
pub fn oracle_occupancy<D: ilfo_core::env::TabularDynamics>(
    model: &D,
    pi: &ilfo_core::env::TabularPolicy,
) -> Vec<Vec<f64>> {
    let (ns, na, horizon) = (model.num_states(), model.num_actions(), model.horizon());
    let mut mu = vec![0.0; ns];
    mu[model.initial_state()] = 1.0;
    let mut out = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut d = vec![0.0; ns * na];
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let m = mu[s] * pi.action_probs(h, s)[a];
                d[s * na + a] = m;
                for s2 in 0..ns {
                    next[s2] += m * model.next_state_dist(h, s, a)[s2];
                }
            }
        }
        out.push(d);
        mu = next;
    }
    out
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// `min_π V^π(s_0)` by backward induction over `[s * A + a]` costs.
pub fn oracle_optimal_value<D: ilfo_core::env::TabularDynamics>(model: &D, cost: &[f64]) -> f64 {
    let (ns, na, horizon) = (model.num_states(), model.num_actions(), model.horizon());
    let mut v = vec![0.0; ns];
    for h in (0..horizon).rev() {
        v = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let row = model.next_state_dist(h, s, a);
                        cost[s * na + a] + row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    v[model.initial_state()]
}
