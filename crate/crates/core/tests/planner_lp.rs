mod common;

use ilfo_core::env::random::{random_mdp, random_simplex};
use ilfo_core::env::{occupancy_mixed, TabularMdp};
use ilfo_core::planner::{solve_minmax_tabular, MinMaxConfig, WitnessClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(rng: &mut ChaCha8Rng) -> (TabularMdp, Vec<f64>, Vec<f64>) {
    let mdp = random_mdp(3, 2, 2, rng);
    let bonus: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..0.5)).collect();
    let expert = random_simplex(3, rng);
    (mdp, bonus, expert)
}

#[test]
fn solver_matches_lp_on_small_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let (mdp, bonus, expert) = instance(&mut rng);
        let lp = common::lp_game_value(&mdp, &bonus, &expert);
        let sol = solve_minmax_tabular(&mdp, &bonus, &WitnessClass::Box, &expert, &MinMaxConfig::default()).unwrap();
        assert!((sol.objective - lp).abs() <= 0.01, "solver {} lp {}", sol.objective, lp);
        // The returned mixture re-evaluated from scratch gives the same objective.
        let d = occupancy_mixed(&mdp, &sol.policy).unwrap().average();
        let marginal: Vec<f64> = d.chunks(2).map(|r| r.iter().sum()).collect();
        let direct = common::positive_part_gap(&marginal, &expert)
            - d.iter().zip(&bonus).map(|(x, b)| x * b).sum::<f64>();
        assert!((direct - sol.objective).abs() < 1e-9);
        // No mixture can beat the LP optimum.
        assert!(sol.objective >= lp - 1e-7);
    }
}

#[test]
fn lp_is_zero_for_a_reachable_expert_without_bonus() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mdp, _, _) = instance(&mut rng);
    let pi = ilfo_core::env::random::random_policy(2, 3, 2, &mut rng);
    let d = ilfo_core::env::occupancy_exact(&mdp, &pi).unwrap().state_marginal();
    assert!(common::lp_game_value(&mdp, &[0.0; 6], &d).abs() < 1e-9);
}
