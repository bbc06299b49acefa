#![allow(clippy::needless_range_loop)]

use advreg::*;
use approx::assert_abs_diff_eq;
use ndarray::Array2;

fn default_world() -> Gridworld {
    load_gridworld(DEFAULT_GRID, &GridParams::default()).unwrap()
}

fn solve(world: &Gridworld, alpha: f64, beta: f64) -> (RegScheme, SoftSolution) {
    let mdp = &world.mdp;
    let scheme = RegScheme::uniform_policy(AlphaParam::new(alpha).unwrap(), beta, mdp.n_states(), mdp.n_actions()).unwrap();
    let sol = regularized_value_iteration(mdp, &scheme, 1e-10, 100_000).unwrap();
    (scheme, sol)
}

#[test]
fn default_layout_reaches_the_goal_from_everywhere() {
    let world = default_world();
    let mdp = &world.mdp;
    let n = mdp.n_states();
    let goal = (0..n).find(|&s| world.is_goal(s)).unwrap();
    // backwards reachability from the goal
    let mut reach = vec![false; n];
    reach[goal] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if reach[s] {
                continue;
            }
            if (0..4).any(|a| (0..n).any(|sp| reach[sp] && mdp.transition()[[s, a, sp]] > 0.0)) {
                reach[s] = true;
                changed = true;
            }
        }
    }
    assert!(reach.iter().all(|r| *r));
}

#[test]
fn optimal_occupancy_satisfies_flow() {
    let world = default_world();
    let (_, sol) = solve(&world, 1.0, 1.0);
    let mu = occupancy_of_policy(&sol.pi, &world.mdp).unwrap();
    assert!(validate_flow(&mu, &world.mdp).unwrap() <= 1e-8);
    assert_abs_diff_eq!(mu.sum(), 1.0, epsilon = 1e-8);
}

#[test]
fn value_iteration_contracts() {
    let world = default_world();
    let (_, sol) = solve(&world, 2.0, 1.0);
    let g = world.mdp.gamma();
    for w in sol.deltas.windows(2).skip(1) {
        assert!(w[1] <= g * w[0] + 1e-12, "{} > {} * {}", w[1], g, w[0]);
    }
}

#[test]
fn regularized_objective_consistency() {
    let world = default_world();
    let mdp = &world.mdp;
    for (alpha, beta) in [(1.0, 1.0), (2.0, 1.0), (0.5, 2.0)] {
        let (scheme, sol) = solve(&world, alpha, beta);
        let mu = occupancy_of_policy(&sol.pi, mdp).unwrap();
        let primal = (&mu * mdp.reward()).sum() - regularizer(&mu, &scheme).unwrap() / beta;
        let dual: f64 = (1.0 - mdp.gamma()) * mdp.nu0().iter().zip(&sol.v).map(|(n, v)| n * v).sum::<f64>();
        assert_abs_diff_eq!(primal, dual, epsilon = 1e-6);
    }
}

#[test]
fn weak_regularization_recovers_unregularized_control() {
    let world = default_world();
    let mdp = &world.mdp;
    let (_, soft) = solve(&world, 1.0, 1e4);
    let hard = value_iteration(mdp, 1e-10, 100_000).unwrap();
    let v_soft = policy_value(&soft.pi, mdp).unwrap();
    for s in 0..mdp.n_states() {
        assert_abs_diff_eq!(v_soft[s], hard.v[s], epsilon = 1e-3);
        let best = (0..4).fold(0, |b, a| if soft.pi[[s, a]] > soft.pi[[s, b]] { a } else { b });
        let qmax = hard.q.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hard.q[[s, best]] >= qmax - 1e-9);
    }
}

#[test]
fn path_consistency_kl() {
    let world = default_world();
    for beta in [0.2, 1.0, 10.0] {
        let (scheme, sol) = solve(&world, 1.0, beta);
        let res = path_consistency_residual(&world.mdp, &sol.pi, &sol.v, &sol.lambdas, &scheme).unwrap();
        let worst = res.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(worst <= 1e-6, "beta {beta}: {worst}");
    }
}

#[test]
fn path_consistency_alpha() {
    let world = default_world();
    for alpha in [0.5, 2.0, 3.0] {
        let (scheme, sol) = solve(&world, alpha, 1.0);
        let res = path_consistency_residual(&world.mdp, &sol.pi, &sol.v, &sol.lambdas, &scheme).unwrap();
        let worst = res.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(worst <= 1e-6, "alpha {alpha}: {worst}");
    }
}

#[test]
fn advantage_equivalence_and_dual_collapse() {
    let world = default_world();
    let mdp = &world.mdp;
    for alpha in [0.5, 1.0, 2.0] {
        let (scheme, sol) = solve(&world, alpha, 1.0);
        let policy_form = worst_case_perturbation(&sol.pi, &scheme).unwrap();
        let value_form = value_form_perturbation(mdp, &sol.v, &sol.lambdas, mdp.reward()).unwrap();
        assert!(policy_form.max_abs_diff(&value_form) <= 1e-6);
        for s in 0..mdp.n_states() {
            let c = solve_simplex_conjugate(&value_form.row_extended(s), &scheme.at(s)).unwrap().value;
            assert!(c.abs() <= 1e-6, "alpha {alpha} state {s}: {c}");
        }
    }
}

#[test]
fn kl_worst_case_normalizes_per_state() {
    let world = default_world();
    let beta = 1.0;
    let (scheme, sol) = solve(&world, 1.0, beta);
    let dr = worst_case_perturbation(&sol.pi, &scheme).unwrap();
    for s in 0..world.mdp.n_states() {
        let total: f64 = (0..4).map(|a| 0.25 * (beta * dr.get(s, a).unwrap()).exp()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }
}

#[test]
fn generalization_margin_on_gridworld() {
    let world = default_world();
    let mdp = &world.mdp;
    let (scheme, sol) = solve(&world, 2.0, 1.0);
    let mu = occupancy_of_policy(&sol.pi, mdp).unwrap();
    let base = worst_case_perturbation(&sol.pi, &scheme).unwrap().to_extended();
    for k in 0..5 {
        // decreasing a member keeps it in the set
        let shift = Array2::from_shape_fn(base.dim(), |(s, a)| 0.05 * ((s * 7 + a * 3 + k) % 5) as f64);
        let dr = PerturbationField::from_values(&base - &shift).unwrap();
        let cert = robust_membership(&dr, &scheme, &mu).unwrap();
        assert!(cert.member);
        assert!(cert.guarantee_margin >= -1e-8);
    }
}
