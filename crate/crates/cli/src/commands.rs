//! The four reporting subcommands.

use advreg::gridworld::ACTION_NAMES;
use advreg::{
    conjugate_bounds, indifference_check, load_gridworld, occupancy_of_policy, path_consistency_residual,
    psi_relationship_check, regularized_value_iteration, regularizer, solve_simplex_conjugate,
    trace_entropy_boundary, trace_robust_boundary, validate_flow, value_iteration, worst_case_perturbation,
    BoundaryGrid, GridParams, Perturbation, RegScheme, StateReg, DEFAULT_GRID,
};
use serde_json::{json, Value};

use crate::config::{self, check_beta, reference_table, CliError, Result};
use crate::output::{num, nums, Field, Report, Table};
use crate::{BoundaryArgs, GridArgs, Outcome, PerturbArgs, SweepArgs};

/// Two worst-case entries count as on the boundary when the conjugate is this close to zero.
const ON_BOUNDARY_TOL: f64 = 1e-8;

fn echo<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn ok(report: Report) -> Result<Outcome> {
    Ok(Outcome { report, ok: true })
}

fn single_reference(spec: &str, n_actions: usize) -> Result<Vec<f64>> {
    if n_actions == 0 {
        return Err(CliError::Config("--q needs at least one value".into()));
    }
    Ok(reference_table(spec, 1, n_actions)?.row(0).to_vec())
}

fn perturbation_json(p: Perturbation) -> Value {
    num(p.extended())
}

pub fn perturb(args: &PerturbArgs) -> Result<Outcome> {
    let alpha = config::alpha(args.reg.alpha)?;
    check_beta(args.reg.beta)?;
    let pi0 = single_reference(&args.reg.reference, args.q.len())?;
    let reg = StateReg::new(alpha, args.reg.beta, &pi0)?;

    let ind = indifference_check(&args.q, &reg)?;
    let psi = psi_relationship_check(&args.q, &reg)?;
    let bounds = if alpha.value() > 0.0 {
        Some(conjugate_bounds(&args.q, &reg)?)
    } else {
        None
    };
    let sol = &ind.solution;

    let mut table = Table::new(&[
        "action", "q", "pi_ref", "pi", "delta_r", "perturbed", "lambda", "value", "psi_q", "psi_dr", "indifferent",
    ]);
    let mut actions = Vec::new();
    for a in 0..args.q.len() {
        let dr = ind.perturbation[a];
        actions.push(json!({
            "action": a,
            "q": num(args.q[a]),
            "pi_ref": num(pi0[a]),
            "pi": num(sol.optimizer[a]),
            "delta_r": perturbation_json(dr),
            "unbounded": dr == Perturbation::UnboundedDecrease,
            "perturbed": num(ind.perturbed[a]),
            "lambda": num(sol.lambdas[a]),
        }));
        table.push(vec![
            Field::Int(a),
            Field::Num(args.q[a]),
            Field::Num(pi0[a]),
            Field::Num(sol.optimizer[a]),
            Field::Num(dr.extended()),
            Field::Num(ind.perturbed[a]),
            Field::Num(sol.lambdas[a]),
            Field::Num(sol.value),
            Field::Num(psi.psi_q),
            Field::Num(psi.psi_dr),
            Field::Bool(ind.constant_on_support),
        ]);
    }
    let results = json!({
        "actions": actions,
        "value": num(sol.value),
        "psi_q": num(psi.psi_q),
        "psi_dr": num(psi.psi_dr),
        "psi_residual": num(psi.residual),
        "indifferent": ind.constant_on_support,
        "lower_bound": bounds.map_or(Value::Null, |b| num(b.0)),
        "upper_bound": bounds.map_or(Value::Null, |b| num(b.1)),
        "iterations": sol.iterations,
    });
    ok(Report {
        command: "perturb",
        config: echo(args),
        results,
        table,
    })
}

pub fn robust_boundary(args: &BoundaryArgs) -> Result<Outcome> {
    if args.q.len() != 2 {
        return Err(CliError::Config(format!(
            "robust-boundary needs exactly 2 action values, got {}",
            args.q.len()
        )));
    }
    let alpha = config::alpha(args.reg.alpha)?;
    let beta = args.reg.beta;
    check_beta(beta)?;
    let pi0 = single_reference(&args.reg.reference, 2)?;
    let reg = StateReg::new(alpha, beta, &pi0)?;
    let default = BoundaryGrid::default_for(beta);
    let grid = BoundaryGrid {
        min: args.dr_min.unwrap_or(default.min),
        max: args.dr_max.unwrap_or(default.max),
        points: args.points,
    };
    let boundary = trace_robust_boundary(&reg, &grid)?;
    let q = &args.q;

    let mut table = Table::new(&["kind", "dr1", "dr2", "r1", "r2"]);
    let push = |table: &mut Table, kind: &str, dr1: f64, dr2: f64| {
        table.push(vec![
            Field::Text(kind.into()),
            Field::Num(dr1),
            Field::Num(dr2),
            Field::Num(q[0] - dr1),
            Field::Num(q[1] - dr2),
        ]);
        json!({
            "dr1": num(dr1),
            "dr2": num(dr2),
            "r1": num(q[0] - dr1),
            "r2": num(q[1] - dr2),
        })
    };

    let points: Vec<Value> = boundary
        .iter()
        .map(|p| push(&mut table, "boundary", p.dr1, p.dr2))
        .collect();

    let ind = indifference_check(q, &reg)?;
    let (w1, w2) = (ind.perturbation[0].extended(), ind.perturbation[1].extended());
    let conj = solve_simplex_conjugate(&[w1, w2], &reg)?.value;
    let mut worst = push(&mut table, "worst_case", w1, w2);
    worst["pi"] = nums(&ind.solution.optimizer);
    worst["conjugate"] = num(conj);
    worst["on_boundary"] = json!(conj.abs() <= ON_BOUNDARY_TOL);

    let mut results = json!({
        "boundary": points,
        "worst_case": worst,
    });
    if args.entropy_overlay {
        let shift = 2f64.ln() / beta;
        let shifted: Vec<Value> = trace_entropy_boundary(beta, &grid)?
            .iter()
            .map(|p| push(&mut table, "entropy_shifted", p.dr1 + shift, p.dr2 + shift))
            .collect();
        results["entropy_shifted"] = json!(shifted);
    }
    ok(Report {
        command: "robust-boundary",
        config: echo(args),
        results,
        table,
    })
}

pub fn value_sweep(args: &SweepArgs) -> Result<Outcome> {
    let pi0 = single_reference(&args.reference, args.q.len())?;
    let mut table = Table::new(&["alpha", "beta", "value", "psi_q", "psi_dr", "residual", "lower_bound", "upper_bound"]);
    let mut rows = Vec::new();
    let mut max_residual = 0.0f64;
    for &a in &args.alphas {
        let alpha = config::alpha(a)?;
        for &beta in &args.betas {
            check_beta(beta)?;
            let reg = StateReg::new(alpha, beta, &pi0)?;
            let psi = psi_relationship_check(&args.q, &reg)?;
            let (lo, hi) = if a > 0.0 {
                conjugate_bounds(&args.q, &reg)?
            } else {
                (f64::NAN, f64::NAN)
            };
            max_residual = max_residual.max(psi.residual);
            rows.push(json!({
                "alpha": num(a),
                "beta": num(beta),
                "value": num(psi.value),
                "psi_q": num(psi.psi_q),
                "psi_dr": num(psi.psi_dr),
                "residual": num(psi.residual),
                "lower_bound": num(lo),
                "upper_bound": num(hi),
            }));
            table.push(
                [a, beta, psi.value, psi.psi_q, psi.psi_dr, psi.residual, lo, hi]
                    .into_iter()
                    .map(Field::Num)
                    .collect(),
            );
        }
    }
    ok(Report {
        command: "value-sweep",
        config: echo(args),
        results: json!({ "rows": rows, "max_residual": num(max_residual) }),
        table,
    })
}

pub fn gridworld(args: &GridArgs) -> Result<Outcome> {
    let alpha = config::alpha(args.reg.alpha)?;
    let beta = args.reg.beta;
    check_beta(beta)?;
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(CliError::Config(format!("--tol must be positive, got {}", args.tol)));
    }
    let text = match &args.grid {
        Some(path) => config::read_file(path)?,
        None => DEFAULT_GRID.to_string(),
    };
    let params = GridParams {
        gamma: args.gamma,
        water_reward: args.water_reward,
        goal_reward: args.goal_reward,
    };
    let world = load_gridworld(&text, &params)?;
    let mdp = &world.mdp;
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let pi0 = reference_table(&args.reg.reference, n_states, n_actions)?;
    let scheme = RegScheme::policy(alpha, beta, pi0)?;

    let sol = regularized_value_iteration(mdp, &scheme, args.tol, args.max_iters)?;
    let dr = worst_case_perturbation(&sol.pi, &scheme)?;
    let residual = path_consistency_residual(mdp, &sol.pi, &sol.v, &sol.lambdas, &scheme)?;
    let max_residual = residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut max_conjugate = 0.0f64;
    for s in 0..n_states {
        let c = solve_simplex_conjugate(&dr.row_extended(s), &scheme.at(s))?.value;
        max_conjugate = max_conjugate.max(c.abs());
    }

    let mu = occupancy_of_policy(&sol.pi, mdp)?;
    let flow_residual = validate_flow(&mu, mdp)?;
    let primal = (&mu * mdp.reward()).sum() - regularizer(&mu, &scheme)? / beta;
    let dual = (1.0 - mdp.gamma()) * mdp.nu0().iter().zip(&sol.v).map(|(n, v)| n * v).sum::<f64>();

    let hard = value_iteration(mdp, args.tol, args.max_iters)?;
    let mut greedy_matches = 0;
    for s in 0..n_states {
        let best = (0..n_actions).fold(0, |b, a| if sol.pi[[s, a]] > sol.pi[[s, b]] { a } else { b });
        let qmax = hard.q.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hard.q[[s, best]] >= qmax - 1e-9 * qmax.abs().max(1.0) {
            greedy_matches += 1;
        }
    }

    let mut table = Table::new(&[
        "state", "row", "col", "cell", "action", "pi", "q", "v", "delta_r", "perturbed", "lambda", "residual",
    ]);
    let mut entries = Vec::new();
    for s in 0..n_states {
        let (row, col) = world.positions[s];
        let cell = world.cells[s].glyph().to_string();
        for a in 0..n_actions {
            let d = dr.entry(s, a).extended();
            let perturbed = sol.q[[s, a]] - d;
            entries.push(json!({
                "state": s,
                "row": row,
                "col": col,
                "cell": cell,
                "action": ACTION_NAMES[a],
                "pi": num(sol.pi[[s, a]]),
                "q": num(sol.q[[s, a]]),
                "v": num(sol.v[s]),
                "delta_r": num(d),
                "unbounded": dr.is_unbounded(s, a),
                "perturbed": num(perturbed),
                "lambda": num(sol.lambdas[[s, a]]),
                "residual": num(residual[[s, a]]),
            }));
            table.push(vec![
                Field::Int(s),
                Field::Int(row),
                Field::Int(col),
                Field::Text(cell.clone()),
                Field::Text(ACTION_NAMES[a].into()),
                Field::Num(sol.pi[[s, a]]),
                Field::Num(sol.q[[s, a]]),
                Field::Num(sol.v[s]),
                Field::Num(d),
                Field::Num(perturbed),
                Field::Num(sol.lambdas[[s, a]]),
                Field::Num(residual[[s, a]]),
            ]);
        }
    }
    let results = json!({
        "entries": entries,
        "summary": {
            "states": n_states,
            "actions": n_actions,
            "iterations": sol.iterations,
            "max_residual": num(max_residual),
            "max_conjugate": num(max_conjugate),
            "flow_residual": num(flow_residual),
            "primal_objective": num(primal),
            "dual_objective": num(dual),
            "greedy_matches_unregularized": greedy_matches,
        },
    });
    ok(Report {
        command: "gridworld",
        config: echo(args),
        results,
        table,
    })
}
