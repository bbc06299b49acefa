//! Randomized invariant suite behind `advreg verify`.

use advreg::{
    alpha_divergence, conjugate_bounds, divergence_gradient, entropy_perturbation, exp_alpha,
    finite_difference_gradient, grid_conjugate, kl_divergence, load_gridworld, log_alpha, occupancy_of_policy,
    path_consistency_residual, regularized_value_iteration, solve_simplex_conjugate,
    tsallis_entropy, validate_flow, worst_case_row, AlphaParam, GridParams, RegScheme, SimplexGrid, StateReg,
    TabularMdp, DEFAULT_GRID,
};
use advreg::oracle::raw_divergence;
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::Result;
use crate::output::{num, Field, Report, Table};
use crate::{Outcome, VerifyArgs};

const FAULT_SCALE: f64 = 1.0 + 1e-3;

struct Check {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    max_residual: f64,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            max_residual: 0.0,
        }
    }

    fn record(&mut self, residual: f64) {
        self.cases += 1;
        // NaN must fail the check, so do not use f64::max here
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = residual;
        }
    }

    fn pass(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

struct Suite {
    rng: ChaCha8Rng,
    cases: usize,
    /// Multiplies every normalizer before it is checked.
    psi_scale: f64,
}

fn al(a: f64) -> AlphaParam {
    AlphaParam::new(a).expect("finite alpha")
}

impl Suite {
    fn simplex(&mut self, n: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| self.rng.random_range(0.05..1.0)).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    }

    fn values(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.random_range(-scale..scale)).collect()
    }

    fn pick(&mut self, xs: &[f64]) -> f64 {
        xs[self.rng.random_range(0..xs.len())]
    }

    fn log_exp_round_trip(&mut self) -> Result<Check> {
        let mut c = Check::new("log_exp_round_trip", 1e-10);
        while c.cases < self.cases {
            let u = 10f64.powf(self.rng.random_range(-6.0..6.0));
            let a = self.rng.random_range(-2.0..3.0);
            // the round trip is ill-conditioned near saturation
            if u.powf(a - 1.0) < 1e-4 {
                continue;
            }
            let back = exp_alpha(log_alpha(u, al(a))?, al(a));
            c.record(((back - u) / u).abs());
        }
        Ok(c)
    }

    fn divergence_nonnegative(&mut self) -> Result<Check> {
        let mut c = Check::new("divergence_nonnegative", 1e-12);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=6);
            let (p0, p) = (self.simplex(n), self.simplex(n));
            let a = al(self.rng.random_range(-1.0..3.0));
            let d = alpha_divergence(&p0, &p, a)?;
            let own = alpha_divergence(&p0, &p0, a)?;
            c.record((-d).max(0.0).max(own.abs()));
        }
        Ok(c)
    }

    fn divergence_limits(&mut self) -> Result<Check> {
        let mut c = Check::new("divergence_kl_limits", 1e-4);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=6);
            let (p0, p) = (self.simplex(n), self.simplex(n));
            let kl = kl_divergence(&p, &p0)?;
            let rkl = kl_divergence(&p0, &p)?;
            let mut worst = 0.0f64;
            for eps in [1e-6, -1e-6] {
                worst = worst
                    .max((alpha_divergence(&p0, &p, al(1.0 + eps))? - kl).abs())
                    .max((alpha_divergence(&p0, &p, al(eps))? - rkl).abs());
            }
            c.record(worst);
        }
        Ok(c)
    }

    fn divergence_raw_formula(&mut self) -> Result<Check> {
        let mut c = Check::new("divergence_raw_formula", 1e-9);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=5);
            let (p0, p) = (self.simplex(n), self.simplex(n));
            let a = self.rng.random_range(-1.0..3.0);
            c.record((alpha_divergence(&p0, &p, al(a))? - raw_divergence(&p0, &p, a)).abs());
        }
        Ok(c)
    }

    fn tsallis_relation(&mut self) -> Result<Check> {
        let mut c = Check::new("tsallis_relation", 1e-10);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=5);
            let (p, q) = (self.simplex(n), self.simplex(n));
            let a = al(self.pick(&[-1.0, 0.5, 1.0, 1.5, 2.0, 3.0]));
            let ones = vec![1.0; n];
            let dd = alpha_divergence(&ones, &p, a)? - alpha_divergence(&ones, &q, a)?;
            let dh = tsallis_entropy(&p, a)? - tsallis_entropy(&q, a)?;
            c.record((dd + dh).abs());
        }
        Ok(c)
    }

    fn gradient(&mut self) -> Result<Check> {
        let mut c = Check::new("gradient_finite_difference", 1e-4);
        for _ in 0..self.cases.div_ceil(4) {
            let (n, m) = (self.rng.random_range(1..=3), self.rng.random_range(2..=3));
            let raw = Array2::from_shape_fn((n, m), |_| self.rng.random_range(0.05..1.0));
            let mu = &raw / raw.sum();
            let mut pi0 = Array2::from_shape_fn((n, m), |_| self.rng.random_range(1.0..8.0));
            let a = al(self.pick(&[-1.0, 0.0, 0.5, 1.0, 2.0]));
            let beta = self.rng.random_range(0.5..5.0);
            let scheme = if self.rng.random::<bool>() {
                RegScheme::occupancy(a, beta, &pi0 / pi0.sum())?
            } else {
                for mut row in pi0.outer_iter_mut() {
                    let t = row.sum();
                    row /= t;
                }
                RegScheme::policy(a, beta, pi0)?
            };
            let analytic = divergence_gradient(&mu, &scheme)?;
            let fd = finite_difference_gradient(&mu, &scheme, 1e-6)?;
            c.record(analytic.max_abs_diff(&fd));
        }
        Ok(c)
    }

    /// Random reference, values, order and strength for a single state.
    fn state_case(&mut self, alphas: &[f64], max_n: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let n = self.rng.random_range(2..=max_n);
        let pi0 = self.simplex(n);
        let q = self.values(n, 2.0);
        let a = if alphas.is_empty() {
            self.rng.random_range(-1.0..3.0)
        } else {
            self.pick(alphas)
        };
        let beta = 10f64.powf(self.rng.random_range(-1.0..1.0));
        (pi0, q, a, beta)
    }

    fn normalization(&mut self) -> Result<Check> {
        let mut c = Check::new("normalization", 1e-10);
        for _ in 0..self.cases {
            let (pi0, q, a, beta) = self.state_case(&[], 5);
            let sol = solve_simplex_conjugate(&q, &StateReg::new(al(a), beta, &pi0)?)?;
            c.record((sol.optimizer.iter().sum::<f64>() - 1.0).abs());
        }
        Ok(c)
    }

    fn envelope(&mut self) -> Result<Check> {
        let mut c = Check::new("envelope_condition", 1e-8);
        for _ in 0..self.cases {
            let (pi0, q, a, beta) = self.state_case(&[0.5, 1.0, 1.5, 2.0, 3.0], 4);
            let sol = solve_simplex_conjugate(&q, &StateReg::new(al(a), beta, &pi0)?)?;
            let psi = sol.normalizer * self.psi_scale;
            let mut worst = 0.0f64;
            for i in 0..q.len() {
                let l = if sol.optimizer[i] > 0.0 {
                    log_alpha(sol.optimizer[i] / pi0[i], al(a))?
                } else {
                    -1.0 / (a - 1.0)
                };
                worst = worst.max((q[i] - l / beta - psi + sol.lambdas[i]).abs());
            }
            c.record(worst);
        }
        Ok(c)
    }

    fn kl_log_mean_exp(&mut self) -> Result<Check> {
        let mut c = Check::new("kl_log_mean_exp", 1e-8);
        for _ in 0..self.cases {
            let (pi0, q, _, beta) = self.state_case(&[1.0], 5);
            let sol = solve_simplex_conjugate(&q, &StateReg::new(AlphaParam::KL, beta, &pi0)?)?;
            let m: f64 = pi0.iter().zip(&q).map(|(p, x)| p * (beta * x).exp()).sum();
            c.record((sol.normalizer * self.psi_scale - m.ln() / beta).abs());
        }
        Ok(c)
    }

    fn value_bounds(&mut self) -> Result<Check> {
        let mut c = Check::new("value_bounds", 1e-9);
        for _ in 0..self.cases {
            let (pi0, q, a, beta) = self.state_case(&[], 4);
            let reg = StateReg::new(al(a), beta, &pi0)?;
            let v = solve_simplex_conjugate(&q, &reg)?.value;
            let mean: f64 = pi0.iter().zip(&q).map(|(p, x)| p * x).sum();
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut excess = (mean - v).max(v - max).max(0.0);
            if a > 0.0 {
                let (lo, hi) = conjugate_bounds(&q, &reg)?;
                excess = excess.max(lo - v).max(v - hi);
            }
            c.record(excess);
        }
        Ok(c)
    }

    fn psi_relationship(&mut self) -> Result<Check> {
        let mut c = Check::new("psi_relationship", 1e-6);
        for _ in 0..self.cases {
            let (pi0, q, a, beta) = self.state_case(&[-1.0, 0.5, 2.0, 3.0], 4);
            let sol = solve_simplex_conjugate(&q, &StateReg::new(al(a), beta, &pi0)?)?;
            let psi_dr = (1.0 - a) * alpha_divergence(&pi0, &sol.optimizer, al(a))? / beta;
            c.record((sol.normalizer * self.psi_scale - sol.value - psi_dr).abs());
        }
        Ok(c)
    }

    fn worst_case(&mut self) -> Result<(Check, Check)> {
        let mut zero = Check::new("worst_case_zero_conjugate", 1e-6);
        let mut objective = Check::new("worst_case_objective", 1e-6);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=5);
            let (pi0, pi) = (self.simplex(n), self.simplex(n));
            let a = self.rng.random_range(-1.0..3.0);
            let beta = 10f64.powf(self.rng.random_range(-1.0..1.0));
            let reg = StateReg::new(al(a), beta, &pi0)?;
            let dr: Vec<f64> = worst_case_row(&pi, &reg)?.iter().map(|e| e.extended()).collect();
            let conj = solve_simplex_conjugate(&dr, &reg)?.value;
            let inner: f64 = pi.iter().zip(&dr).map(|(p, d)| p * d).sum();
            let d = alpha_divergence(&pi0, &pi, al(a))? / beta;
            zero.record(conj.abs());
            objective.record((inner - conj - d).abs());
        }
        Ok((zero, objective))
    }

    fn grid_oracle(&mut self) -> Result<Check> {
        let mut c = Check::new("conjugate_vs_grid_search", 1e-9);
        let grid = SimplexGrid::new(2, 1e-3)?;
        for _ in 0..self.cases.div_ceil(10) {
            let (pi0, q, a, beta) = self.state_case(&[-1.0, 0.5, 1.0, 2.0, 3.0], 2);
            let reg = StateReg::new(al(a), beta, &pi0)?;
            let v = solve_simplex_conjugate(&q, &reg)?.value;
            let (g, _) = grid_conjugate(&q, &reg, &grid)?;
            let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let slack = 5.0 * grid.step() * (1.0 + qn);
            c.record((g - v).max(v - g - slack).max(0.0));
        }
        Ok(c)
    }

    fn entropy_nonpositive(&mut self) -> Result<Check> {
        let mut c = Check::new("entropy_perturbation_nonpositive", 1e-12);
        for _ in 0..self.cases {
            let n = self.rng.random_range(2..=6);
            let p = Array2::from_shape_vec((1, n), self.simplex(n)).expect("row shape");
            let a = al(self.rng.random_range(0.01..=1.0));
            let beta = 10f64.powf(self.rng.random_range(-1.0..1.0));
            let dr = entropy_perturbation(&p, a, beta)?;
            c.record(dr.entries().map(|e| e.extended()).fold(0.0, f64::max));
        }
        Ok(c)
    }

    fn flow(&mut self) -> Result<Check> {
        let mut c = Check::new("flow_normalization", 1e-10);
        for _ in 0..self.cases.div_ceil(4) {
            let (n, m) = (self.rng.random_range(2..=6), self.rng.random_range(2..=4));
            let mut p = Array3::from_shape_fn((n, m, n), |_| self.rng.random_range(0.0..1.0));
            for s in 0..n {
                for a in 0..m {
                    let t: f64 = (0..n).map(|sp| p[[s, a, sp]]).sum();
                    for sp in 0..n {
                        p[[s, a, sp]] /= t;
                    }
                }
            }
            let r = Array2::zeros((n, m));
            let gamma = self.rng.random_range(0.1..0.99);
            let nu0 = Array1::from(self.simplex(n));
            let mdp = TabularMdp::new(p, r, nu0, gamma)?;
            let mut pi = Array2::zeros((n, m));
            for s in 0..n {
                for (a, x) in self.simplex(m).into_iter().enumerate() {
                    pi[[s, a]] = x;
                }
            }
            let mu = occupancy_of_policy(&pi, &mdp)?;
            c.record(validate_flow(&mu, &mdp)?.max((mu.sum() - 1.0).abs()));
        }
        Ok(c)
    }

    fn gridworld(&mut self) -> Result<Check> {
        let mut c = Check::new("gridworld_path_consistency", 1e-6);
        let world = load_gridworld(DEFAULT_GRID, &GridParams::default())?;
        let mdp = &world.mdp;
        for _ in 0..2 {
            let a = al(self.pick(&[0.5, 1.0, 2.0]));
            let beta = self.pick(&[0.5, 1.0, 5.0]);
            let scheme = RegScheme::uniform_policy(a, beta, mdp.n_states(), mdp.n_actions())?;
            let sol = regularized_value_iteration(mdp, &scheme, 1e-10, 100_000)?;
            let res = path_consistency_residual(mdp, &sol.pi, &sol.v, &sol.lambdas, &scheme)?;
            c.record(res.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        Ok(c)
    }
}

pub fn run(args: &VerifyArgs) -> Result<Outcome> {
    let mut suite = Suite {
        rng: ChaCha8Rng::seed_from_u64(args.seed),
        cases: args.cases.max(1),
        psi_scale: if args.fault_psi { FAULT_SCALE } else { 1.0 },
    };
    let (zero, objective) = suite.worst_case()?;
    let checks = vec![
        suite.log_exp_round_trip()?,
        suite.divergence_nonnegative()?,
        suite.divergence_limits()?,
        suite.divergence_raw_formula()?,
        suite.tsallis_relation()?,
        suite.gradient()?,
        suite.normalization()?,
        suite.envelope()?,
        suite.kl_log_mean_exp()?,
        suite.value_bounds()?,
        suite.psi_relationship()?,
        zero,
        objective,
        suite.grid_oracle()?,
        suite.entropy_nonpositive()?,
        suite.flow()?,
        suite.gridworld()?,
    ];

    let mut table = Table::new(&["invariant", "cases", "max_residual", "tolerance", "pass"]);
    let mut invariants = Vec::new();
    for c in &checks {
        table.push(vec![
            Field::Text(c.name.into()),
            Field::Int(c.cases),
            Field::Num(c.max_residual),
            Field::Num(c.tolerance),
            Field::Bool(c.pass()),
        ]);
        invariants.push(json!({
            "invariant": c.name,
            "cases": c.cases,
            "max_residual": num(c.max_residual),
            "tolerance": num(c.tolerance),
            "pass": c.pass(),
        }));
    }
    let all_pass = checks.iter().all(Check::pass);
    Ok(Outcome {
        report: Report {
            command: "verify",
            config: serde_json::to_value(args).expect("arguments serialize"),
            results: json!({ "invariants": invariants, "all_pass": all_pass }),
            table,
        },
        ok: all_pass,
    })
}
