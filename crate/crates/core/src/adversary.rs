//! The implicit adversary of a regularized policy: worst-case reward
//! perturbations, the robust set, and the optimality certificates that
//! relate them to the soft value function.

use ndarray::Array2;

use crate::conjugate::{conjugate_closed_form, solve_simplex_conjugate, ConjugateSolution};
use crate::deformed::{divergence_gradient, log_alpha_ext, regularizer, AlphaParam};
use crate::error::{Error, Result};
use crate::field::{Perturbation, PerturbationField};
use crate::mdp::TabularMdp;
use crate::scheme::{RegScheme, StateReg, Target};

/// Tolerance on the conjugate value for robust-set membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Tolerance for the indifference condition.
pub const INDIFFERENCE_TOL: f64 = 1e-8;
const MAX_BRACKET_DOUBLINGS: usize = 60;
/// Slack below which the conjugate counts as zero when locating the boundary.
const BOUNDARY_SLACK: f64 = 1e-14;

/// Worst-case perturbation `Δr_π = ∇ (1/β) Ω(μ)` of a policy or occupancy.
///
/// For a policy-target scheme, `mu` may be the policy table itself (the
/// gradient only depends on the conditionals) or a full occupancy.
pub fn worst_case_perturbation(mu: &Array2<f64>, scheme: &RegScheme) -> Result<PerturbationField> {
    divergence_gradient(mu, scheme)
}

/// Worst-case perturbation of one state's policy.
pub fn worst_case_row(pi: &[f64], reg: &StateReg) -> Result<Vec<Perturbation>> {
    let scheme = RegScheme::single_state(reg.alpha, reg.beta, reg.reference)?;
    let mu = Array2::from_shape_vec((1, pi.len()), pi.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
    let field = divergence_gradient(&mu, &scheme)?;
    Ok(field.entries().collect())
}

/// Value-form perturbation `Δr_V(s,a) = r(s,a) + γ E[V(s')] - V(s) + λ(s,a)`.
pub fn value_form_perturbation(
    mdp: &TabularMdp,
    v: &[f64],
    lambdas: &Array2<f64>,
    r: &Array2<f64>,
) -> Result<PerturbationField> {
    if lambdas.dim() != r.dim() {
        return Err(Error::Shape("lambda and reward tables differ in shape".into()));
    }
    let mut dr = mdp.backup(r, v)?;
    for ((s, _), x) in dr.indexed_iter_mut() {
        *x -= v[s];
    }
    dr += lambdas;
    PerturbationField::from_values(dr)
}

/// Whether `Ω*(Δr) = 0` is the robust-set boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroLevel {
    /// Policy regularization: the worst-case perturbation has conjugate
    /// value exactly zero, so `Ω* <= 0` is the robust set.
    Exact,
    /// Occupancy regularization: the conjugate at the worst case depends on
    /// the reference and is not zero in general.
    ReferenceDependent,
}

/// Result of [`robust_membership`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessCertificate {
    /// Largest per-state conjugate value (policy target) or the joint
    /// conjugate (occupancy target).
    pub conjugate_value: f64,
    pub member: bool,
    /// `<μ, r - Δr> - (<μ, r> - (1/β) Ω(μ))`, i.e. `(1/β) Ω(μ) - <μ, Δr>`.
    pub guarantee_margin: f64,
    pub zero_level: ZeroLevel,
}

/// Tests whether `r - Δr` lies in the robust set and evaluates the
/// generalization margin for the policy whose occupancy is `mu`.
///
/// For the policy target, `mu` supplies both the state weights `μ(s)` and
/// the policy; a policy table can be passed when the state weights are
/// irrelevant.
pub fn robust_membership(
    delta_r: &PerturbationField,
    scheme: &RegScheme,
    mu: &Array2<f64>,
) -> Result<RobustnessCertificate> {
    scheme.check_shape(delta_r.dim())?;
    scheme.check_shape(mu.dim())?;
    let (conjugate_value, zero_level) = match scheme.target() {
        Target::Policy => {
            let mut worst = f64::NEG_INFINITY;
            for s in 0..scheme.n_states() {
                let sol = solve_simplex_conjugate(&delta_r.row_extended(s), &scheme.at(s))?;
                worst = worst.max(sol.value);
            }
            (worst, ZeroLevel::Exact)
        }
        Target::Occupancy => (
            conjugate_closed_form(delta_r, scheme, &[])?,
            ZeroLevel::ReferenceDependent,
        ),
    };
    let omega = regularizer(mu, scheme)? / scheme.beta();
    let mut inner = 0.0;
    for (m, e) in mu.iter().zip(delta_r.entries()) {
        if *m > 0.0 {
            inner += m * e.extended();
        }
    }
    Ok(RobustnessCertificate {
        conjugate_value,
        member: conjugate_value <= MEMBERSHIP_TOL,
        guarantee_margin: omega - inner,
        zero_level,
    })
}

/// Range of `Δr(a1)` values for boundary tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl BoundaryGrid {
    /// `[-3/β, 1/β]` with 401 points.
    pub fn default_for(beta: f64) -> Self {
        Self {
            min: -3.0 / beta,
            max: 1.0 / beta,
            points: 401,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidInput(format!(
                "invalid boundary range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// A point `(Δr(a1), Δr(a2))` on the boundary of the robust set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub dr1: f64,
    pub dr2: f64,
}

fn require_two_actions(reg: &StateReg) -> Result<()> {
    if reg.n_actions() != 2 {
        return Err(Error::InvalidInput(format!(
            "boundary tracing needs exactly 2 actions, got {}",
            reg.n_actions()
        )));
    }
    if reg.reference.iter().any(|p| *p <= 0.0) {
        return Err(Error::InvalidInput("boundary tracing needs a fully supported reference".into()));
    }
    Ok(())
}

fn conjugate_of_pair(dr1: f64, dr2: f64, reg: &StateReg) -> Result<f64> {
    Ok(solve_simplex_conjugate(&[dr1, dr2], reg)?.value)
}

/// Largest `Δr(a2)` keeping `(Δr(a1), Δr(a2))` in the robust set, or
/// `None` when no value of `Δr(a2)` does.
///
/// KL uses `(1/β) log[(1 - π0(a1) e^{βΔr(a1)}) / π0(a2)]`. Other orders
/// bisect on the conjugate value, which is nondecreasing in `Δr(a2)`. For
/// α > 1 the conjugate can be flat at zero over a range of `Δr(a2)`; the
/// upper end of that range is returned.
pub fn boundary_at(dr1: f64, reg: &StateReg) -> Result<Option<f64>> {
    require_two_actions(reg)?;
    let beta = reg.beta;
    let (p1, p2) = (reg.reference[0], reg.reference[1]);
    if reg.alpha.is_kl() {
        let arg = (1.0 - p1 * (beta * dr1).exp()) / p2;
        return Ok(if arg > 0.0 { Some(arg.ln() / beta) } else { None });
    }

    let f = |x: f64| conjugate_of_pair(dr1, x, reg);
    let scale = 1.0 / beta;
    let mut hi = dr1.max(0.0) + scale;
    let mut step = scale;
    let mut n = 0;
    while f(hi)? <= BOUNDARY_SLACK {
        if n == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Bracket { lo: dr1, hi });
        }
        hi += step;
        step *= 2.0;
        n += 1;
    }
    let mut lo = dr1.min(0.0) - scale;
    step = scale;
    n = 0;
    loop {
        match f(lo) {
            Ok(v) if v <= BOUNDARY_SLACK => break,
            Ok(_) => {}
            // α <= 0 can underflow the minority action to zero far out
            Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
        if n == MAX_BRACKET_DOUBLINGS {
            return Ok(None);
        }
        lo -= step;
        step *= 2.0;
        n += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? <= BOUNDARY_SLACK {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Traces the two-action robust-set boundary over a grid of `Δr(a1)`.
/// Grid values without a boundary point are skipped.
pub fn trace_robust_boundary(reg: &StateReg, grid: &BoundaryGrid) -> Result<Vec<BoundaryPoint>> {
    require_two_actions(reg)?;
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.points);
    for dr1 in grid.values() {
        if let Some(dr2) = boundary_at(dr1, reg)? {
            out.push(BoundaryPoint { dr1, dr2 });
        }
    }
    Ok(out)
}

/// Boundary of the Shannon-entropy robust set, `Σ_a e^{βΔr(a)} <= 1`,
/// for two actions: `Δr(a2) = (1/β) log(1 - e^{βΔr(a1)})`.
pub fn trace_entropy_boundary(beta: f64, grid: &BoundaryGrid) -> Result<Vec<BoundaryPoint>> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
    }
    grid.validate()?;
    Ok(grid
        .values()
        .into_iter()
        .filter_map(|dr1| {
            let arg = 1.0 - (beta * dr1).exp();
            (arg > 0.0).then(|| BoundaryPoint {
                dr1,
                dr2: arg.ln() / beta,
            })
        })
        .collect())
}

/// Path-consistency residual
/// `r + γ E[V] - (1/β) log_α(π/π0) - ψ_Δr(s) - V(s) + λ`, zero at the
/// regularized optimum.
pub fn path_consistency_residual(
    mdp: &TabularMdp,
    pi: &Array2<f64>,
    v: &[f64],
    lambdas: &Array2<f64>,
    scheme: &RegScheme,
) -> Result<Array2<f64>> {
    scheme.require_policy("path consistency")?;
    if lambdas.dim() != pi.dim() {
        return Err(Error::Shape("lambda and policy tables differ in shape".into()));
    }
    let dr = worst_case_perturbation(pi, scheme)?;
    let mut res = mdp.q_values(v)?;
    for ((s, a), x) in res.indexed_iter_mut() {
        *x += lambdas[[s, a]] - v[s] - dr.entry(s, a).extended();
    }
    Ok(res)
}

/// Result of [`indifference_check`].
#[derive(Debug, Clone)]
pub struct Indifference {
    pub solution: ConjugateSolution,
    /// Worst-case perturbation of the optimal policy.
    pub perturbation: Vec<Perturbation>,
    /// `q - Δr_{π*}`.
    pub perturbed: Vec<f64>,
    /// `q - Δr_{π*}` equals `V*` on the support of `π*`.
    pub constant_on_support: bool,
}

/// Solves the single-state problem and checks that the perturbed reward is
/// constant (equal to `V*`) on the support of the optimal policy.
pub fn indifference_check(q: &[f64], reg: &StateReg) -> Result<Indifference> {
    let solution = solve_simplex_conjugate(q, reg)?;
    let perturbation = worst_case_row(&solution.optimizer, reg)?;
    let perturbed: Vec<f64> = q
        .iter()
        .zip(&perturbation)
        .map(|(x, d)| x - d.extended())
        .collect();
    let constant_on_support = solution
        .optimizer
        .iter()
        .zip(&perturbed)
        .filter(|(p, _)| **p > 0.0)
        .all(|(_, x)| (x - solution.value).abs() <= INDIFFERENCE_TOL);
    Ok(Indifference {
        solution,
        perturbation,
        perturbed,
        constant_on_support,
    })
}

/// Pointwise perturbation of entropy regularization,
/// `(1/β) log_α π(a) + (1/β)(1/α)(1 - Σ π^α)` per state.
///
/// Shannon entropy at α = 1. Zero-probability actions under α <= 1 are
/// unbounded decreases.
pub fn entropy_perturbation(pi: &Array2<f64>, alpha: AlphaParam, beta: f64) -> Result<PerturbationField> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
    }
    if alpha.is_reverse_kl() {
        return Err(Error::Domain("entropy perturbation with k = 1/alpha is undefined at alpha = 0".into()));
    }
    let a = alpha.value();
    let mut out = Array2::from_elem(pi.dim(), Perturbation::Finite(0.0));
    for (s, row) in pi.outer_iter().enumerate() {
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput(format!("policy row {s} has a negative or non-finite entry")));
        }
        let norm = if alpha.is_kl() {
            1.0 - row.sum()
        } else {
            if a < 0.0 && row.iter().any(|p| *p == 0.0) {
                return Err(Error::Domain(format!("0^{a} is undefined in policy row {s}")));
            }
            let pow: f64 = row.iter().map(|p| if *p == 0.0 { 0.0 } else { p.powf(a) }).sum();
            (1.0 - pow) / a
        };
        for (j, p) in row.iter().enumerate() {
            out[[s, j]] = Perturbation::from_extended((log_alpha_ext(*p, alpha) + norm) / beta);
        }
    }
    Ok(PerturbationField::from_entries(out))
}

/// Shifts an entropy-regularization perturbation by `(1/β) log n` so that
/// its robust-set boundary lands on the KL boundary for a uniform reference.
pub fn entropy_divergence_shift(delta_r: &PerturbationField, beta: f64, n_actions: usize) -> Result<PerturbationField> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
    }
    if n_actions == 0 {
        return Err(Error::InvalidInput("n_actions must be positive".into()));
    }
    Ok(delta_r.shifted((n_actions as f64).ln() / beta))
}
