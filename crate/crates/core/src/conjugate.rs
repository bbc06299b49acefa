//! Convex conjugates of the divergence regularizers.
//!
//! Two flavours appear:
//!
//! * the closed forms over the occupancy measure (no explicit normalization
//!   constraint), one per (KL | α) × (policy | occupancy) combination, see
//!   [`conjugate_closed_form`];
//! * the simplex-constrained conjugate solved per state, i.e. the regularized
//!   Bellman optimality backup `V(s) <- max_π <π, q> - (1/β) D_α[π0 : π]`,
//!   see [`solve_simplex_conjugate`].
//!
//! For α ≠ 1 the simplex conjugate has no closed-form normalizer. The
//! normalizer ψ is the unique root of `Σ_a π0(a) exp_α{β (q(a) - ψ)} = 1`,
//! found by bisection; the `[.]_+` clamp inside `exp_α` plays the role of the
//! nonnegativity multipliers λ, which are recovered afterwards.

use crate::deformed::{alpha_divergence, exp_alpha, log_alpha_ext, power_gap, AlphaParam};
use crate::error::{Error, Result};
use crate::field::PerturbationField;
use crate::scheme::{RegScheme, StateReg, Target};

/// Required accuracy of `Σ π = 1` at the solved normalizer.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Bisection iteration cap.
pub const MAX_BISECTION_ITERS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 60;
/// Mass error tolerated when the bracket cannot be narrowed any further.
const COLLAPSED_TOL: f64 = 1e-6;

/// Solution of one state's simplex-constrained conjugate problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateSolution {
    /// Maximizing policy `π_q(·|s)`.
    pub optimizer: Vec<f64>,
    /// Normalization multiplier `ψ_q(s)`.
    pub normalizer: f64,
    /// Nonnegativity multipliers `λ(·, s)`.
    pub lambdas: Vec<f64>,
    /// Conjugate value, i.e. the soft value `V(s)`.
    pub value: f64,
    /// Bisection iterations used (0 for the KL closed form).
    pub iterations: usize,
}

fn check_q(q: &[f64], reg: &StateReg) -> Result<()> {
    if q.len() != reg.n_actions() {
        return Err(Error::Shape(format!(
            "q has {} actions, reference has {}",
            q.len(),
            reg.n_actions()
        )));
    }
    if q.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::InvalidInput("q must not contain NaN or +inf".into()));
    }
    if !q
        .iter()
        .zip(reg.reference)
        .any(|(x, p0)| x.is_finite() && *p0 > 0.0)
    {
        return Err(Error::InvalidInput(
            "q must be finite on at least one action in the reference support".into(),
        ));
    }
    Ok(())
}

/// `Σ π0 exp_α{β (q - ψ)}` over the reference support.
fn normalizer_mass(q: &[f64], reg: &StateReg, psi: f64) -> f64 {
    q.iter()
        .zip(reg.reference)
        .filter(|(_, p0)| **p0 > 0.0)
        .map(|(x, p0)| p0 * exp_alpha(reg.beta * (x - psi), reg.alpha))
        .sum()
}

/// Finds ψ with `Σ π0 exp_α{β (q - ψ)} = 1`. Returns `(ψ, iterations)`.
fn solve_normalizer(q: &[f64], reg: &StateReg) -> Result<(f64, usize)> {
    let alpha = reg.alpha;
    let support = q.iter().zip(reg.reference).filter(|(x, p0)| x.is_finite() && **p0 > 0.0);
    let (q_min, q_max) = support.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
        (lo.min(*x), hi.max(*x))
    });

    if alpha.is_kl() {
        // log-mean-exp, shifted for stability
        let logs: Vec<f64> = q
            .iter()
            .zip(reg.reference)
            .filter(|(x, p0)| x.is_finite() && **p0 > 0.0)
            .map(|(x, p0)| p0.ln() + reg.beta * x)
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        return Ok(((m + s.ln()) / reg.beta, 0));
    }

    let offset = (1.0 / (alpha.value() - 1.0)).abs() / reg.beta;
    let mut lo = q_min - offset - 1.0;
    let mut hi = q_max + offset + 1.0;
    let f = |psi: f64| normalizer_mass(q, reg, psi) - 1.0;

    let mut step = hi - lo;
    let mut doublings = 0;
    while f(lo) <= 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Bracket { lo, hi });
        }
        lo -= step;
        step *= 2.0;
        doublings += 1;
    }
    step = hi - lo;
    doublings = 0;
    while f(hi) >= 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Bracket { lo, hi });
        }
        hi += step;
        step *= 2.0;
        doublings += 1;
    }

    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    let (psi, residual) = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
    // For α > 2 the mass has unbounded slope in ψ where an action sits exactly
    // at the clamp edge; there even adjacent floats can straddle the target by
    // more than the tolerance. Accept a fully collapsed bracket in that case.
    let collapsed = hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
    let accepted = residual.abs() <= NORMALIZATION_TOL || (collapsed && residual.abs() <= COLLAPSED_TOL);
    if !accepted {
        return Err(Error::NoConvergence {
            iterations,
            residual: residual.abs(),
        });
    }
    Ok((psi, iterations))
}

/// Nonnegativity multipliers closing the clamped bracket:
/// `λ(a) = max(0, ψ - q(a) - 1/(β(α-1)))` for α > 1, zero otherwise.
pub fn recover_lambdas(q: &[f64], psi: f64, reg: &StateReg) -> Vec<f64> {
    let alpha = reg.alpha;
    if alpha.is_kl() || alpha.value() < 1.0 {
        return vec![0.0; q.len()];
    }
    let edge = 1.0 / (reg.beta * (alpha.value() - 1.0));
    q.iter().map(|x| (psi - x - edge).max(0.0)).collect()
}

/// Maximizes `<π, q> - (1/β) D_α[π0 : π]` over the probability simplex.
///
/// Entries of `q` may be `-inf` (those actions receive zero probability).
/// For α ≤ 0 an optimizer that vanishes on the reference support has no
/// finite divergence; that case is reported as a domain error.
pub fn solve_simplex_conjugate(q: &[f64], reg: &StateReg) -> Result<ConjugateSolution> {
    check_q(q, reg)?;
    let (psi, iterations) = solve_normalizer(q, reg)?;
    let alpha = reg.alpha;
    let ratios: Vec<f64> = q
        .iter()
        .map(|x| exp_alpha(reg.beta * (x - psi), alpha))
        .collect();
    let mut optimizer: Vec<f64> = ratios
        .iter()
        .zip(reg.reference)
        .map(|(e, p0)| if *p0 > 0.0 { p0 * e } else { 0.0 })
        .collect();
    let mass: f64 = optimizer.iter().sum();
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        optimizer.iter_mut().for_each(|p| *p /= mass);
    }

    if alpha.value() <= 0.0 || alpha.is_reverse_kl() {
        if let Some(a) = (0..q.len()).find(|&a| reg.reference[a] > 0.0 && optimizer[a] == 0.0) {
            return Err(Error::Domain(format!(
                "alpha = {alpha}: optimizer vanishes at action {a} inside the reference support"
            )));
        }
    }

    let value = if alpha.is_kl() {
        psi
    } else {
        power_gap(reg.reference, &ratios, alpha) / reg.beta + psi
    };
    let lambdas = recover_lambdas(q, psi, reg);
    Ok(ConjugateSolution {
        optimizer,
        normalizer: psi,
        lambdas,
        value,
        iterations,
    })
}

/// Analytic bounds on the simplex conjugate for α > 0:
/// `q_max + (1/β)(1/α) log_{2-α} π0(a_max) <= V <= q_max`.
///
/// Ties in `argmax q` go to the lowest action index.
pub fn conjugate_bounds(q: &[f64], reg: &StateReg) -> Result<(f64, f64)> {
    check_q(q, reg)?;
    let alpha = reg.alpha.value();
    if !(alpha > 0.0) || reg.alpha.is_reverse_kl() {
        return Err(Error::InvalidInput(format!(
            "conjugate bounds require alpha > 0, got {alpha}"
        )));
    }
    let mut a_max = 0;
    for (a, x) in q.iter().enumerate() {
        if *x > q[a_max] {
            a_max = a;
        }
    }
    let q_max = q[a_max];
    let dual = AlphaParam::new(2.0 - alpha)?;
    let lower = q_max + log_alpha_ext(reg.reference[a_max], dual) / (reg.beta * alpha);
    Ok((lower, q_max))
}

/// Value, both normalizers and the residual of `ψ_q = V + ψ_Δr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiRelationship {
    pub value: f64,
    pub psi_q: f64,
    pub psi_dr: f64,
    pub residual: f64,
}

/// Checks `ψ_q = V + ψ_Δr` with `ψ_Δr = (1/β)(1-α) D_α[π0 : π*]`.
pub fn psi_relationship_check(q: &[f64], reg: &StateReg) -> Result<PsiRelationship> {
    let sol = solve_simplex_conjugate(q, reg)?;
    psi_relationship_from(&sol, reg)
}

pub(crate) fn psi_relationship_from(sol: &ConjugateSolution, reg: &StateReg) -> Result<PsiRelationship> {
    let psi_dr = if reg.alpha.is_kl() {
        0.0
    } else {
        (1.0 - reg.alpha.value()) * alpha_divergence(reg.reference, &sol.optimizer, reg.alpha)? / reg.beta
    };
    Ok(PsiRelationship {
        value: sol.value,
        psi_q: sol.normalizer,
        psi_dr,
        residual: (sol.normalizer - sol.value - psi_dr).abs(),
    })
}

/// Closed-form conjugate `(1/β) Ω*(Δr)` without a normalization constraint.
///
/// * KL, policy: `(1/β) Σ_s μ(s) (Σ_a π0 e^{βΔr} - 1)`
/// * KL, occupancy: `(1/β) (Σ μ0 e^{βΔr} - Σ μ0)`
/// * α, policy: `(1/β)(1/α) Σ_s μ(s) (Σ_a π0 [1 + β(α-1)(Δr - ψ)]_+^{α/(α-1)} - 1) + Σ_s μ(s) ψ(s)`
///   with the self-consistent per-state ψ
/// * α, occupancy: `(1/β)(1/α) (Σ μ0 [1 + β(α-1)Δr]_+^{α/(α-1)} - Σ μ0)`
///
/// `state_weights` supplies `μ(s)` for the policy rows and is ignored for
/// occupancy rows. The value is `+inf` when Δr leaves the conjugate's domain.
pub fn conjugate_closed_form(
    delta_r: &PerturbationField,
    scheme: &RegScheme,
    state_weights: &[f64],
) -> Result<f64> {
    scheme.check_shape(delta_r.dim())?;
    let alpha = scheme.alpha();
    let beta = scheme.beta();
    match scheme.target() {
        Target::Occupancy => {
            let mu0 = scheme.reference();
            let dr = delta_r.to_extended();
            let weights: Vec<f64> = mu0.iter().copied().collect();
            let e: Vec<f64> = dr.iter().map(|x| exp_alpha(beta * x, alpha)).collect();
            if alpha.is_kl() {
                let total: f64 = weights.iter().zip(&e).map(|(w, x)| w * (x - 1.0)).sum();
                return Ok(total / beta);
            }
            if e.iter().zip(&weights).any(|(x, w)| x.is_infinite() && *w > 0.0) {
                return Ok(f64::INFINITY);
            }
            Ok(power_gap(&weights, &e, alpha) / beta)
        }
        Target::Policy => {
            if state_weights.len() != scheme.n_states() {
                return Err(Error::Shape(format!(
                    "{} state weights for {} states",
                    state_weights.len(),
                    scheme.n_states()
                )));
            }
            let mut total = 0.0;
            for (s, &w) in state_weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let reg = scheme.at(s);
                let row = delta_r.row_extended(s);
                let per_state = if alpha.is_kl() {
                    let m: f64 = row
                        .iter()
                        .zip(reg.reference)
                        .map(|(x, p0)| p0 * (beta * x).exp())
                        .sum();
                    (m - 1.0) / beta
                } else {
                    solve_simplex_conjugate(&row, &reg)?.value
                };
                total += w * per_state;
            }
            Ok(total)
        }
    }
}
