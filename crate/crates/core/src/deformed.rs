//! Deformed (α-) logarithm and exponential, and the α-divergence family over
//! possibly unnormalized finite measures.
//!
//! All divergences follow the convention D_α[p0 : p], i.e. the reference
//! measure comes first. With this ordering α → 1 recovers KL(p ‖ p0) and
//! α → 0 recovers the reverse direction KL(p0 ‖ p).
//!
//! Measures are plain `&[f64]` slices of nonnegative weights. They do not
//! need to sum to one.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{Perturbation, PerturbationField};
use crate::scheme::{RegScheme, Target};

/// `|α - 1|` (resp. `|α|`) below this value dispatches to the exact KL
/// (resp. reverse-KL) formulas.
pub const LIMIT_THRESHOLD: f64 = 1e-6;

/// Order of the α-divergence / α-logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AlphaParam(f64);

impl AlphaParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self(alpha))
    }

    /// The KL order, α = 1.
    pub const KL: AlphaParam = AlphaParam(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// True when α is close enough to 1 to use the KL formulas.
    #[inline]
    pub fn is_kl(self) -> bool {
        (self.0 - 1.0).abs() < LIMIT_THRESHOLD
    }

    /// True when α is close enough to 0 to use the reverse-KL formulas.
    #[inline]
    pub fn is_reverse_kl(self) -> bool {
        self.0.abs() < LIMIT_THRESHOLD
    }
}

impl std::fmt::Display for AlphaParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// α-logarithm `(u^{α-1} - 1) / (α - 1)`, the natural log in the KL limit.
pub fn log_alpha(u: f64, alpha: AlphaParam) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("log_alpha requires u > 0, got {u}")));
    }
    Ok(log_alpha_ext(u, alpha))
}

/// α-logarithm extended to `u = 0` and `u = +inf` by continuity.
///
/// `log_α(0)` is `-1/(α-1)` for α > 1 and `-inf` otherwise.
pub(crate) fn log_alpha_ext(u: f64, alpha: AlphaParam) -> f64 {
    let a = alpha.value();
    if alpha.is_kl() {
        return u.ln();
    }
    let k = a - 1.0;
    if u == 0.0 {
        return if k > 0.0 { -1.0 / k } else { f64::NEG_INFINITY };
    }
    if u.is_infinite() {
        return if k > 0.0 { f64::INFINITY } else { -1.0 / k };
    }
    (k * u.ln()).exp_m1() / k
}

/// α-exponential `[1 + (α-1)u]_+^{1/(α-1)}`, the natural exp in the KL limit.
///
/// When the bracket is clamped at zero the result is `0` for α > 1 and
/// `+inf` for α < 1 (a zero base raised to a negative power).
pub fn exp_alpha(u: f64, alpha: AlphaParam) -> f64 {
    if alpha.is_kl() {
        return u.exp();
    }
    let k = alpha.value() - 1.0;
    let bracket = 1.0 + k * u;
    if bracket <= 0.0 {
        return if k > 0.0 { 0.0 } else { f64::INFINITY };
    }
    ((k * u).ln_1p() / k).exp()
}

fn check_same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "measures have different lengths ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

fn check_measure(p: &[f64], name: &str) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Domain(format!("{name} has a negative or non-finite weight {x}")));
    }
    Ok(())
}

/// Generalized KL divergence `Σ p log(p/p0) - Σ p + Σ p0`.
pub fn kl_divergence(p: &[f64], p0: &[f64]) -> Result<f64> {
    check_same_len(p, p0)?;
    check_measure(p, "p")?;
    check_measure(p0, "p0")?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(p0) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::Domain(
                    "kl_divergence: p > 0 where p0 = 0".to_string(),
                ));
            }
            acc += pi * (pi / qi).ln();
        }
        acc += qi - pi;
    }
    Ok(acc)
}

/// `p0^{1-α} p^α` with the zero conventions used throughout the crate.
pub(crate) fn cross_power(p0: f64, p: f64, alpha: f64) -> Result<f64> {
    if p == 0.0 {
        if alpha > 0.0 || p0 == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Domain(format!(
            "0^{alpha} is undefined (p = 0 where reference > 0, alpha <= 0)"
        )));
    }
    if p0 == 0.0 {
        if alpha < 1.0 {
            return Ok(0.0);
        }
        return Err(Error::Domain(format!(
            "0^{} is undefined (reference = 0 where p > 0, alpha > 1)",
            1.0 - alpha
        )));
    }
    Ok(p0.powf(1.0 - alpha) * p.powf(alpha))
}

/// α-divergence between unnormalized measures,
/// `(1/(α(1-α))) ((1-α) Σ p0 + α Σ p - Σ p0^{1-α} p^α)`.
pub fn alpha_divergence(p0: &[f64], p: &[f64], alpha: AlphaParam) -> Result<f64> {
    check_same_len(p, p0)?;
    if alpha.is_kl() {
        return kl_divergence(p, p0);
    }
    if alpha.is_reverse_kl() {
        return kl_divergence(p0, p);
    }
    check_measure(p, "p")?;
    check_measure(p0, "p0")?;
    let a = alpha.value();
    let mut cross = 0.0;
    for (&q, &x) in p0.iter().zip(p) {
        cross += cross_power(q, x, a)?;
    }
    let s0: f64 = p0.iter().sum();
    let s: f64 = p.iter().sum();
    Ok(((1.0 - a) * s0 + a * s - cross) / (a * (1.0 - a)))
}

/// Tsallis entropy with the `k = 1/α` scaling that mirrors the α-divergence:
/// `(1/α)(1/(α-1)) (Σ p - Σ p^α)`. Shannon entropy at α = 1.
///
/// With this scaling `D_α[1 : p] = -H_α(p) + const` for normalized `p`
/// against the all-ones reference measure.
pub fn tsallis_entropy(p: &[f64], alpha: AlphaParam) -> Result<f64> {
    check_measure(p, "p")?;
    if alpha.is_kl() {
        return Ok(p
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -x * x.ln())
            .sum());
    }
    if alpha.is_reverse_kl() {
        return Err(Error::Domain(
            "tsallis entropy with k = 1/alpha is undefined at alpha = 0".to_string(),
        ));
    }
    let a = alpha.value();
    let mut pow_sum = 0.0;
    for &x in p {
        pow_sum += cross_power(1.0, x, a)?;
    }
    let s: f64 = p.iter().sum();
    Ok((s - pow_sum) / (a * (a - 1.0)))
}

/// `(1/α)(Σ w e^α - Σ w)`, with its α → 0 limit `Σ w log e`.
///
/// This is the shape shared by every α-conjugate in closed form.
pub(crate) fn power_gap(weights: &[f64], e: &[f64], alpha: AlphaParam) -> f64 {
    let a = alpha.value();
    if alpha.is_reverse_kl() {
        return weights
            .iter()
            .zip(e)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, x)| w * x.ln())
            .sum();
    }
    let mut acc = 0.0;
    for (&w, &x) in weights.iter().zip(e) {
        if w > 0.0 {
            let xa = if x == 0.0 && a > 0.0 { 0.0 } else { x.powf(a) };
            acc += w * (xa - 1.0);
        }
    }
    acc / a
}

/// The per-state constant appearing in the policy-form gradient,
/// `(1/α)(Σ π0 - Σ π0^{1-α} π^α)` (without the `1/β` factor).
///
/// Equals `(1-α) D_α[π0:π] + Σ π0 - Σ π`, which is how the α ∈ {0, 1}
/// limits are evaluated.
pub(crate) fn policy_normalizer_term(pi: &[f64], pi0: &[f64], alpha: AlphaParam) -> Result<f64> {
    let s0: f64 = pi0.iter().sum();
    let s: f64 = pi.iter().sum();
    if alpha.is_kl() {
        return Ok(s0 - s);
    }
    let d = alpha_divergence(pi0, pi, alpha)?;
    Ok((1.0 - alpha.value()) * d + s0 - s)
}

/// Scaled regularizer `Ω(μ)` for the given scheme (without `1/β`).
///
/// Policy target: `Σ_s μ(s) D_α[π0(·|s) : π(·|s)]` with `π = μ/μ(s)`.
/// Occupancy target: `D_α[μ0 : μ]` over the joint table.
pub fn regularizer(mu: &Array2<f64>, scheme: &RegScheme) -> Result<f64> {
    scheme.check_shape(mu.dim())?;
    match scheme.target() {
        Target::Occupancy => {
            let mu = mu.as_standard_layout();
            let mu0 = scheme.reference();
            alpha_divergence(
                mu0.as_slice().expect("standard layout"),
                mu.as_slice().expect("standard layout"),
                scheme.alpha(),
            )
        }
        Target::Policy => {
            let mut total = 0.0;
            for (s, row) in mu.outer_iter().enumerate() {
                let mass: f64 = row.sum();
                if mass == 0.0 {
                    continue;
                }
                let pi: Vec<f64> = row.iter().map(|x| x / mass).collect();
                total += mass * alpha_divergence(scheme.reference_row(s), &pi, scheme.alpha())?;
            }
            Ok(total)
        }
    }
}

/// Gradient of `(1/β) Ω(μ)` with respect to each entry `μ(s, a)`.
///
/// For the policy target this includes the dependence of the marginal
/// `μ(s)` on `μ(s, a)` and evaluates to `(1/β) log_α(π/π0) + ψ_Δr(s)`.
/// For the occupancy target it is `(1/β) log_α(μ/μ0)`.
///
/// Entries whose value is `-inf` (zero mass under α ≤ 1) are returned as
/// [`Perturbation::UnboundedDecrease`]. A zero reference weight is a domain
/// error since the ratio is undefined there.
pub fn divergence_gradient(mu: &Array2<f64>, scheme: &RegScheme) -> Result<PerturbationField> {
    scheme.check_shape(mu.dim())?;
    let alpha = scheme.alpha();
    let inv_beta = 1.0 / scheme.beta();
    let (n_states, n_actions) = mu.dim();
    let mut out = Array2::from_elem((n_states, n_actions), Perturbation::Finite(0.0));

    match scheme.target() {
        Target::Occupancy => {
            for ((s, a), &m) in mu.indexed_iter() {
                let m0 = scheme.reference()[[s, a]];
                check_weight(m, m0, s, a)?;
                out[[s, a]] = Perturbation::from_extended(inv_beta * log_alpha_ext(m / m0, alpha));
            }
        }
        Target::Policy => {
            for (s, row) in mu.outer_iter().enumerate() {
                let mass: f64 = row.sum();
                if !(mass > 0.0) {
                    return Err(Error::Domain(format!(
                        "state {s} has no occupancy mass; the policy is undefined there"
                    )));
                }
                let pi: Vec<f64> = row.iter().map(|x| x / mass).collect();
                let pi0 = scheme.reference_row(s);
                for (a, (&p, &p0)) in pi.iter().zip(pi0).enumerate() {
                    check_weight(p, p0, s, a)?;
                }
                let psi = inv_beta * policy_normalizer_term(&pi, pi0, alpha)?;
                for a in 0..n_actions {
                    let v = inv_beta * log_alpha_ext(pi[a] / pi0[a], alpha);
                    out[[s, a]] = Perturbation::from_extended(v + psi);
                }
            }
        }
    }
    Ok(PerturbationField::from_entries(out))
}

fn check_weight(m: f64, m0: f64, s: usize, a: usize) -> Result<()> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Domain(format!("negative or non-finite weight at (s={s}, a={a})")));
    }
    if !(m0 > 0.0) {
        return Err(Error::Domain(format!(
            "reference weight is zero at (s={s}, a={a}); gradient undefined"
        )));
    }
    Ok(())
}
