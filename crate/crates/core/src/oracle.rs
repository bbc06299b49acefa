//! Brute-force reference computations.
//!
//! Everything here re-derives the quantities from the raw divergence
//! formula, without going through the deformed-log helpers or the
//! bisection solver, so it can be used to check them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::PerturbationField;
use crate::scheme::{RegScheme, StateReg, Target};

/// Uniform grid on the probability simplex with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexGrid {
    n_actions: usize,
    divisions: usize,
}

impl SimplexGrid {
    pub fn new(n_actions: usize, step: f64) -> Result<Self> {
        if !(1..=4).contains(&n_actions) {
            return Err(Error::InvalidInput(format!("simplex grid supports 1..=4 actions, got {n_actions}")));
        }
        if !(1e-4..=1.0).contains(&step) {
            return Err(Error::InvalidInput(format!("grid step must lie in [1e-4, 1], got {step}")));
        }
        Ok(Self {
            n_actions,
            divisions: (1.0 / step).round() as usize,
        })
    }

    /// Default spacing: `1e-3` for up to two actions, `5e-3` beyond.
    pub fn with_default_step(n_actions: usize) -> Result<Self> {
        Self::new(n_actions, if n_actions <= 2 { 1e-3 } else { 5e-3 })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn step(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    /// Calls `f` on every grid point.
    pub fn for_each(&self, mut f: impl FnMut(&[f64])) {
        let m = self.divisions;
        let mut counts = vec![0usize; self.n_actions];
        let mut point = vec![0.0; self.n_actions];
        fn rec(
            i: usize,
            left: usize,
            m: usize,
            counts: &mut [usize],
            point: &mut [f64],
            f: &mut dyn FnMut(&[f64]),
        ) {
            let n = counts.len();
            if i == n - 1 {
                counts[i] = left;
                for (p, c) in point.iter_mut().zip(counts.iter()) {
                    *p = *c as f64 / m as f64;
                }
                f(point);
                return;
            }
            for k in 0..=left {
                counts[i] = k;
                rec(i + 1, left - k, m, counts, point, f);
            }
        }
        rec(0, m, m, &mut counts, &mut point, &mut f);
    }
}

/// `D_α[p0 : p]` straight from its definition; `+inf` outside the domain.
pub fn raw_divergence(p0: &[f64], p: &[f64], alpha: f64) -> f64 {
    let s0: f64 = p0.iter().sum();
    let s: f64 = p.iter().sum();
    if (alpha - 1.0).abs() < 1e-6 {
        let mut acc = s0 - s;
        for (&q, &x) in p0.iter().zip(p) {
            if x > 0.0 {
                if q == 0.0 {
                    return f64::INFINITY;
                }
                acc += x * (x / q).ln();
            }
        }
        return acc;
    }
    if alpha.abs() < 1e-6 {
        let mut acc = s - s0;
        for (&q, &x) in p0.iter().zip(p) {
            if q > 0.0 {
                if x == 0.0 {
                    return f64::INFINITY;
                }
                acc += q * (q / x).ln();
            }
        }
        return acc;
    }
    let mut cross = 0.0;
    for (&q, &x) in p0.iter().zip(p) {
        let term = match (q == 0.0, x == 0.0) {
            (true, true) => 0.0,
            (false, true) if alpha > 0.0 => 0.0,
            (true, false) if alpha < 1.0 => 0.0,
            (false, false) => q.powf(1.0 - alpha) * x.powf(alpha),
            _ => return f64::INFINITY,
        };
        cross += term;
    }
    ((1.0 - alpha) * s0 + alpha * s - cross) / (alpha * (1.0 - alpha))
}

/// Exhaustive maximum of `<π, q> - (1/β) D_α[π0 : π]` over the grid.
/// Returns the value and the maximizing grid point.
pub fn grid_conjugate(q: &[f64], reg: &StateReg, grid: &SimplexGrid) -> Result<(f64, Vec<f64>)> {
    if q.len() != grid.n_actions() || reg.n_actions() != grid.n_actions() {
        return Err(Error::Shape("q, reference and grid disagree on the number of actions".into()));
    }
    let alpha = reg.alpha.value();
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0.0; q.len()];
    grid.for_each(|p| {
        let d = raw_divergence(reg.reference, p, alpha);
        if !d.is_finite() {
            return;
        }
        let mut lin = 0.0;
        for (x, w) in q.iter().zip(p) {
            if *w > 0.0 {
                lin += w * x;
            }
        }
        let v = lin - d / reg.beta;
        if v > best {
            best = v;
            arg.copy_from_slice(p);
        }
    });
    Ok((best, arg))
}

fn raw_omega(mu: &Array2<f64>, scheme: &RegScheme) -> f64 {
    let alpha = scheme.alpha().value();
    let reference = scheme.reference();
    match scheme.target() {
        Target::Occupancy => {
            let p0: Vec<f64> = reference.iter().copied().collect();
            let p: Vec<f64> = mu.iter().copied().collect();
            raw_divergence(&p0, &p, alpha)
        }
        Target::Policy => mu
            .outer_iter()
            .zip(reference.outer_iter())
            .map(|(row, p0)| {
                let mass: f64 = row.sum();
                let pi: Vec<f64> = row.iter().map(|x| x / mass).collect();
                mass * raw_divergence(&p0.to_vec(), &pi, alpha)
            })
            .sum(),
    }
}

/// Central finite differences of `(1/β) Ω(μ)`, perturbing each `μ(s, a)`
/// separately (the state marginal is recomputed for the policy target).
pub fn finite_difference_gradient(mu: &Array2<f64>, scheme: &RegScheme, h: f64) -> Result<PerturbationField> {
    if mu.dim() != scheme.reference().dim() {
        return Err(Error::Shape("measure and reference shapes differ".into()));
    }
    if !(h > 1e-12 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("finite-difference step {h} underflows")));
    }
    if mu.iter().any(|x| !(*x >= 10.0 * h)) {
        return Err(Error::InvalidInput("finite differences need every entry >= 10 h".into()));
    }
    let mut grad = Array2::zeros(mu.dim());
    let mut work = mu.to_owned();
    for idx in 0..mu.len() {
        let (s, a) = (idx / mu.ncols(), idx % mu.ncols());
        let x = mu[[s, a]];
        work[[s, a]] = x + h;
        let up = raw_omega(&work, scheme);
        work[[s, a]] = x - h;
        let down = raw_omega(&work, scheme);
        work[[s, a]] = x;
        grad[[s, a]] = (up - down) / (2.0 * h * scheme.beta());
    }
    PerturbationField::from_values(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformed::AlphaParam;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn grid_counts_points() {
        let g = SimplexGrid::new(3, 0.1).unwrap();
        let mut n = 0;
        g.for_each(|p| {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            n += 1;
        });
        // C(10 + 2, 2)
        assert_eq!(n, 66);
        assert!(SimplexGrid::new(5, 0.1).is_err());
        assert!(SimplexGrid::new(2, 1e-5).is_err());
    }

    #[test]
    fn worked_example_on_grid() {
        let reg = StateReg::new(AlphaParam::new(2.0).unwrap(), 10.0, &[0.5, 0.5]).unwrap();
        let g = SimplexGrid::new(2, 1e-3).unwrap();
        let (v, arg) = grid_conjugate(&[1.1, 0.8], &reg, &g).unwrap();
        assert_abs_diff_eq!(v, 1.05, epsilon = 1e-3);
        assert_eq!(arg, vec![1.0, 0.0]);
    }

    #[test]
    fn constant_q_hits_reference() {
        let reg = StateReg::new(AlphaParam::new(0.5).unwrap(), 2.0, &[0.5, 0.5]).unwrap();
        let g = SimplexGrid::new(2, 1e-3).unwrap();
        let (v, arg) = grid_conjugate(&[0.4, 0.4], &reg, &g).unwrap();
        assert_abs_diff_eq!(v, 0.4, epsilon = 1e-14);
        assert_eq!(arg, vec![0.5, 0.5]);
    }

    #[test]
    fn fd_kl_policy() {
        let scheme = RegScheme::single_state(AlphaParam::KL, 1.0, &[0.5, 0.5]).unwrap();
        let g = finite_difference_gradient(&array![[0.8, 0.2]], &scheme, 1e-6).unwrap();
        assert_abs_diff_eq!(g.get(0, 0).unwrap(), 1.6f64.ln(), epsilon = 1e-4);
        assert_abs_diff_eq!(g.get(0, 1).unwrap(), 0.4f64.ln(), epsilon = 1e-4);
    }

    #[test]
    fn fd_occupancy_at_reference() {
        let mu0 = array![[0.1, 0.2], [0.3, 0.4]];
        let scheme = RegScheme::occupancy(AlphaParam::new(2.0).unwrap(), 1.0, mu0.clone()).unwrap();
        let g = finite_difference_gradient(&mu0, &scheme, 1e-6).unwrap();
        for e in g.entries() {
            assert_abs_diff_eq!(e.finite().unwrap(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn fd_rejects_boundary_points() {
        let scheme = RegScheme::single_state(AlphaParam::KL, 1.0, &[0.5, 0.5]).unwrap();
        assert!(finite_difference_gradient(&array![[1.0, 0.0]], &scheme, 1e-6).is_err());
        assert!(finite_difference_gradient(&array![[0.5, 0.5]], &scheme, 0.0).is_err());
    }
}
