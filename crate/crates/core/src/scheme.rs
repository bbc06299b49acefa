//! Regularization schemes: divergence order, strength and reference.

use ndarray::Array2;

use crate::deformed::AlphaParam;
use crate::error::{Error, Result};

/// Normalization tolerance for reference measures.
const NORMALIZATION_TOL: f64 = 1e-8;

/// What the divergence is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `E_{μ(s)} D_α[π0(·|s) : π(·|s)]`, conditional on each state.
    Policy,
    /// `D_α[μ0 : μ]` on the joint state-action occupancy.
    Occupancy,
}

/// A regularizer `(1/β) Ω` with order α and a reference table.
///
/// The reference is stored as an `(n_states, n_actions)` table: one
/// reference policy row per state for [`Target::Policy`], or the joint
/// reference occupancy for [`Target::Occupancy`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegScheme {
    alpha: AlphaParam,
    beta: f64,
    reference: Array2<f64>,
    target: Target,
}

impl RegScheme {
    /// Policy regularization; every reference row must sum to one.
    pub fn policy(alpha: AlphaParam, beta: f64, pi0: Array2<f64>) -> Result<Self> {
        check_beta(beta)?;
        check_weights(&pi0)?;
        for (s, row) in pi0.outer_iter().enumerate() {
            let total = row.sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidInput(format!(
                    "reference policy row {s} sums to {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            alpha,
            beta,
            reference: pi0.as_standard_layout().into_owned(),
            target: Target::Policy,
        })
    }

    /// Policy regularization towards the uniform policy.
    pub fn uniform_policy(alpha: AlphaParam, beta: f64, n_states: usize, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidInput("at least one action is required".into()));
        }
        let pi0 = Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64);
        Self::policy(alpha, beta, pi0)
    }

    /// Single-state policy regularization, the setting of one soft-value backup.
    pub fn single_state(alpha: AlphaParam, beta: f64, pi0: &[f64]) -> Result<Self> {
        let table = Array2::from_shape_vec((1, pi0.len()), pi0.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::policy(alpha, beta, table)
    }

    /// Joint occupancy regularization; the reference must sum to one.
    pub fn occupancy(alpha: AlphaParam, beta: f64, mu0: Array2<f64>) -> Result<Self> {
        check_beta(beta)?;
        check_weights(&mu0)?;
        let total = mu0.sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "reference occupancy sums to {total}, expected 1"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            reference: mu0.as_standard_layout().into_owned(),
            target: Target::Occupancy,
        })
    }

    pub fn alpha(&self) -> AlphaParam {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn reference(&self) -> &Array2<f64> {
        &self.reference
    }

    pub fn n_states(&self) -> usize {
        self.reference.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.reference.ncols()
    }

    pub fn reference_row(&self, s: usize) -> &[f64] {
        let n = self.n_actions();
        &self.reference.as_slice().expect("standard layout")[s * n..(s + 1) * n]
    }

    /// The regularizer as seen by the soft-value backup of state `s`.
    pub fn at(&self, s: usize) -> StateReg<'_> {
        StateReg {
            alpha: self.alpha,
            beta: self.beta,
            reference: self.reference_row(s),
        }
    }

    /// Same reference, different order and strength.
    pub fn with_params(&self, alpha: AlphaParam, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            alpha,
            beta,
            ..self.clone()
        })
    }

    pub(crate) fn check_shape(&self, dim: (usize, usize)) -> Result<()> {
        if dim != self.reference.dim() {
            return Err(Error::Shape(format!(
                "table has shape {:?}, scheme reference has {:?}",
                dim,
                self.reference.dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_policy(&self, op: &str) -> Result<()> {
        if self.target != Target::Policy {
            return Err(Error::InvalidInput(format!("{op} requires a policy-target scheme")));
        }
        Ok(())
    }
}

/// Per-state view of a policy regularizer: order, strength and `π0(·|s)`.
#[derive(Debug, Clone, Copy)]
pub struct StateReg<'a> {
    pub alpha: AlphaParam,
    pub beta: f64,
    pub reference: &'a [f64],
}

impl<'a> StateReg<'a> {
    pub fn new(alpha: AlphaParam, beta: f64, reference: &'a [f64]) -> Result<Self> {
        check_beta(beta)?;
        if reference.is_empty() {
            return Err(Error::InvalidInput("empty reference".into()));
        }
        if reference.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput("reference weights must be finite and >= 0".into()));
        }
        let total: f64 = reference.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!("reference sums to {total}, expected 1")));
        }
        Ok(Self {
            alpha,
            beta,
            reference,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.reference.len()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

fn check_weights(t: &Array2<f64>) -> Result<()> {
    if t.is_empty() {
        return Err(Error::InvalidInput("empty reference table".into()));
    }
    if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput("reference weights must be finite and >= 0".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_parameters() {
        let a = AlphaParam::new(2.0).unwrap();
        assert!(RegScheme::policy(a, 0.0, array![[0.5, 0.5]]).is_err());
        assert!(RegScheme::policy(a, -1.0, array![[0.5, 0.5]]).is_err());
        assert!(RegScheme::policy(a, 1.0, array![[0.5, 0.6]]).is_err());
        assert!(RegScheme::occupancy(a, 1.0, array![[0.5, 0.5], [0.5, 0.5]]).is_err());
        assert!(AlphaParam::new(f64::NAN).is_err());
    }

    #[test]
    fn per_state_view() {
        let a = AlphaParam::new(0.5).unwrap();
        let s = RegScheme::policy(a, 2.0, array![[0.5, 0.5], [0.1, 0.9]]).unwrap();
        assert_eq!(s.at(1).reference, &[0.1, 0.9]);
        assert_eq!(s.at(1).beta, 2.0);
    }
}
