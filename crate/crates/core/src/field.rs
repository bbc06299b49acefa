//! Reward perturbation tables `Δr(s, a)`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// One entry of a perturbation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Finite(f64),
    /// The adversary may decrease this reward without bound. Arises for
    /// actions with zero probability under α ≤ 1 regularization.
    UnboundedDecrease,
}

impl Perturbation {
    /// Maps `-inf` to [`Perturbation::UnboundedDecrease`].
    pub fn from_extended(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            Perturbation::UnboundedDecrease
        } else {
            Perturbation::Finite(x)
        }
    }

    /// Value on the extended real line (`-inf` for an unbounded entry).
    pub fn extended(self) -> f64 {
        match self {
            Perturbation::Finite(x) => x,
            Perturbation::UnboundedDecrease => f64::NEG_INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Perturbation::Finite(x) => Some(x),
            Perturbation::UnboundedDecrease => None,
        }
    }
}

/// The adversary's reward modification, indexed `[s, a]`. The modified
/// reward is `r - Δr`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    entries: Array2<Perturbation>,
}

impl PerturbationField {
    /// Builds a field from finite values. NaN and `+inf` are rejected;
    /// `-inf` becomes an unbounded-decrease entry.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidInput("perturbation values must not be NaN or +inf".into()));
        }
        Ok(Self {
            entries: values.mapv(Perturbation::from_extended),
        })
    }

    /// Single-state field from one value per action.
    pub fn single_state(values: &[f64]) -> Result<Self> {
        let t = Array2::from_shape_vec((1, values.len()), values.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::from_values(t)
    }

    pub(crate) fn from_entries(entries: Array2<Perturbation>) -> Self {
        Self { entries }
    }

    pub fn n_states(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.entries.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn entry(&self, s: usize, a: usize) -> Perturbation {
        self.entries[[s, a]]
    }

    /// Finite value at `(s, a)`, or `None` for an unbounded entry.
    pub fn get(&self, s: usize, a: usize) -> Option<f64> {
        self.entries[[s, a]].finite()
    }

    pub fn is_unbounded(&self, s: usize, a: usize) -> bool {
        matches!(self.entries[[s, a]], Perturbation::UnboundedDecrease)
    }

    pub fn has_unbounded(&self) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e, Perturbation::UnboundedDecrease))
    }

    /// Iterates entries in row-major `[s, a]` order.
    pub fn entries(&self) -> impl Iterator<Item = Perturbation> + '_ {
        self.entries.iter().copied()
    }

    /// Row `s` on the extended real line.
    pub fn row_extended(&self, s: usize) -> Vec<f64> {
        self.entries.row(s).iter().map(|e| e.extended()).collect()
    }

    /// Whole table on the extended real line.
    pub fn to_extended(&self) -> Array2<f64> {
        self.entries.mapv(Perturbation::extended)
    }

    /// Adds `c` to every finite entry.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            entries: self.entries.mapv(|e| match e {
                Perturbation::Finite(x) => Perturbation::Finite(x + c),
                u => u,
            }),
        }
    }

    /// Largest absolute difference over finite entries, `+inf` if the
    /// unbounded patterns differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for (x, y) in self.entries.iter().zip(other.entries.iter()) {
            match (x, y) {
                (Perturbation::Finite(a), Perturbation::Finite(b)) => worst = worst.max((a - b).abs()),
                (Perturbation::UnboundedDecrease, Perturbation::UnboundedDecrease) => {}
                _ => return f64::INFINITY,
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn neg_infinity_becomes_flag() {
        let f = PerturbationField::from_values(array![[1.0, f64::NEG_INFINITY]]).unwrap();
        assert!(f.is_unbounded(0, 1));
        assert_eq!(f.get(0, 1), None);
        assert_eq!(f.shifted(1.0).get(0, 0), Some(2.0));
        assert!(f.shifted(1.0).is_unbounded(0, 1));
        assert!(PerturbationField::from_values(array![[f64::NAN]]).is_err());
    }
}
