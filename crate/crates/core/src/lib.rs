//! Regularized tabular MDPs seen through convex duality.
//!
//! KL and α-divergence regularization of a policy (or of its occupancy
//! measure) is equivalent to playing against an adversary who perturbs the
//! reward. This crate computes the conjugate value functions, the
//! adversary's worst-case perturbations, the robust set of perturbed
//! rewards, and the certificates (path consistency, indifference) that hold
//! at the regularized optimum.
//!
//! ```
//! use advreg::{solve_simplex_conjugate, AlphaParam, StateReg};
//!
//! let reg = StateReg::new(AlphaParam::new(2.0)?, 10.0, &[0.5, 0.5])?;
//! let sol = solve_simplex_conjugate(&[1.1, 0.8], &reg)?;
//! assert!((sol.value - 1.05).abs() < 1e-9);
//! assert!((sol.lambdas[1] - 0.1).abs() < 1e-9);
//! # Ok::<(), advreg::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod adversary;
pub mod conjugate;
pub mod deformed;
mod error;
pub mod field;
pub mod gridworld;
pub mod mdp;
pub mod oracle;
pub mod scheme;

pub use adversary::{
    boundary_at, entropy_divergence_shift, entropy_perturbation, indifference_check,
    path_consistency_residual, robust_membership, trace_entropy_boundary, trace_robust_boundary,
    value_form_perturbation, worst_case_perturbation, worst_case_row, BoundaryGrid, BoundaryPoint,
    Indifference, RobustnessCertificate, ZeroLevel,
};
pub use conjugate::{
    conjugate_bounds, conjugate_closed_form, psi_relationship_check, recover_lambdas,
    solve_simplex_conjugate, ConjugateSolution, PsiRelationship,
};
pub use deformed::{
    alpha_divergence, divergence_gradient, exp_alpha, kl_divergence, log_alpha, regularizer,
    tsallis_entropy, AlphaParam,
};
pub use error::{Error, Result};
pub use field::{Perturbation, PerturbationField};
pub use gridworld::{load_gridworld, Cell, GridParams, Gridworld, DEFAULT_GRID};
pub use mdp::{
    occupancy_of_policy, policy_value, regularized_value_iteration, validate_flow, value_iteration,
    HardSolution, SoftSolution, TabularMdp,
};
pub use oracle::{finite_difference_gradient, grid_conjugate, SimplexGrid};
pub use scheme::{RegScheme, StateReg, Target};
