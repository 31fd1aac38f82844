//! Numerical tolerances shared by every module.

/// Slack allowed when checking that a witness attains a required margin.
pub const FEASIBILITY: f64 = 1e-6;

/// Off-diagonal threshold for the Jacobi eigensolver (relative to the matrix scale).
pub const EIGEN: f64 = 1e-10;

/// Allowed deviation of a weight vector's dual norm from one.
pub const NORM_INVARIANT: f64 = 1e-9;

/// Hard limit beyond which a dual-norm deviation is reported as an error.
pub const NORM_INVARIANT_HARD: f64 = 1e-6;

/// Margins at or below this (times the data scale) count as "not separated".
pub const SEPARATION: f64 = 1e-9;

/// Symmetry tolerance required of eigensolver inputs.
pub const SYMMETRY: f64 = 1e-12;
