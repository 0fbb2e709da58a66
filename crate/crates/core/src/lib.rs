//! Optimal unambiguous discrimination of two mixed quantum states.
//!
//! The analytic solvers cover the fidelity-bound class and the rank-one
//! class of equal-prior involution-symmetric pairs in four dimensions. Every
//! solver output carries an optimality certificate, and an independent
//! barrier-method optimizer is available for cross-checks.

pub mod bb84;
pub mod certificate;
pub mod error;
pub mod fidelity;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod solvers;

pub use certificate::{fit_certificate, verify_certificate, OptimalityCertificate};
pub use error::{Result, UsdError};
pub use linalg::{ComplexMatrix, HermitianMatrix, C64};
pub use oracle::{oracle_optimize, OracleResult, OracleSettings};
pub use problem::{DensityMatrix, Povm, Tolerances, UsdProblem, ValidationReport};
pub use solvers::{solve, solve_first_class, solve_gu_4d, solve_with, Branch, SolutionReport};
