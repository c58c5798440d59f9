//! Two-level goal-oriented a posteriori error estimation for a nonlinear
//! Poisson problem, with adjoint verification and adaptive mesh refinement.
//!
//! The library solves `-div((1 + alpha u^2) grad u) = f` with homogeneous
//! Dirichlet conditions on a square-with-hole domain using P1 Lagrange
//! elements, and estimates the discretization error of scalar quantities of
//! interest (QoIs) against a p-enriched P2 space on the same mesh.
//!
//! Two estimates are computed:
//!
//! * `eta1`, the traditional adjoint-weighted residual estimate, which
//!   neglects the higher-order terms of both the residual and QoI Taylor
//!   expansions, and
//! * `eta2`, an estimate that accounts for those linearization errors
//!   exactly: the QoI expansion is closed with a mean-value state found by a
//!   scalar Newton solve, and the residual expansion remainder is absorbed
//!   into the adjoint weight by a least-squares correction. By construction
//!   `eta2` reproduces the two-level QoI error to solver tolerance.
//!
//! Both estimates can be localized to mesh vertices by inserting a
//! partition of unity into the weighted variational residual, converted to
//! element indicators, and used to drive size-field-based conforming
//! bisection refinement.

pub mod assembly;
pub mod dual;
pub mod estimator;
pub mod localize;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod space;
pub mod vtk;

mod error;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
