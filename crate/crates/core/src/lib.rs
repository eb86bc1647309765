//! Solve operator equations `[I + f(lambda)] psi = phi` by marching the
//! determinant `d(lambda) = det[I + f(lambda)]` and the operator
//! `D(lambda) = d(lambda) [I + f(lambda)]^{-1}` through the complex
//! parameter plane as an initial value problem, instead of refactoring at
//! every parameter value.
//!
//! The crate is organized around that engine:
//!
//! - [`operator`]: dense complex operator algebra (traces, trace norm,
//!   exterior-power traces, partial traces, the determinant and operator
//!   series) — the exact reference path everything else is checked against.
//! - [`imbedding`]: the marching engine, its bootstrap for initial values,
//!   and resolvent-based linear solves.
//! - [`eigen`]: eigenvalues as zeros of `d(lambda)`, refined by bisection or
//!   by winding numbers on shrinking circles.
//! - [`fredholm`]: Nystrom discretization of continuous kernels, the
//!   classical kernel-space march, and cross-checks between the two
//!   formulations.
//! - [`hammerstein`]: Newton continuation for nonlinear Hammerstein
//!   equations with bifurcation detection through `d` of the linearization.
//! - [`selftest`]: seeded, reproducible invariant sweep used by tests and
//!   the CLI.
//!
//! ```
//! use imbed_core::*;
//! use num_complex::Complex64;
//!
//! // K(x, y) = x y on [0, 1], discretized on a 12-node Gauss rule.
//! let kernel = KernelSpec::product_xy(0.0, 1.0)?;
//! let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0)?;
//! let family = discretize(&kernel, &grid)?;
//!
//! // March (d, D) from the trivial state at 0 out to lambda = 1.
//! let cfg = IntegratorConfig::default();
//! let init = ImbeddingState::trivial(Complex64::new(0.0, 0.0), grid.len());
//! let path = LambdaPath::real_line(0.0, 1.0)?;
//! let end = integrate_path(&family, &path, &init, &cfg)?
//!     .pop()
//!     .unwrap()
//!     .state;
//! assert!((end.det.re - 2.0 / 3.0).abs() < 1e-7); // det(I - K) = 1 - 1/3
//!
//! // Solving psi = K psi + phi at the marched point is a matrix-vector
//! // product; for phi(x) = x the answer is 1.5 x.
//! let phi: Vec<Complex64> = grid.nodes().iter().map(|&x| x.into()).collect();
//! let psi = end.solve(&phi, cfg.singularity_threshold)?;
//! for (&x, p) in grid.nodes().iter().zip(&psi) {
//!     assert!((p.re - 1.5 * x).abs() < 1e-7);
//! }
//! # Ok::<(), ImbedError>(())
//! ```

pub mod eigen;
pub mod error;
pub mod export;
pub mod fredholm;
pub mod hammerstein;
pub mod imbedding;
pub mod kernel;
mod ode;
pub mod operator;
pub mod quadrature;
pub mod selftest;

pub use eigen::{find_eigenvalues, Eigenpair};
pub use error::{ImbedError, Result};
pub use fredholm::{
    classical_imbedding_march, correspondence_check, discretize, discretize_with, solve_fredholm,
    solve_fredholm_with, ClassicalState, CorrespondenceReport, Weighting,
};
pub use hammerstein::{
    branch_switch, continue_branch, newton_solve, BifurcationPoint, ContinuationConfig,
    ContinuationRun, ContinuationState, NonlinearProblem,
};
pub use imbedding::{
    bootstrap_operator, imbedding_rhs, initialize_at, initialize_at_robust, initialize_at_via,
    integrate_path, ImbeddingState, IntegratorConfig, IntegratorMethod, LambdaPath, OperatorFamily,
    TrajectoryPoint,
};
pub use kernel::{BuiltinFn, BuiltinKernel, KernelKind, KernelSpec};
pub use operator::{DiscreteOperator, OperatorDump, ScalarSeriesReport};
pub use quadrature::{QuadratureGrid, QuadratureRule};

#[cfg(test)]
mod thread_contract {
    use super::*;

    fn shareable<T: Send + Sync>() {}

    #[test]
    fn values_are_send_and_sync() {
        shareable::<DiscreteOperator>();
        shareable::<OperatorFamily>();
        shareable::<ImbeddingState>();
        shareable::<LambdaPath>();
        shareable::<IntegratorConfig>();
        shareable::<KernelSpec>();
        shareable::<QuadratureGrid>();
        shareable::<NonlinearProblem>();
        shareable::<ContinuationState>();
        shareable::<Eigenpair>();
    }
}
