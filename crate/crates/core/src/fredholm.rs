//! Nystrom frontend: turn continuous kernels into operator families, run the
//! classical kernel-space march as an independent route, and cross-check the
//! two formulations against each other.
//!
//! Sign convention: the operator of the classical equation
//! `psi = lambda K psi + phi` is `f(lambda) = -lambda K`, so eigenvalues are
//! zeros of `det(I - lambda K W)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ImbedError, Result};
use crate::imbedding::{
    initialize_at_robust, integrate_path, ImbeddingState, IntegratorConfig, LambdaPath,
    OperatorFamily,
};
use crate::kernel::KernelSpec;
use crate::ode::{self, AdaptiveSettings, StepRecord, StepSink};
use crate::operator::DiscreteOperator;
use crate::quadrature::QuadratureGrid;

/// How quadrature weights enter the discretized operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `f[i][j] = -lambda K(x_i, x_j) w_j`: the literal Nystrom matrix.
    OneSided,
    /// `f[i][j] = -lambda sqrt(w_i) K(x_i, x_j) sqrt(w_j)`: similar to the
    /// one-sided matrix (same determinant) but symmetric whenever K is,
    /// which is friendlier for eigenvector work.
    Symmetric,
}

/// A point of the classical kernel-space march: the determinant and the
/// samples `D(x_i, y_j, lambda)`.
#[derive(Debug, Clone)]
pub struct ClassicalState {
    pub lambda: Complex64,
    pub det: Complex64,
    pub d_matrix: DiscreteOperator,
}

/// Residuals tying the classical march to the generalized engine on the same
/// grid.
#[derive(Debug, Clone)]
pub struct CorrespondenceReport {
    pub lambda: Complex64,
    pub d_classical: Complex64,
    pub d_general: Complex64,
    /// `|d_classical - d_general|`
    pub d_mismatch: f64,
    /// Max-norm of `D_cl W - K W D_gen`: the discrete form of
    /// `D(x,y) = int K(x,z) D_gen(z,y) dz`.
    pub kernel_relation_residual: f64,
    /// Max-norm of `R_cl W - K W R_gen` with `R = D / d` on both sides: the
    /// resolvent relation `R = -(1/lambda) f R_gen` with the lambdas
    /// cancelled analytically.
    pub resolvent_relation_residual: f64,
}

fn check_domain(kernel: &KernelSpec, grid: &QuadratureGrid) -> Result<()> {
    kernel.validate()?;
    let (ka, kb) = kernel.domain;
    let (ga, gb) = grid.domain();
    let scale = 1.0 + ka.abs().max(kb.abs());
    if (ka - ga).abs() > 1e-12 * scale || (kb - gb).abs() > 1e-12 * scale {
        return Err(ImbedError::DomainMismatch {
            kernel_a: ka,
            kernel_b: kb,
            grid_a: ga,
            grid_b: gb,
        });
    }
    Ok(())
}

fn kernel_matrix(kernel: &KernelSpec, grid: &QuadratureGrid) -> DMatrix<Complex64> {
    let nodes = grid.nodes();
    DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
        Complex64::new(kernel.eval(nodes[i], nodes[j]), 0.0)
    })
}

/// Discretizes with the literal one-sided Nystrom weights.
pub fn discretize(kernel: &KernelSpec, grid: &QuadratureGrid) -> Result<OperatorFamily> {
    discretize_with(kernel, grid, Weighting::OneSided)
}

/// Discretizes `K` into the linear family `f(lambda) = -lambda K W` (or its
/// symmetrized similarity transform), with the constant derivative `-K W`.
pub fn discretize_with(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    weighting: Weighting,
) -> Result<OperatorFamily> {
    check_domain(kernel, grid)?;
    let k = kernel_matrix(kernel, grid);
    let w = grid.weights();
    let n = grid.len();
    let base = DMatrix::from_fn(n, n, |i, j| match weighting {
        Weighting::OneSided => -k[(i, j)] * w[j],
        Weighting::Symmetric => -k[(i, j)] * (w[i] * w[j]).sqrt(),
    });
    Ok(OperatorFamily::scaled(DiscreteOperator::from_matrix(base)?))
}

/// Marches the classical pair
/// `d' = -int D(x,x) dx` and
/// `d D' = D d' + int D(x,z) D(z,y) dz`
/// from `(d, D) = (1, K)` at `lambda = 0` to `lambda_end`, all integrals
/// replaced by the grid quadrature.
pub fn classical_imbedding_march(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    lambda_end: Complex64,
    cfg: &IntegratorConfig,
) -> Result<Vec<ClassicalState>> {
    cfg.validate()?;
    check_domain(kernel, grid)?;
    let n = grid.len();
    let k = kernel_matrix(kernel, grid);
    let weights = grid.weights().to_vec();

    let init = ClassicalState {
        lambda: Complex64::new(0.0, 0.0),
        det: Complex64::new(1.0, 0.0),
        d_matrix: DiscreteOperator::from_matrix(k.clone())?,
    };
    let mut states = vec![init.clone()];
    if lambda_end.norm() == 0.0 {
        return Ok(states);
    }

    let mut y = Vec::with_capacity(1 + n * n);
    y.push(init.det);
    y.extend(init.d_matrix.matrix().iter().copied());
    // nalgebra stores column-major; keep that layout for pack/unpack here
    let unpack = move |y: &[Complex64]| -> (Complex64, DMatrix<Complex64>) {
        (y[0], DMatrix::from_column_slice(n, n, &y[1..]))
    };

    let threshold = cfg.singularity_threshold;
    let delta = lambda_end;
    let mut rhs = |t: f64, y: &[Complex64]| -> Result<Vec<Complex64>> {
        let (d, dm) = unpack(y);
        let modulus = d.norm();
        if modulus <= threshold {
            return Err(ImbedError::Singularity {
                lambda: delta * Complex64::new(t, 0.0),
                modulus,
            });
        }
        let d_prime: Complex64 = -(0..n).map(|i| dm[(i, i)] * weights[i]).sum::<Complex64>();
        // quadratic term: (D W D)_{ij} = sum_z D_{iz} w_z D_{zj}
        let dw = {
            let mut dw = dm.clone();
            for z in 0..n {
                for i in 0..n {
                    dw[(i, z)] *= weights[z];
                }
            }
            dw
        };
        let quad = &dw * &dm;
        let inv_d = Complex64::new(1.0, 0.0) / d;
        let mut out = Vec::with_capacity(1 + n * n);
        out.push(d_prime * delta);
        for j in 0..n {
            for i in 0..n {
                out.push((dm[(i, j)] * d_prime + quad[(i, j)]) * inv_d * delta);
            }
        }
        Ok(out)
    };

    struct Sink<'a> {
        states: &'a mut Vec<ClassicalState>,
        delta: Complex64,
        n: usize,
        threshold: f64,
    }
    impl StepSink for Sink<'_> {
        fn accept(&mut self, rec: StepRecord<'_>) -> Result<Option<Vec<Complex64>>> {
            let lambda = if rec.t >= 1.0 {
                self.delta
            } else {
                self.delta * Complex64::new(rec.t, 0.0)
            };
            let det = rec.y[0];
            if det.norm() <= self.threshold {
                return Err(ImbedError::Singularity {
                    lambda,
                    modulus: det.norm(),
                });
            }
            let m = DMatrix::from_column_slice(self.n, self.n, &rec.y[1..]);
            self.states.push(ClassicalState {
                lambda,
                det,
                d_matrix: DiscreteOperator::from_matrix(m)?,
            });
            Ok(None)
        }
    }
    let mut sink = Sink {
        states: &mut states,
        delta,
        n,
        threshold,
    };

    match cfg.method {
        crate::imbedding::IntegratorMethod::Rk4Fixed { steps_per_segment } => {
            ode::rk4_fixed(&mut rhs, 0.0, 1.0, &y, steps_per_segment, &mut sink)?;
        }
        crate::imbedding::IntegratorMethod::Rk45Adaptive {
            rtol,
            atol,
            min_step,
        } => {
            let settings = AdaptiveSettings {
                rtol,
                atol,
                min_step,
            };
            let lambda_of_t = |t: f64| delta * Complex64::new(t, 0.0);
            ode::dopri45(&mut rhs, 0.0, 1.0, &y, &settings, &lambda_of_t, &mut sink)?;
        }
    }
    let _ = y;
    Ok(states)
}

/// Runs the classical march and the generalized engine to the same `lambda`
/// on the same grid and reports how well they agree.
pub fn correspondence_check(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    lambda: Complex64,
    cfg: &IntegratorConfig,
) -> Result<CorrespondenceReport> {
    let family = discretize(kernel, grid)?;
    let n = grid.len();

    let (d_general, d_hat) = if lambda.norm() == 0.0 {
        (Complex64::new(1.0, 0.0), DiscreteOperator::identity(n))
    } else {
        let init = ImbeddingState::trivial(Complex64::new(0.0, 0.0), n);
        let path = LambdaPath::line(Complex64::new(0.0, 0.0), lambda)?;
        let traj = integrate_path(&family, &path, &init, cfg)?;
        let last = &traj.last().unwrap().state;
        (last.det, last.adjugate.clone())
    };

    let classical = classical_imbedding_march(kernel, grid, lambda, cfg)?;
    let last = classical.last().unwrap();
    let (d_classical, d_cl) = (last.det, last.d_matrix.matrix().clone());

    let k = kernel_matrix(kernel, grid);
    let w = grid.weights();
    let scale_cols = |m: &DMatrix<Complex64>| {
        let mut out = m.clone();
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] *= w[j];
            }
        }
        out
    };
    // K W as a matrix (columns of K scaled), applied to the engine operators
    let kw = scale_cols(&k);

    let kernel_relation_residual = {
        let lhs = scale_cols(&d_cl);
        let rhs = &kw * d_hat.matrix();
        (lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max)
    };
    let resolvent_relation_residual = {
        let r_cl = &d_cl / d_classical;
        let r_gen = d_hat.matrix() / d_general;
        let lhs = scale_cols(&r_cl);
        let rhs = &kw * r_gen;
        (lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max)
    };

    Ok(CorrespondenceReport {
        lambda,
        d_classical,
        d_general,
        d_mismatch: (d_classical - d_general).norm(),
        kernel_relation_residual,
        resolvent_relation_residual,
    })
}

/// Solves `psi = lambda K psi + phi` at the grid nodes through the engine:
/// bootstrap `(d, D)` at `lambda`, then `psi = D phi / d`.
pub fn solve_fredholm(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    lambda: Complex64,
    phi: &[Complex64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Complex64>> {
    if phi.len() != grid.len() {
        return Err(ImbedError::InvalidInput(format!(
            "phi has {} samples, grid has {} nodes",
            phi.len(),
            grid.len()
        )));
    }
    let family = discretize(kernel, grid)?;
    let state = initialize_at_robust(&family, lambda, cfg)?;
    state.solve(phi, cfg.singularity_threshold)
}

/// [`solve_fredholm`] with the inhomogeneity given as a function, sampled at
/// the grid nodes.
pub fn solve_fredholm_with(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    lambda: Complex64,
    mut phi: impl FnMut(f64) -> Complex64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Complex64>> {
    let samples: Vec<Complex64> = grid.nodes().iter().map(|&x| phi(x)).collect();
    solve_fredholm(kernel, grid, lambda, &samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{BuiltinFn, KernelKind};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_kernel() -> KernelSpec {
        KernelSpec::new(
            KernelKind::Separable {
                factors: vec![(
                    BuiltinFn::Constant { value: 0.0 },
                    BuiltinFn::Constant { value: 0.0 },
                )],
            },
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn discretize_product_kernel() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0).unwrap();
        let family = discretize(&kernel, &grid).unwrap();
        // trace of f(1) = -sum_i x_i^2 w_i ~ -1/3
        assert_abs_diff_eq!(
            family.f(c(1.0, 0.0)).trace().re,
            -1.0 / 3.0,
            epsilon = 1e-14
        );
        // f(0) = 0
        assert_abs_diff_eq!(family.f(c(0.0, 0.0)).max_abs(), 0.0);
        assert!(family.f(c(1.0, 0.0)).trace_norm().is_finite());
    }

    #[test]
    fn discretize_rank_one_determinant() {
        // sine_product(1): det(I + f(lambda)) = 1 - lambda/2
        let kernel = KernelSpec::sine_product(1, 0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(16, 0.0, 1.0).unwrap();
        let family = discretize(&kernel, &grid).unwrap();
        for lambda in [0.3, 1.0, 1.7] {
            let d = family.f(c(lambda, 0.0)).fredholm_det_series(1e-300).value;
            assert_abs_diff_eq!(d.re, 1.0 - lambda / 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_one_determinant_is_quadrature_exact() {
        // Gauss-Legendre integrates x^2 exactly from n = 2 on, so the
        // discrete determinant 1 - lambda sum(x_i^2 w_i) hits 1 - lambda/3
        // to roundoff
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        for n in [2usize, 3, 8, 16] {
            let grid = QuadratureGrid::gauss_legendre(n, 0.0, 1.0).unwrap();
            let family = discretize(&kernel, &grid).unwrap();
            let d = family.f(c(1.0, 0.0)).fredholm_det_series(1e-300).value;
            assert!(
                (d - c(2.0 / 3.0, 0.0)).norm() < 1e-12,
                "n = {n}: d(1) = {d}"
            );
        }
    }

    #[test]
    fn domain_mismatch_is_reported() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(8, 0.0, 2.0).unwrap();
        assert!(matches!(
            discretize(&kernel, &grid).unwrap_err(),
            ImbedError::DomainMismatch { .. }
        ));
    }

    #[test]
    fn symmetrized_weighting_is_symmetric_with_same_determinant() {
        let kernel = KernelSpec::exponential_absdiff(1.0, 0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(10, 0.0, 1.0).unwrap();
        let sym = discretize_with(&kernel, &grid, Weighting::Symmetric).unwrap();
        let one = discretize_with(&kernel, &grid, Weighting::OneSided).unwrap();
        let lambda = c(0.8, 0.0);
        let fs = sym.f(lambda);
        let m = fs.matrix();
        let asym = (0..10)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .map(|(i, j)| (m[(i, j)] - m[(j, i)]).norm())
            .fold(0.0, f64::max);
        assert!(asym < 1e-12);
        // similarity transform leaves the determinant unchanged
        let ds = fs.fredholm_det_series(1e-300).value;
        let d1 = one.f(lambda).fredholm_det_series(1e-300).value;
        assert_abs_diff_eq!(ds.re, d1.re, epsilon = 1e-12);
        assert_abs_diff_eq!(ds.im, d1.im, epsilon = 1e-12);
    }

    #[test]
    fn classical_march_zero_kernel() {
        let grid = QuadratureGrid::gauss_legendre(6, 0.0, 1.0).unwrap();
        let states = classical_imbedding_march(
            &zero_kernel(),
            &grid,
            c(1.0, 0.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        for s in &states {
            assert_abs_diff_eq!(s.det.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.d_matrix.max_abs(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn classical_march_product_kernel_determinant() {
        // d(lambda) = 1 - lambda/3 for K = xy on [0,1]
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0).unwrap();
        let states =
            classical_imbedding_march(&kernel, &grid, c(1.0, 0.0), &IntegratorConfig::default())
                .unwrap();
        let last = states.last().unwrap();
        assert_abs_diff_eq!(last.det.re, 2.0 / 3.0, epsilon = 1e-8);
        // D(x, y, lambda) = x y for the rank-one kernel, independent of lambda
        let nodes = grid.nodes();
        let dm = last.d_matrix.matrix();
        for (i, &x) in nodes.iter().enumerate() {
            for (j, &y) in nodes.iter().enumerate() {
                assert_abs_diff_eq!(dm[(i, j)].re, x * y, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn classical_march_aborts_at_eigenvalue() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig {
            singularity_threshold: 1e-6,
            ..Default::default()
        };
        let err = classical_imbedding_march(&kernel, &grid, c(3.0, 0.0), &cfg).unwrap_err();
        match err {
            ImbedError::Singularity { lambda, .. } => {
                assert!((lambda.re - 3.0).abs() < 0.05, "aborted at {lambda}");
            }
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn correspondence_zero_kernel_is_exact() {
        let grid = QuadratureGrid::gauss_legendre(6, 0.0, 1.0).unwrap();
        let report = correspondence_check(
            &zero_kernel(),
            &grid,
            c(0.7, 0.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(report.d_mismatch, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.kernel_relation_residual, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(report.resolvent_relation_residual, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn correspondence_product_kernel() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(16, 0.0, 1.0).unwrap();
        let report =
            correspondence_check(&kernel, &grid, c(1.0, 0.0), &IntegratorConfig::default())
                .unwrap();
        assert!(report.d_mismatch < 1e-7, "d mismatch {}", report.d_mismatch);
        assert!(
            report.kernel_relation_residual < 1e-7,
            "kernel relation {}",
            report.kernel_relation_residual
        );
        assert!(
            report.resolvent_relation_residual < 1e-7,
            "resolvent relation {}",
            report.resolvent_relation_residual
        );
    }

    #[test]
    fn correspondence_exponential_kernel() {
        let kernel = KernelSpec::exponential_absdiff(1.0, 0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(24, 0.0, 1.0).unwrap();
        let report =
            correspondence_check(&kernel, &grid, c(0.5, 0.0), &IntegratorConfig::default())
                .unwrap();
        assert!(report.d_mismatch < 1e-6);
        assert!(report.kernel_relation_residual < 1e-6);
        assert!(report.resolvent_relation_residual < 1e-6);
    }

    #[test]
    fn solve_identity_at_lambda_zero() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(8, 0.0, 1.0).unwrap();
        let phi: Vec<Complex64> = grid.nodes().iter().map(|&x| c(x * x, 0.0)).collect();
        let psi = solve_fredholm(
            &kernel,
            &grid,
            c(0.0, 0.0),
            &phi,
            &IntegratorConfig::default(),
        )
        .unwrap();
        for (p, q) in psi.iter().zip(&phi) {
            assert_abs_diff_eq!((p - q).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_rank_one_closed_forms() {
        let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig::default();

        // phi(x) = x: psi(x) = 1.5 x
        let psi = solve_fredholm_with(&kernel, &grid, c(1.0, 0.0), |x| c(x, 0.0), &cfg).unwrap();
        for (&x, p) in grid.nodes().iter().zip(&psi) {
            assert_abs_diff_eq!(p.re, 1.5 * x, epsilon = 1e-8);
        }

        // phi(x) = 1: psi(x) = 1 + 0.75 x
        let psi = solve_fredholm_with(&kernel, &grid, c(1.0, 0.0), |_x| c(1.0, 0.0), &cfg).unwrap();
        for (&x, p) in grid.nodes().iter().zip(&psi) {
            assert_abs_diff_eq!(p.re, 1.0 + 0.75 * x, epsilon = 1e-8);
        }
    }

    #[test]
    fn solve_satisfies_discrete_equation() {
        let kernel = KernelSpec::exponential_absdiff(1.0, 0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(16, 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig::default();
        let lambda = c(0.6, 0.0);
        let phi: Vec<Complex64> = grid
            .nodes()
            .iter()
            .map(|&x| c((2.0 * x).cos(), 0.0))
            .collect();
        let psi = solve_fredholm(&kernel, &grid, lambda, &phi, &cfg).unwrap();
        // residual psi - lambda K W psi - phi
        let nodes = grid.nodes();
        let w = grid.weights();
        let phi_norm = phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for i in 0..nodes.len() {
            let mut acc = psi[i] - phi[i];
            for j in 0..nodes.len() {
                acc -= lambda * kernel.eval(nodes[i], nodes[j]) * w[j] * psi[j];
            }
            worst = worst.max(acc.norm());
        }
        assert!(worst < 1e-8 * phi_norm, "residual {worst}");
    }

    #[test]
    fn solve_rejects_eigenvalue() {
        let kernel = KernelSpec::sine_product(1, 0.0, 1.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(12, 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig {
            singularity_threshold: 1e-8,
            ..Default::default()
        };
        let phi: Vec<Complex64> = vec![c(1.0, 0.0); grid.len()];
        // lambda = 2 is the eigenvalue of the rank-one sine kernel
        let err = solve_fredholm(&kernel, &grid, c(2.0, 0.0), &phi, &cfg).unwrap_err();
        assert!(matches!(err, ImbedError::Singularity { .. }));
    }
}
