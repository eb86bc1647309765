//! Newton continuation for the nonlinear Hammerstein equation
//! `psi(x) = lambda int K(x, y) F(y, psi(y)) dy`.
//!
//! Each Newton correction solves the linearized system
//! `[I - lambda K W diag(F_psi)] delta = lambda K W F(psi) - psi` through the
//! engine's scaling bootstrap, so the determinant of the linearized operator
//! falls out of every solve for free — that determinant is the bifurcation
//! indicator: branches can only split where it vanishes.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ImbedError, Result};
use crate::imbedding::{bootstrap_operator_robust, IntegratorConfig};
use crate::kernel::KernelSpec;
use crate::operator::DiscreteOperator;
use crate::quadrature::QuadratureGrid;

type PointwiseFn = Arc<dyn Fn(f64, Complex64) -> Complex64 + Send + Sync>;

/// A Hammerstein problem: kernel, grid, the nonlinearity `F(y, psi)` and its
/// partial derivative with respect to `psi`.
#[derive(Clone)]
pub struct NonlinearProblem {
    kernel: KernelSpec,
    grid: QuadratureGrid,
    f: PointwiseFn,
    df: PointwiseFn,
    /// Cached `K(x_i, x_j) w_j`.
    kw: DMatrix<Complex64>,
}

impl std::fmt::Debug for NonlinearProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearProblem")
            .field("kernel", &self.kernel)
            .field("dim", &self.grid.len())
            .finish()
    }
}

impl NonlinearProblem {
    /// Builds the problem and validates `df` against central differences of
    /// `f` at a handful of probe points (tolerance 1e-5 relative).
    pub fn new<F, G>(kernel: KernelSpec, grid: QuadratureGrid, f: F, df: G) -> Result<Self>
    where
        F: Fn(f64, Complex64) -> Complex64 + Send + Sync + 'static,
        G: Fn(f64, Complex64) -> Complex64 + Send + Sync + 'static,
    {
        kernel.validate()?;
        let (ka, kb) = kernel.domain;
        let (ga, gb) = grid.domain();
        if (ka - ga).abs() > 1e-12 * (1.0 + ka.abs().max(kb.abs()))
            || (kb - gb).abs() > 1e-12 * (1.0 + ka.abs().max(kb.abs()))
        {
            return Err(ImbedError::DomainMismatch {
                kernel_a: ka,
                kernel_b: kb,
                grid_a: ga,
                grid_b: gb,
            });
        }
        let nodes = grid.nodes();
        let w = grid.weights();
        let kw = DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
            Complex64::new(kernel.eval(nodes[i], nodes[j]) * w[j], 0.0)
        });

        let problem = Self {
            kernel,
            grid,
            f: Arc::new(f),
            df: Arc::new(df),
            kw,
        };
        problem.validate_derivative()?;
        Ok(problem)
    }

    fn validate_derivative(&self) -> Result<()> {
        let nodes = self.grid.nodes();
        let probes_y = [nodes[0], nodes[nodes.len() / 2], nodes[nodes.len() - 1]];
        let probes_psi = [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, 0.0),
            Complex64::new(-0.6, 0.0),
            Complex64::new(0.25, 0.4),
            Complex64::new(0.0, -0.8),
        ];
        let h = 1e-5;
        for &y in &probes_y {
            for &psi in &probes_psi {
                let step = Complex64::new(h, 0.0);
                let fd = ((self.f)(y, psi + step) - (self.f)(y, psi - step))
                    / Complex64::new(2.0 * h, 0.0);
                let claimed = (self.df)(y, psi);
                if !claimed.re.is_finite() || !claimed.im.is_finite() {
                    return Err(ImbedError::InvalidInput(
                        "nonlinearity derivative is not finite at a probe point".into(),
                    ));
                }
                if (fd - claimed).norm() > 1e-5 * (1.0 + claimed.norm()) {
                    return Err(ImbedError::InvalidInput(format!(
                        "dF/dpsi disagrees with finite differences at (y={y}, psi={psi}): {claimed} vs {fd}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    fn apply_nonlinearity(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.grid
            .nodes()
            .iter()
            .zip(psi)
            .map(|(&y, &p)| (self.f)(y, p))
            .collect()
    }

    /// `-lambda K W diag(F_psi(psi))`, so the Newton matrix is `I + A`.
    fn linearization(&self, lambda: f64, psi: &[Complex64]) -> DiscreteOperator {
        let n = self.dim();
        let nodes = self.grid.nodes();
        let dfs: Vec<Complex64> = nodes
            .iter()
            .zip(psi)
            .map(|(&y, &p)| (self.df)(y, p))
            .collect();
        let m = DMatrix::from_fn(n, n, |i, j| {
            -Complex64::new(lambda, 0.0) * self.kw[(i, j)] * dfs[j]
        });
        DiscreteOperator::from_matrix(m).expect("linearization entries stay finite")
    }

    /// Hammerstein residual `max_i |psi_i - lambda (K W F(psi))_i|`.
    pub fn residual(&self, lambda: f64, psi: &[Complex64]) -> f64 {
        self.residual_vec(lambda, psi)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `lambda K W F(psi) - psi`, the Newton right-hand side.
    fn residual_vec(&self, lambda: f64, psi: &[Complex64]) -> Vec<Complex64> {
        let fpsi = self.apply_nonlinearity(psi);
        let v = nalgebra::DVector::from_column_slice(&fpsi);
        let kwf = &self.kw * v;
        (0..self.dim())
            .map(|i| Complex64::new(lambda, 0.0) * kwf[i] - psi[i])
            .collect()
    }
}

/// A converged solution snapshot along a branch.
#[derive(Debug, Clone)]
pub struct ContinuationState {
    pub lambda: f64,
    pub psi: Vec<Complex64>,
    /// Determinant of the linearized operator `I - lambda K W diag(F_psi)`.
    pub d_lin: Complex64,
    pub branch_id: u32,
    pub newton_iters: usize,
    /// Hammerstein residual at acceptance.
    pub residual: f64,
}

impl ContinuationState {
    /// Euclidean norm of the solution samples.
    pub fn amplitude(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Tunables for Newton continuation.
#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// `|d_lin|` below this flags a bifurcation candidate.
    pub bifurcation_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 25,
            bifurcation_tol: 1e-3,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// A refined bifurcation candidate.
#[derive(Debug, Clone, Copy)]
pub struct BifurcationPoint {
    pub lambda: f64,
    pub bracket: (f64, f64),
}

/// A continuation sweep: the states visited plus any bifurcation points
/// flagged and refined along the way.
#[derive(Debug, Clone)]
pub struct ContinuationRun {
    pub states: Vec<ContinuationState>,
    pub bifurcations: Vec<BifurcationPoint>,
}

/// Determinant of `I + a`, preferring the bootstrap march and falling back
/// to the exact series when the march ends on the singularity guard (i.e.
/// exactly at a zero, where the 1/d system cannot finish).
fn determinant_of(a: &DiscreteOperator, cfg: &IntegratorConfig) -> Complex64 {
    match bootstrap_operator_robust(a, cfg) {
        Ok((d, _)) => d,
        Err(_) => a.fredholm_det_series(1e-300).value,
    }
}

/// Newton iteration for `psi = lambda K W F(psi)` from the initial guess
/// `psi0`, every linear solve routed through the scaling bootstrap. Records
/// the determinant of the final linearization as the bifurcation indicator.
pub fn newton_solve(
    problem: &NonlinearProblem,
    lambda: f64,
    psi0: &[Complex64],
    newton_tol: f64,
    max_iters: usize,
    integrator: &IntegratorConfig,
) -> Result<ContinuationState> {
    assert!(max_iters >= 1, "max_iters must be >= 1");
    if psi0.len() != problem.dim() {
        return Err(ImbedError::InvalidInput(format!(
            "psi0 has {} samples, grid has {} nodes",
            psi0.len(),
            problem.dim()
        )));
    }
    let mut psi = psi0.to_vec();
    let mut iters = 0usize;
    loop {
        let r = problem.residual_vec(lambda, &psi);
        let res_norm = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if res_norm < newton_tol {
            let a = problem.linearization(lambda, &psi);
            let d_lin = determinant_of(&a, integrator);
            return Ok(ContinuationState {
                lambda,
                psi,
                d_lin,
                branch_id: 0,
                newton_iters: iters,
                residual: res_norm,
            });
        }
        if iters >= max_iters {
            return Err(ImbedError::NonConvergence {
                lambda: Complex64::new(lambda, 0.0),
                iters,
                residual: res_norm,
            });
        }
        let a = problem.linearization(lambda, &psi);
        let (d, d_op) = bootstrap_operator_robust(&a, integrator)?;
        if d.norm() <= integrator.singularity_threshold {
            return Err(ImbedError::Singularity {
                lambda: Complex64::new(lambda, 0.0),
                modulus: d.norm(),
            });
        }
        let delta = d_op.apply(&r);
        let inv_d = Complex64::new(1.0, 0.0) / d;
        for (p, dl) in psi.iter_mut().zip(&delta) {
            *p += dl * inv_d;
        }
        iters += 1;
    }
}

/// Natural-parameter continuation from `lambda_start` to `lambda_end` with
/// the previous solution as predictor. Flags every interval where `d_lin`
/// changes sign or dips below the bifurcation tolerance, and refines each
/// flag by bisection on `d_lin` to within 1e-8.
pub fn continue_branch(
    problem: &NonlinearProblem,
    lambda_start: f64,
    lambda_end: f64,
    step: f64,
    psi0: &[Complex64],
    cfg: &ContinuationConfig,
) -> Result<ContinuationRun> {
    if step == 0.0 || !step.is_finite() {
        return Err(ImbedError::InvalidInput(
            "continuation step must be nonzero".into(),
        ));
    }
    let dir = (lambda_end - lambda_start).signum();
    let step = step.abs() * dir;

    let mut lambdas = Vec::new();
    let mut l = lambda_start;
    loop {
        lambdas.push(l);
        if (lambda_end - l) * dir <= 1e-12 * (1.0 + lambda_end.abs()) {
            break;
        }
        l += step;
        if (l - lambda_end) * dir >= 0.0 {
            l = lambda_end;
        }
    }

    let mut states: Vec<ContinuationState> = Vec::with_capacity(lambdas.len());
    let mut predictor = psi0.to_vec();
    for &lambda in &lambdas {
        let state = newton_solve(
            problem,
            lambda,
            &predictor,
            cfg.newton_tol,
            cfg.max_newton_iters,
            &cfg.integrator,
        )?;
        predictor = state.psi.clone();
        states.push(state);
    }

    // candidate brackets: sign changes of Re(d_lin) and small-|d_lin| dips
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for w in states.windows(2) {
        if w[0].d_lin.re * w[1].d_lin.re < 0.0 {
            brackets.push((w[0].lambda, w[1].lambda));
        }
    }
    for (i, s) in states.iter().enumerate() {
        if s.d_lin.norm() < cfg.bifurcation_tol {
            let lo = if i > 0 {
                states[i - 1].lambda
            } else {
                s.lambda
            };
            let hi = if i + 1 < states.len() {
                states[i + 1].lambda
            } else {
                s.lambda
            };
            brackets.push((lo.min(hi), lo.max(hi)));
        }
    }

    let mut bifurcations: Vec<BifurcationPoint> = Vec::new();
    for (lo, hi) in brackets {
        let lambda = refine_bifurcation(problem, &states, lo, hi, cfg)?;
        if !bifurcations
            .iter()
            .any(|b| (b.lambda - lambda).abs() < 1e-6 * (1.0 + lambda.abs()))
        {
            bifurcations.push(BifurcationPoint {
                lambda,
                bracket: (lo, hi),
            });
        }
    }

    Ok(ContinuationRun {
        states,
        bifurcations,
    })
}

/// `d_lin` at an off-grid `lambda`: converge Newton from the nearest
/// recorded solution, then read off the determinant.
fn d_lin_at(
    problem: &NonlinearProblem,
    states: &[ContinuationState],
    lambda: f64,
    cfg: &ContinuationConfig,
) -> Result<Complex64> {
    let nearest = states
        .iter()
        .min_by(|a, b| {
            (a.lambda - lambda)
                .abs()
                .total_cmp(&(b.lambda - lambda).abs())
        })
        .expect("continuation produced at least one state");
    let state = newton_solve(
        problem,
        lambda,
        &nearest.psi,
        cfg.newton_tol,
        cfg.max_newton_iters,
        &cfg.integrator,
    )?;
    Ok(state.d_lin)
}

fn refine_bifurcation(
    problem: &NonlinearProblem,
    states: &[ContinuationState],
    mut lo: f64,
    mut hi: f64,
    cfg: &ContinuationConfig,
) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let mut d_lo = d_lin_at(problem, states, lo, cfg)?.re;
    let d_hi = d_lin_at(problem, states, hi, cfg)?.re;
    if d_lo * d_hi > 0.0 {
        // no sign change: keep the sampled dip location
        return Ok(0.5 * (lo + hi));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        let d_mid = d_lin_at(problem, states, mid, cfg)?.re;
        if d_lo * d_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            d_lo = d_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Jumps onto a branch emanating from a bifurcation point: perturbs the
/// solution along the near-null direction of the linearized operator, steps
/// `lambda_offset` away, and re-converges. The result carries an incremented
/// branch id.
pub fn branch_switch(
    problem: &NonlinearProblem,
    at: &ContinuationState,
    direction: f64,
    amplitude: f64,
    lambda_offset: f64,
    cfg: &ContinuationConfig,
) -> Result<ContinuationState> {
    if at.d_lin.norm() >= cfg.bifurcation_tol {
        return Err(ImbedError::InvalidInput(format!(
            "branch_switch needs |d_lin| < {}, got {}",
            cfg.bifurcation_tol,
            at.d_lin.norm()
        )));
    }
    let a = problem.linearization(at.lambda, &at.psi);
    let v = crate::eigen::null_direction(&a);
    let scale = Complex64::new(amplitude * direction.signum(), 0.0);
    let psi0: Vec<Complex64> = at
        .psi
        .iter()
        .zip(&v)
        .map(|(&p, &vi)| p + scale * vi)
        .collect();
    let mut state = newton_solve(
        problem,
        at.lambda + lambda_offset,
        &psi0,
        cfg.newton_tol,
        cfg.max_newton_iters,
        &cfg.integrator,
    )?;
    state.branch_id = at.branch_id + 1;
    Ok(state)
}
