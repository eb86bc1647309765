//! The imbedding engine: evolves the determinant `d(lambda)` and the
//! operator `D(lambda) = det(I + f) * (I + f)^{-1}` along paths in the
//! complex plane by integrating the coupled ODEs
//!
//! ```text
//! d'(lambda) = Tr[f'(lambda) D(lambda)]
//! D'(lambda) = (D(lambda) / d(lambda)) [d'(lambda) I - f'(lambda) D(lambda)]
//! ```
//!
//! Initial values at an arbitrary anchor come from an auxiliary march in a
//! scaling parameter: `g(xi) = xi * f(lambda0)` starts from the exactly
//! known pair `(d, D) = (1, I)` at `xi = 0` and reaches the true values at
//! `xi = 1`. Linear solves then cost one matrix-vector product,
//! `psi = D phi / d`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ImbedError, Result};
use crate::ode::{self, AdaptiveSettings, StepRecord, StepSink};
use crate::operator::DiscreteOperator;

type OperatorFn = Arc<dyn Fn(Complex64) -> DiscreteOperator + Send + Sync>;

/// How an [`OperatorFamily`] produces the derivative of its operator.
#[derive(Clone)]
enum Derivative {
    Analytic(OperatorFn),
    /// Central difference `[f(l + h) - f(l - h)] / (2h)` with the step
    /// scaled as `h * (1 + |lambda|)`. A fallback for families without a
    /// closed-form derivative; accurate only to O(h^2).
    CentralDifference {
        h: f64,
    },
}

/// An analytic map `lambda -> (f(lambda), f'(lambda))` of fixed dimension.
#[derive(Clone)]
pub struct OperatorFamily {
    dim: usize,
    f: OperatorFn,
    derivative: Derivative,
}

impl std::fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.derivative {
            Derivative::Analytic(_) => "analytic".to_string(),
            Derivative::CentralDifference { h } => format!("central_difference(h={h})"),
        };
        f.debug_struct("OperatorFamily")
            .field("dim", &self.dim)
            .field("derivative", &mode)
            .finish()
    }
}

impl OperatorFamily {
    /// Family with a closed-form derivative.
    pub fn analytic<F, G>(dim: usize, f: F, df: G) -> Result<Self>
    where
        F: Fn(Complex64) -> DiscreteOperator + Send + Sync + 'static,
        G: Fn(Complex64) -> DiscreteOperator + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(ImbedError::InvalidInput("family dim must be >= 1".into()));
        }
        Ok(Self {
            dim,
            f: Arc::new(f),
            derivative: Derivative::Analytic(Arc::new(df)),
        })
    }

    /// Family whose derivative is approximated by central differences with
    /// base step `h` (> 0), applied as `h * (1 + |lambda|)`.
    pub fn central_difference<F>(dim: usize, f: F, h: f64) -> Result<Self>
    where
        F: Fn(Complex64) -> DiscreteOperator + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(ImbedError::InvalidInput("family dim must be >= 1".into()));
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(ImbedError::InvalidInput(
                "central difference step must be positive and finite".into(),
            ));
        }
        Ok(Self {
            dim,
            f: Arc::new(f),
            derivative: Derivative::CentralDifference { h },
        })
    }

    /// The linear family `f(lambda) = lambda * a`, whose derivative is the
    /// constant `a`. This is also the auxiliary family of the bootstrap.
    pub fn scaled(a: DiscreteOperator) -> Self {
        let dim = a.dim();
        let a2 = a.clone();
        Self {
            dim,
            f: Arc::new(move |lambda| a.scale(lambda)),
            derivative: Derivative::Analytic(Arc::new(move |_| a2.clone())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates `f(lambda)`.
    pub fn f(&self, lambda: Complex64) -> DiscreteOperator {
        let out = (self.f)(lambda);
        assert_eq!(out.dim(), self.dim, "family returned wrong dimension");
        out
    }

    /// Evaluates `f'(lambda)`, analytically or by central differences.
    pub fn df(&self, lambda: Complex64) -> DiscreteOperator {
        let out = match &self.derivative {
            Derivative::Analytic(df) => df(lambda),
            Derivative::CentralDifference { h } => {
                let step = h * (1.0 + lambda.norm());
                let hs = Complex64::new(step, 0.0);
                let plus = (self.f)(lambda + hs);
                let minus = (self.f)(lambda - hs);
                plus.sub(&minus)
                    .scale(Complex64::new(1.0 / (2.0 * step), 0.0))
            }
        };
        assert_eq!(out.dim(), self.dim, "family returned wrong dimension");
        out
    }
}

/// A point on a trajectory: the parameter, the determinant, and the
/// adjugate-like operator `D = d * (I + f)^{-1}`.
#[derive(Debug, Clone)]
pub struct ImbeddingState {
    pub lambda: Complex64,
    pub det: Complex64,
    pub adjugate: DiscreteOperator,
}

impl ImbeddingState {
    pub fn new(lambda: Complex64, det: Complex64, adjugate: DiscreteOperator) -> Self {
        Self {
            lambda,
            det,
            adjugate,
        }
    }

    /// The trivial state `(d, D) = (1, I)` at the given parameter; exact
    /// whenever `f(lambda) = 0`.
    pub fn trivial(lambda: Complex64, dim: usize) -> Self {
        Self {
            lambda,
            det: Complex64::new(1.0, 0.0),
            adjugate: DiscreteOperator::identity(dim),
        }
    }

    /// Max-norm of `D + f(lambda) D - d I`, the factorization residual the
    /// state is expected to keep small along a march.
    pub fn consistency_residual(&self, family: &OperatorFamily) -> f64 {
        let f = family.f(self.lambda);
        let lhs = self.adjugate.add(&f.mul(&self.adjugate));
        let target = DiscreteOperator::identity(self.adjugate.dim()).scale(self.det);
        lhs.sub(&target).max_abs()
    }

    /// Whether the residual stays below `tol * (1 + |d|)`; the scaling keeps
    /// the test meaningful when the determinant grows large.
    pub fn is_consistent(&self, family: &OperatorFamily, tol: f64) -> bool {
        self.consistency_residual(family) <= tol * (1.0 + self.det.norm())
    }

    /// Applies the resolvent: `psi = D phi / d`. Fails when `|d|` is at or
    /// below `singularity_threshold`.
    pub fn solve(&self, phi: &[Complex64], singularity_threshold: f64) -> Result<Vec<Complex64>> {
        if self.det.norm() <= singularity_threshold {
            return Err(ImbedError::Singularity {
                lambda: self.lambda,
                modulus: self.det.norm(),
            });
        }
        let mut out = self.adjugate.apply(phi);
        let inv_d = Complex64::new(1.0, 0.0) / self.det;
        for v in &mut out {
            *v *= inv_d;
        }
        Ok(out)
    }

    /// The resolvent `(I + f)^{-1} = D / d` as an operator.
    pub fn resolvent(&self, singularity_threshold: f64) -> Result<DiscreteOperator> {
        if self.det.norm() <= singularity_threshold {
            return Err(ImbedError::Singularity {
                lambda: self.lambda,
                modulus: self.det.norm(),
            });
        }
        Ok(self.adjugate.scale(Complex64::new(1.0, 0.0) / self.det))
    }
}

/// Piecewise-linear path through the complex parameter plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPath {
    waypoints: Vec<Complex64>,
}

impl LambdaPath {
    pub fn new(waypoints: Vec<Complex64>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(ImbedError::InvalidInput(
                "path needs at least 2 waypoints".into(),
            ));
        }
        for w in waypoints.windows(2) {
            if (w[1] - w[0]).norm() == 0.0 {
                return Err(ImbedError::InvalidInput(
                    "consecutive waypoints must be distinct".into(),
                ));
            }
        }
        if waypoints
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(ImbedError::InvalidInput("waypoints must be finite".into()));
        }
        Ok(Self { waypoints })
    }

    pub fn line(a: Complex64, b: Complex64) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn real_line(a: f64, b: f64) -> Result<Self> {
        Self::line(Complex64::new(a, 0.0), Complex64::new(b, 0.0))
    }

    /// Straight path from `start` to `end` that leaves the chord at
    /// `center - r*u` and rejoins it at `center + r*u` (`u` the unit chord
    /// direction), bridging the gap with `arc_points` samples of a
    /// semicircle on the `upper` or lower side.
    pub fn with_semicircle_detour(
        start: Complex64,
        end: Complex64,
        center: Complex64,
        radius: f64,
        arc_points: usize,
        upper: bool,
    ) -> Result<Self> {
        if radius <= 0.0 {
            return Err(ImbedError::InvalidInput(
                "detour radius must be positive".into(),
            ));
        }
        let chord = end - start;
        if chord.norm() == 0.0 {
            return Err(ImbedError::InvalidInput("detour endpoints coincide".into()));
        }
        let u = chord / chord.norm();
        let mut pts = vec![start, center - u * radius];
        let n = arc_points.max(4);
        for j in 1..n {
            let theta = std::f64::consts::PI * (1.0 - j as f64 / n as f64);
            let phase = if upper {
                Complex64::new(0.0, theta).exp()
            } else {
                Complex64::new(0.0, -theta).exp()
            };
            pts.push(center + u * radius * phase);
        }
        pts.push(center + u * radius);
        pts.push(end);
        pts.dedup_by(|a, b| (*a - *b).norm() == 0.0);
        Self::new(pts)
    }

    pub fn waypoints(&self) -> &[Complex64] {
        &self.waypoints
    }

    pub fn first(&self) -> Complex64 {
        self.waypoints[0]
    }

    pub fn last(&self) -> Complex64 {
        *self.waypoints.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.waypoints.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    /// The sub-path starting `advance` (arclength) past the point of the
    /// path closest to `at`. `None` if that lands at or beyond the end.
    pub fn remainder_after(&self, at: Complex64, advance: f64) -> Option<LambdaPath> {
        // locate the closest point (segment index, parameter in [0,1])
        let mut best = (0usize, 0.0f64, f64::INFINITY);
        for (idx, (a, b)) in self.segments().enumerate() {
            let seg = b - a;
            let len2 = seg.norm_sqr();
            let t = (((at - a) * seg.conj()).re / len2).clamp(0.0, 1.0);
            let dist = (a + seg * t - at).norm();
            if dist < best.2 {
                best = (idx, t, dist);
            }
        }
        // walk `advance` forward from there
        let (mut idx, mut t, _) = best;
        let mut remaining = advance;
        loop {
            let (a, b) = (self.waypoints[idx], self.waypoints[idx + 1]);
            let seg_len = (b - a).norm();
            let left_here = (1.0 - t) * seg_len;
            if remaining < left_here {
                let t_new = t + remaining / seg_len;
                let start = a + (b - a) * t_new;
                let mut pts = vec![start];
                pts.extend_from_slice(&self.waypoints[idx + 1..]);
                pts.dedup_by(|x, y| (*x - *y).norm() == 0.0);
                return LambdaPath::new(pts).ok();
            }
            remaining -= left_here;
            idx += 1;
            t = 0.0;
            if idx + 1 >= self.waypoints.len() {
                return None;
            }
        }
    }
}

/// Stepping scheme for a march.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    Rk4Fixed { steps_per_segment: usize },
    Rk45Adaptive { rtol: f64, atol: f64, min_step: f64 },
}

/// March configuration: stepping scheme, the `|d|` level treated as a
/// singularity, the factorization-residual tolerance, and the optional
/// exact-restart cadence (`0` = never).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: IntegratorMethod,
    pub singularity_threshold: f64,
    pub consistency_tol: f64,
    #[serde(default)]
    pub renormalize_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: IntegratorMethod::Rk45Adaptive {
                rtol: 1e-8,
                atol: 1e-10,
                min_step: 1e-12,
            },
            singularity_threshold: 1e-10,
            consistency_tol: 1e-6,
            renormalize_every: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            IntegratorMethod::Rk4Fixed { steps_per_segment } => steps_per_segment >= 1,
            IntegratorMethod::Rk45Adaptive {
                rtol,
                atol,
                min_step,
            } => rtol > 0.0 && atol > 0.0 && min_step > 0.0,
        };
        if !ok || self.singularity_threshold <= 0.0 || self.consistency_tol <= 0.0 {
            return Err(ImbedError::InvalidInput(
                "integrator tolerances and step counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded point of a march: the state plus the factorization residual
/// measured there and the step size that reached it.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub state: ImbeddingState,
    pub residual: f64,
    pub step_size: f64,
}

/// Right-hand side of the imbedding system at the given state:
/// `d_dot = Tr[f'(lambda) D]` and
/// `D_dot = (D / d) [d_dot I - f'(lambda) D]`, with `D` multiplying from the
/// left exactly as the equations are posed.
pub fn imbedding_rhs(
    state: &ImbeddingState,
    family: &OperatorFamily,
    singularity_threshold: f64,
) -> Result<(Complex64, DiscreteOperator)> {
    let modulus = state.det.norm();
    if modulus <= singularity_threshold {
        return Err(ImbedError::Singularity {
            lambda: state.lambda,
            modulus,
        });
    }
    let fp = family.df(state.lambda);
    let fp_d = fp.mul(&state.adjugate);
    let d_dot = fp_d.trace();
    let inner = DiscreteOperator::identity(family.dim())
        .scale(d_dot)
        .sub(&fp_d);
    let d_hat_dot = state
        .adjugate
        .mul(&inner)
        .scale(Complex64::new(1.0, 0.0) / state.det);
    Ok((d_dot, d_hat_dot))
}

fn pack(det: Complex64, op: &DiscreteOperator) -> Vec<Complex64> {
    let n = op.dim();
    let mut y = Vec::with_capacity(1 + n * n);
    y.push(det);
    for i in 0..n {
        for j in 0..n {
            y.push(op.matrix()[(i, j)]);
        }
    }
    y
}

fn unpack(y: &[Complex64], dim: usize) -> Result<(Complex64, DiscreteOperator)> {
    let m = DMatrix::from_fn(dim, dim, |i, j| y[1 + i * dim + j]);
    Ok((y[0], DiscreteOperator::from_matrix(m)?))
}

struct MarchSink<'a> {
    family: &'a OperatorFamily,
    cfg: &'a IntegratorConfig,
    seg_start: Complex64,
    seg_delta: Complex64,
    seg_end: Complex64,
    points: &'a mut Vec<TrajectoryPoint>,
    accepted: &'a mut usize,
}

impl StepSink for MarchSink<'_> {
    fn accept(&mut self, rec: StepRecord<'_>) -> Result<Option<Vec<Complex64>>> {
        let lambda = if rec.t >= 1.0 {
            self.seg_end
        } else {
            self.seg_start + self.seg_delta * Complex64::new(rec.t, 0.0)
        };
        let (det, adjugate) = unpack(rec.y, self.family.dim())?;
        let mut state = ImbeddingState::new(lambda, det, adjugate);

        *self.accepted += 1;
        let mut replacement = None;
        if self.cfg.renormalize_every > 0
            && self.accepted.is_multiple_of(self.cfg.renormalize_every)
        {
            // exact restart from the series route, killing accumulated drift
            let f = self.family.f(lambda);
            let exact_d = f.fredholm_det_series(1e-300).value;
            let exact_op = f.d_operator_series();
            replacement = Some(pack(exact_d, &exact_op));
            state = ImbeddingState::new(lambda, exact_d, exact_op);
        }

        // The residual bound polices march drift; a restarted state is the
        // series truth and only carries the series' own roundoff, so it is
        // recorded but not policed.
        let residual = state.consistency_residual(self.family);
        if replacement.is_none() && residual > self.cfg.consistency_tol * (1.0 + state.det.norm()) {
            return Err(ImbedError::ConsistencyLost {
                lambda,
                residual,
                tol: self.cfg.consistency_tol,
            });
        }
        if state.det.norm() <= self.cfg.singularity_threshold {
            return Err(ImbedError::Singularity {
                lambda,
                modulus: state.det.norm(),
            });
        }
        self.points.push(TrajectoryPoint {
            state,
            residual,
            step_size: rec.step_size * self.seg_delta.norm(),
        });
        Ok(replacement)
    }
}

/// Integrates the imbedding system from `init` along `path`, recording every
/// accepted step (the waypoints always land exactly). The march aborts with
/// `Singularity` when `|d|` dips to the configured threshold and with
/// `ConsistencyLost` if the factorization residual degrades.
pub fn integrate_path(
    family: &OperatorFamily,
    path: &LambdaPath,
    init: &ImbeddingState,
    cfg: &IntegratorConfig,
) -> Result<Vec<TrajectoryPoint>> {
    cfg.validate()?;
    let start = path.first();
    if (init.lambda - start).norm() > 1e-12 * (1.0 + start.norm()) {
        return Err(ImbedError::InvalidInput(format!(
            "initial state sits at lambda = {}, path starts at {}",
            init.lambda, start
        )));
    }
    if init.adjugate.dim() != family.dim() {
        return Err(ImbedError::InvalidInput(
            "initial state dimension does not match family".into(),
        ));
    }
    let residual0 = init.consistency_residual(family);
    if residual0 > cfg.consistency_tol * (1.0 + init.det.norm()) {
        return Err(ImbedError::ConsistencyLost {
            lambda: init.lambda,
            residual: residual0,
            tol: cfg.consistency_tol,
        });
    }

    let mut points = vec![TrajectoryPoint {
        state: init.clone(),
        residual: residual0,
        step_size: 0.0,
    }];
    let mut accepted = 0usize;
    let mut y = pack(init.det, &init.adjugate);

    for (a, b) in path.segments() {
        let delta = b - a;
        let dim = family.dim();
        let threshold = cfg.singularity_threshold;
        let mut rhs = |t: f64, y: &[Complex64]| -> Result<Vec<Complex64>> {
            let lambda = a + delta * Complex64::new(t, 0.0);
            let (det, adjugate) = unpack(y, dim)?;
            let state = ImbeddingState::new(lambda, det, adjugate);
            let (d_dot, op_dot) = imbedding_rhs(&state, family, threshold)?;
            Ok(pack(d_dot * delta, &op_dot.scale(delta)))
        };
        let mut sink = MarchSink {
            family,
            cfg,
            seg_start: a,
            seg_delta: delta,
            seg_end: b,
            points: &mut points,
            accepted: &mut accepted,
        };
        y = match cfg.method {
            IntegratorMethod::Rk4Fixed { steps_per_segment } => {
                ode::rk4_fixed(&mut rhs, 0.0, 1.0, &y, steps_per_segment, &mut sink)?
            }
            IntegratorMethod::Rk45Adaptive {
                rtol,
                atol,
                min_step,
            } => {
                let settings = AdaptiveSettings {
                    rtol,
                    atol,
                    min_step,
                };
                let lambda_of_t = |t: f64| a + delta * Complex64::new(t, 0.0);
                ode::dopri45(&mut rhs, 0.0, 1.0, &y, &settings, &lambda_of_t, &mut sink)?
            }
        };
    }
    Ok(points)
}

/// Computes `(d, D)` for the single operator `a` by marching the auxiliary
/// family `xi * a` along `xi_path` (normally the straight line 0 -> 1) from
/// the exact start `(1, I)`.
pub fn bootstrap_operator(
    a: &DiscreteOperator,
    xi_path: &LambdaPath,
    cfg: &IntegratorConfig,
) -> Result<(Complex64, DiscreteOperator)> {
    if a.max_abs() == 0.0 {
        return Ok((
            Complex64::new(1.0, 0.0),
            DiscreteOperator::identity(a.dim()),
        ));
    }
    let aux = OperatorFamily::scaled(a.clone());
    let init = ImbeddingState::trivial(xi_path.first(), a.dim());
    if xi_path.first().norm() != 0.0 {
        return Err(ImbedError::InvalidInput(
            "bootstrap path must start at xi = 0".into(),
        ));
    }
    let traj = integrate_path(&aux, xi_path, &init, cfg)?;
    let last = &traj.last().unwrap().state;
    Ok((last.det, last.adjugate.clone()))
}

/// Initial values at an arbitrary anchor `lambda0`: marches the auxiliary
/// scaling parameter from the trivial state to `xi = 1`, yielding
/// `d = det(I + f(lambda0))` and `D = d * (I + f(lambda0))^{-1}`.
///
/// Fails with `Singularity` if the determinant of `I + xi f(lambda0)`
/// vanishes along the straight path; in that case retry through
/// [`initialize_at_via`] with a path detouring into complex `xi`.
pub fn initialize_at(
    family: &OperatorFamily,
    lambda0: Complex64,
    cfg: &IntegratorConfig,
) -> Result<ImbeddingState> {
    let straight = LambdaPath::line(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))?;
    initialize_at_via(family, lambda0, &straight, cfg)
}

/// [`initialize_at`] along a caller-chosen complex `xi` path from 0 to 1.
pub fn initialize_at_via(
    family: &OperatorFamily,
    lambda0: Complex64,
    xi_path: &LambdaPath,
    cfg: &IntegratorConfig,
) -> Result<ImbeddingState> {
    if (xi_path.last() - Complex64::new(1.0, 0.0)).norm() > 1e-14 {
        return Err(ImbedError::InvalidInput(
            "bootstrap path must end at xi = 1".into(),
        ));
    }
    let f0 = family.f(lambda0);
    let (det, adjugate) = bootstrap_operator(&f0, xi_path, cfg)?;
    Ok(ImbeddingState::new(lambda0, det, adjugate))
}

/// [`bootstrap_operator`] along the straight xi segment, retried through a
/// fixed complex detour when the segment crosses a zero of
/// `det(I + xi a)` — which happens whenever `I + a` has a real eigenvalue
/// below -1, even though `I + a` itself is regular.
pub fn bootstrap_operator_robust(
    a: &DiscreteOperator,
    cfg: &IntegratorConfig,
) -> Result<(Complex64, DiscreteOperator)> {
    let straight = LambdaPath::line(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))?;
    match bootstrap_operator(a, &straight, cfg) {
        Err(ImbedError::Singularity { .. }) => {
            let detour = LambdaPath::new(vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(0.5, 0.5),
                Complex64::new(1.0, 0.0),
            ])?;
            bootstrap_operator(a, &detour, cfg)
        }
        other => other,
    }
}

/// [`initialize_at`] with the same complex-xi fallback as
/// [`bootstrap_operator_robust`].
pub fn initialize_at_robust(
    family: &OperatorFamily,
    lambda0: Complex64,
    cfg: &IntegratorConfig,
) -> Result<ImbeddingState> {
    let f0 = family.f(lambda0);
    let (det, adjugate) = bootstrap_operator_robust(&f0, cfg)?;
    Ok(ImbeddingState::new(lambda0, det, adjugate))
}
