//! Cross-module marching behavior: path independence, analytic continuation
//! through detours around zeros, agreement with direct inversion, and
//! bootstrap exactness at scale.

use nalgebra::DMatrix;
use num_complex::Complex64;

use imbed_core::selftest::{random_operator, SplitMix64};
use imbed_core::{
    discretize, initialize_at, integrate_path, DiscreteOperator, ImbeddingState, IntegratorConfig,
    IntegratorMethod, KernelSpec, LambdaPath, OperatorFamily, QuadratureGrid,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn product_family(n: usize) -> OperatorFamily {
    let kernel = KernelSpec::product_xy(0.0, 1.0).unwrap();
    let grid = QuadratureGrid::gauss_legendre(n, 0.0, 1.0).unwrap();
    discretize(&kernel, &grid).unwrap()
}

fn exponential_family(n: usize) -> OperatorFamily {
    let kernel = KernelSpec::exponential_absdiff(1.0, 0.0, 1.0).unwrap();
    let grid = QuadratureGrid::gauss_legendre(n, 0.0, 1.0).unwrap();
    discretize(&kernel, &grid).unwrap()
}

fn march(
    family: &OperatorFamily,
    path: &LambdaPath,
    cfg: &IntegratorConfig,
) -> Vec<imbed_core::TrajectoryPoint> {
    let init = ImbeddingState::trivial(path.first(), family.dim());
    integrate_path(family, path, &init, cfg).unwrap()
}

#[test]
fn two_rectangle_edges_agree() {
    // no zeros of d inside the rectangle [0,1] x [0, 0.5i] for this kernel
    // (its first eigenvalue is ~1.35, real)
    let family = exponential_family(16);
    let cfg = IntegratorConfig::default();
    let target = c(1.0, 0.5);
    let path_a = LambdaPath::new(vec![c(0.0, 0.0), c(1.0, 0.0), target]).unwrap();
    let path_b = LambdaPath::new(vec![c(0.0, 0.0), c(0.0, 0.5), target]).unwrap();
    let end_a = march(&family, &path_a, &cfg).last().unwrap().state.clone();
    let end_b = march(&family, &path_b, &cfg).last().unwrap().state.clone();
    assert!(
        (end_a.det - end_b.det).norm() < 1e-6,
        "d mismatch {:e}",
        (end_a.det - end_b.det).norm()
    );
    assert!(end_a.adjugate.sub(&end_b.adjugate).max_abs() < 1e-6);
}

#[test]
fn semicircle_detour_continues_past_real_zero() {
    // product kernel: d(lambda) = 1 - lambda/3, zero at 3; detour over it
    let family = product_family(16);
    let cfg = IntegratorConfig::default();
    let path =
        LambdaPath::with_semicircle_detour(c(0.0, 0.0), c(3.5, 0.0), c(3.0, 0.0), 0.1, 16, true)
            .unwrap();
    let traj = march(&family, &path, &cfg);
    let end = &traj.last().unwrap().state;
    assert!(
        (end.det - c(1.0 - 3.5 / 3.0, 0.0)).norm() < 1e-6,
        "d(3.5) = {}",
        end.det
    );

    // D stays bounded on the arc: compare against its size at lambda = 2.5
    let ref_norm = {
        let to_25 = LambdaPath::real_line(0.0, 2.5).unwrap();
        march(&family, &to_25, &cfg)
            .last()
            .unwrap()
            .state
            .adjugate
            .max_abs()
    };
    for p in traj
        .iter()
        .filter(|p| (p.state.lambda - c(3.0, 0.0)).norm() < 0.11)
    {
        assert!(
            p.state.adjugate.max_abs() <= 10.0 * ref_norm,
            "D blew up on the arc at {}: {} vs reference {}",
            p.state.lambda,
            p.state.adjugate.max_abs(),
            ref_norm
        );
    }
}

#[test]
fn lower_detour_matches_upper_for_real_data() {
    // d on the far side is real again, whichever way around the zero
    let family = product_family(12);
    let cfg = IntegratorConfig::default();
    let upper =
        LambdaPath::with_semicircle_detour(c(0.0, 0.0), c(4.0, 0.0), c(3.0, 0.0), 0.2, 12, true)
            .unwrap();
    let lower =
        LambdaPath::with_semicircle_detour(c(0.0, 0.0), c(4.0, 0.0), c(3.0, 0.0), 0.2, 12, false)
            .unwrap();
    let d_up = march(&family, &upper, &cfg).last().unwrap().state.det;
    let d_dn = march(&family, &lower, &cfg).last().unwrap().state.det;
    assert!((d_up - d_dn).norm() < 1e-6);
    assert!((d_up - c(1.0 - 4.0 / 3.0, 0.0)).norm() < 1e-6);
}

#[test]
fn marched_resolvent_tracks_direct_inverse() {
    // the integrated D/d equals (I + f)^{-1} to ~10x the integrator tolerance
    let family = exponential_family(12);
    let cfg = IntegratorConfig::default();
    let path = LambdaPath::real_line(0.0, 1.0).unwrap();
    for p in march(&family, &path, &cfg) {
        let r = p.state.resolvent(1e-12).unwrap();
        let mut m = family.f(p.state.lambda).into_matrix();
        for i in 0..family.dim() {
            m[(i, i)] += c(1.0, 0.0);
        }
        let direct = m.try_inverse().unwrap();
        let worst = (r.matrix() - &direct)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7, "lambda {}: {worst:e}", p.state.lambda);
    }
}

#[test]
fn bootstrap_matches_series_to_dim_12() {
    let mut rng = SplitMix64::new(99);
    let cfg = IntegratorConfig::default();
    for dim in [1usize, 3, 6, 9, 12] {
        let a = random_operator(&mut rng, dim, 0.5 / (dim as f64).sqrt());
        let family = OperatorFamily::scaled(a.clone());
        let state = initialize_at(&family, c(1.0, 0.0), &cfg).unwrap();
        let exact_d = a.fredholm_det_series(1e-300).value;
        let exact_op = a.d_operator_series();
        assert!(
            (state.det - exact_d).norm() < 1e-7 * (1.0 + exact_d.norm()),
            "dim {dim}"
        );
        assert!(
            state.adjugate.sub(&exact_op).max_abs() < 1e-7 * (1.0 + exact_op.max_abs()),
            "dim {dim}"
        );
    }
}

#[test]
fn central_difference_family_marches_like_analytic() {
    // same kernel family, derivative by differences: endpoint d agrees
    let kernel = KernelSpec::sine_product(1, 0.0, 1.0).unwrap();
    let grid = QuadratureGrid::gauss_legendre(10, 0.0, 1.0).unwrap();
    let analytic = discretize(&kernel, &grid).unwrap();
    let base = analytic.f(c(1.0, 0.0)); // -K W at lambda = 1
    let numeric =
        OperatorFamily::central_difference(10, move |lambda| base.scale(lambda), 1e-7).unwrap();
    let cfg = IntegratorConfig::default();
    let path = LambdaPath::real_line(0.0, 1.5).unwrap();
    let d_a = march(&analytic, &path, &cfg).last().unwrap().state.det;
    let d_n = march(&numeric, &path, &cfg).last().unwrap().state.det;
    assert!((d_a - d_n).norm() < 1e-6, "{d_a} vs {d_n}");
    assert!((d_a - c(0.25, 0.0)).norm() < 1e-7); // 1 - 1.5/2
}

#[test]
fn fixed_step_and_adaptive_agree() {
    let family = exponential_family(8);
    let path = LambdaPath::real_line(0.0, 1.2).unwrap();
    let adaptive = IntegratorConfig::default();
    let fixed = IntegratorConfig {
        method: IntegratorMethod::Rk4Fixed {
            steps_per_segment: 400,
        },
        ..Default::default()
    };
    let d_a = march(&family, &path, &adaptive).last().unwrap().state.det;
    let d_f = march(&family, &path, &fixed).last().unwrap().state.det;
    assert!((d_a - d_f).norm() < 1e-7);
}

#[test]
fn renormalized_long_march_stays_exact() {
    // with periodic restarts a long march cannot drift
    let family = exponential_family(10);
    let cfg = IntegratorConfig {
        renormalize_every: 4,
        ..Default::default()
    };
    let path = LambdaPath::real_line(0.0, 1.2).unwrap();
    let traj = march(&family, &path, &cfg);
    let end = traj.last().unwrap();
    let exact = family.f(end.state.lambda).fredholm_det_series(1e-300).value;
    assert!((end.state.det - exact).norm() < 1e-9);
}

#[test]
fn eigenvalues_recovered_at_minimum_grid() {
    // Gauss n = 8 is already enough for the rank-one kernels
    let cfg = IntegratorConfig::default();
    let grid = QuadratureGrid::gauss_legendre(8, 0.0, 1.0).unwrap();
    let cases = [
        (KernelSpec::product_xy(0.0, 1.0).unwrap(), 3.0, 4.0),
        (KernelSpec::sine_product(1, 0.0, 1.0).unwrap(), 2.0, 3.0),
    ];
    for (kernel, expected, scan_to) in cases {
        let family = discretize(&kernel, &grid).unwrap();
        let pairs = imbed_core::find_eigenvalues(
            &family,
            &LambdaPath::real_line(0.0, scan_to).unwrap(),
            &cfg,
            1e-8,
        )
        .unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(
            (pairs[0].lambda - c(expected, 0.0)).norm() < 1e-6,
            "{kernel:?}: {}",
            pairs[0].lambda
        );
    }
}

#[test]
fn trapezoid_grid_marches_with_quadrature_limited_accuracy() {
    let grid = QuadratureGrid::trapezoid(41, 0.0, 1.0).unwrap();
    let family = discretize(&KernelSpec::product_xy(0.0, 1.0).unwrap(), &grid).unwrap();
    let d = march(
        &family,
        &LambdaPath::real_line(0.0, 1.0).unwrap(),
        &IntegratorConfig::default(),
    )
    .last()
    .unwrap()
    .state
    .det;
    // the composite trapezoid quadrature error dominates here
    assert!((d - c(2.0 / 3.0, 0.0)).norm() < 1e-3, "d(1) = {d}");
    assert!((d - c(2.0 / 3.0, 0.0)).norm() > 1e-8, "suspiciously exact");
}

#[test]
fn state_solve_consistent_with_family() {
    // psi = D phi / d satisfies (I + f) psi = phi
    let family = exponential_family(14);
    let cfg = IntegratorConfig::default();
    let state = initialize_at(&family, c(0.8, 0.2), &cfg).unwrap();
    let phi: Vec<Complex64> = (0..14).map(|i| c(1.0 + i as f64 * 0.1, -0.05)).collect();
    let psi = state.solve(&phi, cfg.singularity_threshold).unwrap();
    let m = {
        let mut m = family.f(state.lambda).into_matrix();
        for i in 0..14 {
            m[(i, i)] += c(1.0, 0.0);
        }
        m
    };
    let lhs = m * DMatrix::from_fn(14, 1, |i, _| psi[i]);
    let phi_norm = phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..14 {
        assert!((lhs[(i, 0)] - phi[i]).norm() < 1e-6 * phi_norm);
    }
}

#[test]
fn march_handles_noncommuting_derivative() {
    // f(l) = l A + l^2 B with A B != B A: f' does not commute with D, so
    // the operator-ordering in the marching equations is actually exercised
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            c(0.20, 0.00),
            c(0.10, 0.05),
            c(0.00, 0.00),
            c(0.00, 0.00),
            c(-0.15, 0.00),
            c(0.08, 0.00),
            c(0.05, -0.02),
            c(0.00, 0.00),
            c(0.10, 0.00),
        ],
    );
    let b = DMatrix::from_row_slice(
        3,
        3,
        &[
            c(0.00, 0.10),
            c(0.00, 0.00),
            c(0.12, 0.00),
            c(0.07, 0.00),
            c(0.05, 0.00),
            c(0.00, 0.00),
            c(0.00, 0.00),
            c(-0.09, 0.03),
            c(0.00, -0.05),
        ],
    );
    let comm = (&a * &b - &b * &a)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(comm > 1e-3, "test matrices must not commute");

    let (a2, b2) = (a.clone(), b.clone());
    let family = OperatorFamily::analytic(
        3,
        move |l| DiscreteOperator::from_matrix(&a2 * l + &b2 * (l * l)).unwrap(),
        move |l| DiscreteOperator::from_matrix(&a * c(1.0, 0.0) + &b * (l * 2.0)).unwrap(),
    )
    .unwrap();

    let cfg = IntegratorConfig::default();
    let traj = march(&family, &LambdaPath::real_line(0.0, 1.0).unwrap(), &cfg);
    let end = &traj.last().unwrap().state;

    // the marched pair still factorizes the true inverse
    let mut m = family.f(end.lambda).into_matrix();
    for i in 0..3 {
        m[(i, i)] += c(1.0, 0.0);
    }
    let det = m.determinant();
    let inv = m.try_inverse().unwrap();
    assert!((end.det - det).norm() < 1e-7 * (1.0 + det.norm()));
    let expected = inv * det;
    let worst = (end.adjugate.matrix() - &expected)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-7, "D off by {worst:e}");
}
