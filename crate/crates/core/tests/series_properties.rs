//! Property tests pinning the series algebra against independent oracles:
//! LU determinants, principal-minor sums, and brute-force antisymmetrized
//! inner products. The oracles never touch the series code paths.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use imbed_core::selftest::SplitMix64;
use imbed_core::DiscreteOperator;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Strategy: a square complex matrix of the given dim with entries in the
/// disc of radius `scale`.
fn operator_strategy(max_dim: usize, scale: f64) -> impl Strategy<Value = DiscreteOperator> {
    (1..=max_dim).prop_flat_map(move |dim| {
        proptest::collection::vec((-scale..scale, -scale..scale), dim * dim).prop_map(
            move |entries| {
                DiscreteOperator::from_matrix(DMatrix::from_fn(dim, dim, |i, j| {
                    let (re, im) = entries[i * dim + j];
                    c(re, im)
                }))
                .unwrap()
            },
        )
    })
}

fn identity_plus(a: &DiscreteOperator) -> DMatrix<Complex64> {
    let mut m = a.matrix().clone();
    for i in 0..a.dim() {
        m[(i, i)] += c(1.0, 0.0);
    }
    m
}

/// Sum of `k x k` principal minors of `a` — the brute-force elementary
/// symmetric polynomial of the eigenvalues, evaluated without eigenvalues.
fn principal_minor_sum(a: &DiscreteOperator, k: usize) -> Complex64 {
    let n = a.dim();
    if k == 0 {
        return c(1.0, 0.0);
    }
    if k > n {
        return c(0.0, 0.0);
    }
    let mut total = c(0.0, 0.0);
    for combo in combinations(n, k) {
        let sub = DMatrix::from_fn(k, k, |r, s| a.matrix()[(combo[r], combo[s])]);
        total += sub.determinant();
    }
    total
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = (0..k).collect::<Vec<usize>>();
    loop {
        out.push(current.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn det_series_equals_lu_determinant(a in operator_strategy(8, 0.45)) {
        let series = a.fredholm_det_series(1e-300).value;
        let lu = identity_plus(&a).determinant();
        let tol = 1e-9 * (1.0 + lu.norm());
        prop_assert!((series - lu).norm() < tol, "series {series} vs LU {lu}");
    }

    #[test]
    fn operator_series_is_determinant_times_inverse(a in operator_strategy(6, 0.35)) {
        let m = identity_plus(&a);
        let det = m.determinant();
        prop_assume!(det.norm() > 1e-3);
        let inv = m.try_inverse().unwrap();
        let expected = inv * det;
        let got = a.d_operator_series();
        let worst = (got.matrix() - &expected)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        prop_assert!(worst < 1e-9 * (1.0 + det.norm()), "worst {worst}");
    }

    #[test]
    fn factorization_holds_both_sides(a in operator_strategy(8, 0.45)) {
        let d_op = a.d_operator_series();
        let det = a.fredholm_det_series(1e-300).value;
        let target = DiscreteOperator::identity(a.dim()).scale(det);
        let scale = 1.0 + det.norm();
        let left = d_op.add(&a.mul(&d_op)).sub(&target).max_abs();
        let right = d_op.add(&d_op.mul(&a)).sub(&target).max_abs();
        prop_assert!(left < 1e-9 * scale);
        prop_assert!(right < 1e-9 * scale);
    }

    #[test]
    fn exterior_traces_match_principal_minors(a in operator_strategy(6, 0.6)) {
        for k in 0..=a.dim() {
            let series = a.exterior_power_trace(k);
            let brute = principal_minor_sum(&a, k);
            let tol = 1e-8 * (1.0 + brute.norm());
            prop_assert!((series - brute).norm() < tol, "k = {k}: {series} vs {brute}");
        }
    }

    #[test]
    fn partial_trace_recurrence(a in operator_strategy(7, 0.5)) {
        let eye = DiscreteOperator::identity(a.dim());
        for k in 1..=(a.dim() + 1) {
            let second = if k >= 2 {
                a.mul(&a.partial_trace(k - 1)).scale(c((k - 1) as f64, 0.0))
            } else {
                DiscreteOperator::zeros(a.dim())
            };
            let lhs = a.partial_trace(k).scale(c(k as f64, 0.0)).add(&second);
            let rhs = eye.scale(a.exterior_power_trace(k - 1));
            prop_assert!(lhs.sub(&rhs).max_abs() < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn minor_identity(a in operator_strategy(6, 0.5)) {
        let mut factorial = 1.0;
        for k in 1..=a.dim() {
            factorial *= k as f64;
            let expected = a.mul(&a.partial_trace(k)).scale(c(factorial, 0.0));
            let got = a.plemelj_smithies_beta(k);
            let tol = 1e-9 * (1.0 + expected.max_abs());
            prop_assert!(got.sub(&expected).max_abs() < tol, "k = {k}");
        }
    }

    #[test]
    fn trace_norm_dominates_trace(a in operator_strategy(8, 1.0)) {
        prop_assert!(a.trace_norm() >= a.trace().norm() - 1e-10);
    }

    #[test]
    fn exterior_trace_term_bound(a in operator_strategy(7, 0.8)) {
        let norm1 = a.trace_norm();
        let mut factorial = 1.0;
        for k in 1..=a.dim() {
            factorial *= k as f64;
            let bound = norm1.powi(k as i32) / factorial;
            prop_assert!(a.exterior_power_trace(k).norm() <= bound + 1e-12, "k = {k}");
        }
    }

    #[test]
    fn dump_round_trips(a in operator_strategy(5, 2.0)) {
        let back = DiscreteOperator::from_dump(&a.to_dump()).unwrap();
        prop_assert!(a.sub(&back).max_abs() == 0.0);
    }
}

/// Brute-force evaluation of `Tr[C Tr_{k-1}(Lambda^k(A))]`: iterate ordered
/// index tuples `i_1 < ... < i_k`, place `C` on each slot in turn (averaged),
/// and expand the k x k Gram determinants `det[<e_{i_r}, X_s e_{i_s}>]`.
fn partial_trace_pairing_oracle(
    a: &DiscreteOperator,
    c_op: &DiscreteOperator,
    k: usize,
) -> Complex64 {
    let n = a.dim();
    let am = a.matrix();
    let cm = c_op.matrix();
    let mut total = Complex64::new(0.0, 0.0);
    for combo in combinations(n, k) {
        for slot in 0..k {
            let gram = DMatrix::from_fn(k, k, |r, s| {
                // column s applies C (if s is the slot) or A to e_{i_s};
                // row r reads component i_r
                if s == slot {
                    cm[(combo[r], combo[s])]
                } else {
                    am[(combo[r], combo[s])]
                }
            });
            total += gram.determinant();
        }
    }
    total / Complex64::new(k as f64, 0.0)
}

#[test]
fn partial_trace_matches_pairing_oracle() {
    let mut rng = SplitMix64::new(7);
    for dim in 1..=5usize {
        for _ in 0..4 {
            let a = imbed_core::selftest::random_operator(&mut rng, dim, 0.8);
            let c_op = imbed_core::selftest::random_operator(&mut rng, dim, 0.8);
            for k in 1..=dim.min(3) {
                let via_series = c_op.mul(&a.partial_trace(k)).trace();
                let brute = partial_trace_pairing_oracle(&a, &c_op, k);
                assert!(
                    (via_series - brute).norm() < 1e-9 * (1.0 + brute.norm()),
                    "dim {dim} k {k}: {via_series} vs {brute}"
                );
            }
        }
    }
}

#[test]
fn combinations_enumerate_subsets() {
    assert_eq!(combinations(4, 2).len(), 6);
    assert_eq!(combinations(5, 3).len(), 10);
    assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
}
