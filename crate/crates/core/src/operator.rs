//! Dense complex operator algebra: traces, the trace norm, exterior-power
//! traces, partial traces, the determinant series and the operator series
//! built from them.
//!
//! Everything here is exact finite-dimensional linear algebra and serves as
//! the independent reference path for the imbedding engine: the determinant
//! series reproduces `det(I + A)` term by term, and the operator series
//! reproduces `det(I + A) * (I + A)^{-1}` without ever forming an inverse.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ImbedError, Result};

/// A dense square matrix of complex scalars standing in for a trace-class
/// operator expressed in a finite basis.
///
/// Construction validates that the matrix is square, non-empty, and free of
/// NaN/Inf entries; all operations preserve those properties.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    m: DMatrix<Complex64>,
}

/// Result of summing the determinant series: the summed value, how many
/// terms were taken, and the tail bound `sum_{j>k} ||A||_1^j / j!` left at
/// the cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSeriesReport {
    pub value: Complex64,
    pub terms_used: usize,
    pub truncation_bound: f64,
}

/// Row-major JSON dump of an operator, entries as `[re, im]` pairs. Shared
/// with the CLI debug output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorDump {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl DiscreteOperator {
    /// Wraps a square matrix, rejecting dim 0 and non-finite entries.
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(ImbedError::InvalidInput(format!(
                "operator must be square with dim >= 1, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ImbedError::InvalidInput(
                "operator entries must be finite".into(),
            ));
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    /// Builds from an entry function over (row, col).
    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self {
            m: DMatrix::from_fn(dim, dim, f),
        }
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        assert!(!entries.is_empty(), "dim must be >= 1");
        Self {
            m: DMatrix::from_fn(entries.len(), entries.len(), |i, j| {
                if i == j {
                    entries[i]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn diagonal_real(entries: &[f64]) -> Self {
        let entries: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::diagonal(&entries)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    /// Largest entry modulus (the max norm used by the consistency checks).
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sum of the diagonal entries.
    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.m[(i, i)]).sum()
    }

    /// Trace norm `||A||_1`: the sum of singular values, computed by a full
    /// SVD. Dims are desk-scale here, so exactness beats speed.
    pub fn trace_norm(&self) -> f64 {
        self.m.clone().singular_values().iter().sum()
    }

    /// Traces of the matrix powers `Tr(A^m)` for `m = 1..=max_power`.
    ///
    /// Index 0 of the returned vector holds `Tr(A^1)`. The powers are built
    /// incrementally so each extra trace costs one matrix product.
    fn power_traces(&self, max_power: usize) -> Vec<Complex64> {
        let mut traces = Vec::with_capacity(max_power);
        let mut power = self.m.clone();
        for m in 1..=max_power {
            traces.push((0..self.dim()).map(|i| power[(i, i)]).sum());
            if m < max_power {
                power *= &self.m;
            }
        }
        traces
    }

    /// Exterior-power traces `Tr[Lambda^k(A)]` for `k = 0..=k_max`, i.e. the
    /// elementary symmetric polynomials of the eigenvalues.
    ///
    /// Uses the first-column expansion recursion
    /// `Tr[Lambda^k] = (1/k) * sum_{m=1..k} (-1)^{m+1} Tr(A^m) Tr[Lambda^{k-m}]`
    /// with the power traces cached up front. Entries beyond `dim` are
    /// pinned to exactly zero.
    fn exterior_traces_up_to(&self, k_max: usize) -> Vec<Complex64> {
        let dim = self.dim();
        let pow = self.power_traces(k_max.min(dim));
        let mut e = Vec::with_capacity(k_max + 1);
        e.push(Complex64::new(1.0, 0.0));
        for k in 1..=k_max {
            if k > dim {
                e.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 1..=k {
                let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * pow[m - 1] * e[k - m];
            }
            e.push(acc / k as f64);
        }
        e
    }

    /// `Tr[Lambda^k(A)]`, the k-th elementary symmetric polynomial of the
    /// eigenvalues. `Tr[Lambda^0] = 1` by convention; exactly zero for
    /// `k > dim`.
    pub fn exterior_power_trace(&self, k: usize) -> Complex64 {
        if k > self.dim() {
            return Complex64::new(0.0, 0.0);
        }
        self.exterior_traces_up_to(k)[k]
    }

    /// The partial trace `Tr_{k-1}[Lambda^k(A)]`, contracted back to an
    /// operator on the base space:
    ///
    /// `Tr_{k-1}[Lambda^k(A)] = (1/k) * sum_{m=1..k} (-1)^{m+1} A^{m-1} Tr[Lambda^{k-m}(A)]`
    ///
    /// For `k = 1` this is the identity; for `k = dim + 1` it vanishes by
    /// Cayley-Hamilton. Requires `k >= 1`.
    pub fn partial_trace(&self, k: usize) -> DiscreteOperator {
        assert!(k >= 1, "partial_trace requires k >= 1");
        let e = self.exterior_traces_up_to(k.saturating_sub(1));
        let dim = self.dim();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        let mut power = DMatrix::<Complex64>::identity(dim, dim);
        for m in 1..=k {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            acc += &power * (e[k - m] * Complex64::new(sign / k as f64, 0.0));
            if m < k {
                power *= &self.m;
            }
        }
        DiscreteOperator { m: acc }
    }

    /// Determinant series `d = sum_{k>=0} Tr[Lambda^k(A)]`.
    ///
    /// Terms are added until the tail bound `sum_{j>k} ||A||_1^j / j!`
    /// drops below `tol`, and always stop at `k = dim`, beyond which every
    /// term is exactly zero. The report carries the tail bound left at the
    /// cutoff; with any tolerance tight enough to reach `k = dim`, the value
    /// equals `det(I + A)` up to roundoff.
    pub fn fredholm_det_series(&self, tol: f64) -> ScalarSeriesReport {
        assert!(tol > 0.0, "tol must be positive");
        let dim = self.dim();
        let norm1 = self.trace_norm();
        let e = self.exterior_traces_up_to(dim);

        let mut value = Complex64::new(0.0, 0.0);
        let mut terms_used = 0;
        let mut bound = tail_bound(norm1, 0);
        for (k, term) in e.iter().enumerate() {
            value += term;
            terms_used = k + 1;
            bound = tail_bound(norm1, k);
            if bound < tol {
                break;
            }
        }
        ScalarSeriesReport {
            value,
            terms_used,
            truncation_bound: bound,
        }
    }

    /// The operator series `sum_{k>=1} k * Tr_{k-1}[Lambda^k(A)]`, which
    /// satisfies `D + A D = det(I + A) * I` and equals
    /// `det(I + A) * (I + A)^{-1}` away from zeros of the determinant.
    /// The series terminates at `k = dim + 1` (that last term vanishes by
    /// Cayley-Hamilton), so only `k = 1..=dim` contribute.
    pub fn d_operator_series(&self) -> DiscreteOperator {
        let dim = self.dim();
        let e = self.exterior_traces_up_to(dim);
        // Regrouped over powers of A: the coefficient of (-1)^{m+1} A^{m-1}
        // is sum_{k=m..dim} Tr[Lambda^{k-m}], since k * Tr_{k-1}[Lambda^k]
        // expands to sum_m (-1)^{m+1} A^{m-1} Tr[Lambda^{k-m}].
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        let mut power = DMatrix::<Complex64>::identity(dim, dim);
        for m in 1..=dim {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            let coeff: Complex64 = (m..=dim).map(|k| e[k - m]).sum();
            acc += &power * (coeff * Complex64::new(sign, 0.0));
            if m < dim {
                power *= &self.m;
            }
        }
        DiscreteOperator { m: acc }
    }

    /// The Plemelj-Smithies minor `beta_k(A)`, evaluated by expanding its
    /// defining determinant along the first column:
    ///
    /// `beta_k(A) = (k-1)! * sum_{m=1..k} (-1)^{m+1} A^m Tr[Lambda^{k-m}(A)]`
    ///
    /// which coincides with `k! * A * partial_trace(A, k)`. Requires `k >= 1`.
    pub fn plemelj_smithies_beta(&self, k: usize) -> DiscreteOperator {
        assert!(k >= 1, "plemelj_smithies_beta requires k >= 1");
        let e = self.exterior_traces_up_to(k.saturating_sub(1));
        let factorial: f64 = (1..k).map(|i| i as f64).product();
        let dim = self.dim();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        let mut power = self.m.clone();
        for m in 1..=k {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            acc += &power * (e[k - m] * Complex64::new(sign * factorial, 0.0));
            if m < k {
                power *= &self.m;
            }
        }
        DiscreteOperator { m: acc }
    }

    /// Scales every entry by `c`.
    pub fn scale(&self, c: Complex64) -> DiscreteOperator {
        DiscreteOperator { m: &self.m * c }
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &DiscreteOperator) -> DiscreteOperator {
        DiscreteOperator {
            m: &self.m * &rhs.m,
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim(), "vector length must match dim");
        let x = nalgebra::DVector::from_column_slice(v);
        (&self.m * x).iter().copied().collect()
    }

    pub fn add(&self, rhs: &DiscreteOperator) -> DiscreteOperator {
        DiscreteOperator {
            m: &self.m + &rhs.m,
        }
    }

    pub fn sub(&self, rhs: &DiscreteOperator) -> DiscreteOperator {
        DiscreteOperator {
            m: &self.m - &rhs.m,
        }
    }

    pub fn to_dump(&self) -> OperatorDump {
        let dim = self.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = self.m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        OperatorDump { dim, entries }
    }

    pub fn from_dump(dump: &OperatorDump) -> Result<Self> {
        if dump.entries.len() != dump.dim * dump.dim {
            return Err(ImbedError::InvalidInput(format!(
                "dump has {} entries, expected {}",
                dump.entries.len(),
                dump.dim * dump.dim
            )));
        }
        let m = DMatrix::from_fn(dump.dim, dump.dim, |i, j| {
            let [re, im] = dump.entries[i * dump.dim + j];
            Complex64::new(re, im)
        });
        Self::from_matrix(m)
    }
}

/// Tail bound `sum_{j>k} M^j / j!` of the determinant series, summed until
/// the increments no longer move the total.
fn tail_bound(norm1: f64, k: usize) -> f64 {
    // term_j = M^j / j!, starting at j = k + 1
    let mut term = 1.0;
    for j in 1..=(k + 1) {
        term *= norm1 / j as f64;
    }
    let mut total = term;
    let mut j = k + 2;
    loop {
        term *= norm1 / j as f64;
        let next = total + term;
        if next == total || j > k + 1000 {
            break;
        }
        total = next;
        j += 1;
    }
    total
}
