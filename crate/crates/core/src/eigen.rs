//! Eigenvalue location: zeros of `d(lambda)` along a scan path.
//!
//! The scan marches the imbedding system and watches the recorded `d`
//! samples for sign changes and sharp modulus dips; marches that abort on
//! the singularity guard contribute their abort point as a candidate and
//! resume just past it. Real brackets are polished by bisection, complex
//! candidates by shrinking circles driven by the winding number of `d`.

use num_complex::Complex64;

use crate::error::{ImbedError, Result};
use crate::imbedding::{
    initialize_at_robust, integrate_path, IntegratorConfig, LambdaPath, OperatorFamily,
};
use crate::operator::DiscreteOperator;

/// A located zero of `d` with the eigenvector read off the columns of `D`.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: Complex64,
    /// Unit-norm column of `D(lambda)` of largest norm (lowest index on
    /// ties). At a simple zero the columns of `D` span the null space of
    /// `I + f(lambda)`.
    pub vector: Vec<Complex64>,
}

fn det_at(family: &OperatorFamily, lambda: Complex64) -> Complex64 {
    family.f(lambda).fredholm_det_series(1e-300).value
}

/// Scans `scan` for zeros of `d`, refines each candidate to `refine_tol`,
/// and extracts eigenvectors. Fails with `NoBracket` if nothing is found.
///
/// The detection march restarts from exact series values after every step.
/// Stepping across a zero of `d` with any off-manifold error lets the `1/d`
/// factor amplify that error violently; per-step restarts keep the
/// trajectory on the manifold, where the factor cancels and the crossing is
/// smooth. The recorded `d` samples are then exact at every accepted point.
///
/// The series restarts inherit the conditioning of the power-trace
/// recursion, which degrades once `||f(lambda)||` times the dimension gets
/// large; scans that target the leading zeros — the normal use — stay well
/// inside the reliable range.
pub fn find_eigenvalues(
    family: &OperatorFamily,
    scan: &LambdaPath,
    cfg: &IntegratorConfig,
    refine_tol: f64,
) -> Result<Vec<Eigenpair>> {
    assert!(refine_tol > 0.0, "refine_tol must be positive");
    let cfg = &IntegratorConfig {
        renormalize_every: 1,
        ..*cfg
    };
    let mut samples: Vec<(Complex64, Complex64)> = Vec::new();
    let mut aborted_at: Vec<Complex64> = Vec::new();

    // March the whole scan, restarting past any singularity abort.
    let mut current = Some(scan.clone());
    let mut init = Some(initialize_at_robust(family, scan.first(), cfg)?);
    let advance = (scan.length() * 1e-2).max(refine_tol * 10.0);
    let mut restarts = 0usize;
    while let Some(path) = current.take() {
        let state = match init.take() {
            Some(s) => s,
            None => initialize_at_robust(family, path.first(), cfg)?,
        };
        match integrate_path(family, &path, &state, cfg) {
            Ok(traj) => {
                samples.extend(traj.iter().map(|p| (p.state.lambda, p.state.det)));
            }
            Err(ImbedError::Singularity { lambda, .. }) => {
                aborted_at.push(lambda);
                restarts += 1;
                if restarts > 64 {
                    return Err(ImbedError::Singularity {
                        lambda,
                        modulus: 0.0,
                    });
                }
                current = path.remainder_after(lambda, advance);
            }
            Err(e) => return Err(e),
        }
    }

    let mut candidates: Vec<Candidate> = aborted_at
        .into_iter()
        .map(|lambda| Candidate::Near { lambda })
        .collect();
    detect_from_samples(&samples, &mut candidates);

    let mut zeros: Vec<Complex64> = Vec::new();
    for cand in candidates {
        let zero = match cand {
            Candidate::RealBracket { lo, hi } => bisect_real(family, lo, hi, refine_tol),
            Candidate::Near { lambda } => {
                refine_by_winding(family, lambda, bracket_radius(&samples, lambda), refine_tol)
            }
        };
        if let Some(z) = zero {
            if !zeros.iter().any(|p| (p - z).norm() <= 10.0 * refine_tol) {
                zeros.push(z);
            }
        }
    }
    if zeros.is_empty() {
        return Err(ImbedError::NoBracket);
    }

    Ok(zeros
        .into_iter()
        .map(|lambda| Eigenpair {
            lambda,
            vector: null_direction(&family.f(lambda)),
        })
        .collect())
}

enum Candidate {
    RealBracket { lo: f64, hi: f64 },
    Near { lambda: Complex64 },
}

fn detect_from_samples(samples: &[(Complex64, Complex64)], out: &mut Vec<Candidate>) {
    // sign changes of a real-valued d along a real path
    for w in samples.windows(2) {
        let ((la, da), (lb, db)) = (w[0], w[1]);
        let real_path = la.im.abs() <= 1e-12 && lb.im.abs() <= 1e-12;
        let real_d =
            da.im.abs() <= 1e-7 * (1.0 + da.norm()) && db.im.abs() <= 1e-7 * (1.0 + db.norm());
        if real_path && real_d && da.re * db.re < 0.0 {
            out.push(Candidate::RealBracket {
                lo: la.re,
                hi: lb.re,
            });
        }
    }
    // pronounced dips of |d| anywhere along the path
    for j in 1..samples.len().saturating_sub(1) {
        let prev = samples[j - 1].1.norm();
        let here = samples[j].1.norm();
        let next = samples[j + 1].1.norm();
        if here < 0.25 * prev.min(next) {
            out.push(Candidate::Near {
                lambda: samples[j].0,
            });
        }
    }
}

fn bracket_radius(samples: &[(Complex64, Complex64)], lambda: Complex64) -> f64 {
    let mut best = f64::INFINITY;
    let mut radius = 0.1;
    for j in 0..samples.len() {
        let dist = (samples[j].0 - lambda).norm();
        if dist < best {
            best = dist;
            let left = if j > 0 {
                (samples[j].0 - samples[j - 1].0).norm()
            } else {
                0.0
            };
            let right = if j + 1 < samples.len() {
                (samples[j + 1].0 - samples[j].0).norm()
            } else {
                0.0
            };
            radius = left.max(right).max(1e-6);
        }
    }
    radius
}

/// Bisection on the real part of `d` (the samples bracketing the zero are
/// real). Stops once `|d|` falls below `refine_tol` or the bracket has shrunk
/// to roundoff.
fn bisect_real(
    family: &OperatorFamily,
    mut lo: f64,
    mut hi: f64,
    refine_tol: f64,
) -> Option<Complex64> {
    let d_lo = det_at(family, Complex64::new(lo, 0.0)).re;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let dm = det_at(family, Complex64::new(mid, 0.0));
        if dm.norm() < refine_tol || (hi - lo) < 4.0 * f64::EPSILON * (1.0 + mid.abs()) {
            return Some(Complex64::new(mid, 0.0));
        }
        if d_lo * dm.re <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(Complex64::new(0.5 * (lo + hi), 0.0))
}

/// Shrinking-circle refinement by the argument principle: check the winding
/// number of `d` around a circle, recentre on the first-moment estimate of
/// the enclosed zero, halve the radius, repeat.
fn refine_by_winding(
    family: &OperatorFamily,
    center0: Complex64,
    radius0: f64,
    refine_tol: f64,
) -> Option<Complex64> {
    const SAMPLES: usize = 24;
    let mut center = center0;
    let mut radius = radius0.max(refine_tol);
    for _ in 0..80 {
        let mut pts = Vec::with_capacity(SAMPLES + 1);
        let mut vals = Vec::with_capacity(SAMPLES + 1);
        for j in 0..=SAMPLES {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / SAMPLES as f64;
            let z = center + Complex64::new(0.0, theta).exp() * radius;
            pts.push(z);
            vals.push(det_at(family, z));
        }
        let mut total_arg = 0.0;
        let mut moment = Complex64::new(0.0, 0.0);
        for j in 0..SAMPLES {
            if vals[j].norm() == 0.0 {
                return Some(pts[j]);
            }
            let ratio = vals[j + 1] / vals[j];
            let dlog = Complex64::new(ratio.norm().ln(), ratio.arg());
            total_arg += ratio.arg();
            moment += (pts[j + 1] + pts[j]) * 0.5 * dlog;
        }
        let winding = (total_arg / (2.0 * std::f64::consts::PI)).round() as i64;
        if winding == 0 {
            return None;
        }
        if radius <= refine_tol {
            return Some(center);
        }
        let est = moment / Complex64::new(0.0, 2.0 * std::f64::consts::PI * winding as f64);
        // keep the new center well inside the verified circle
        let shift = est - center;
        let clamped = if shift.norm() > 0.5 * radius {
            center + shift / shift.norm() * (0.5 * radius)
        } else {
            est
        };
        center = clamped;
        radius *= 0.5;
    }
    Some(center)
}

/// Unit-norm column of largest norm of the operator series
/// `D = det(I + a) (I + a)^{-1}`, evaluated at (or next to) the zero, where
/// the columns align with the null direction of `I + a`.
pub(crate) fn null_direction(a: &DiscreteOperator) -> Vec<Complex64> {
    let d_op = a.d_operator_series();
    let m = d_op.matrix();
    let n = a.dim();
    let mut best = (0usize, -1.0f64);
    for j in 0..n {
        let norm: f64 = (0..n).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > best.1 {
            best = (j, norm);
        }
    }
    let (j, norm) = best;
    (0..n)
        .map(|i| m[(i, j)] / Complex64::new(norm, 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_eigenvalue_by_scan() {
        // f(l) = -l/2: d(l) = 1 - l/2 vanishes at l = 2
        let family = OperatorFamily::scaled(DiscreteOperator::diagonal_real(&[-0.5]));
        let scan = LambdaPath::real_line(0.0, 3.0).unwrap();
        let pairs = find_eigenvalues(&family, &scan, &IntegratorConfig::default(), 1e-9).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_abs_diff_eq!(pairs[0].lambda.re, 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(pairs[0].vector[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_eigenvalues_on_one_scan() {
        // d(l) = (1 - l/2)(1 - l/4): zeros at 2 and 4
        let family = OperatorFamily::scaled(DiscreteOperator::diagonal_real(&[-0.5, -0.25]));
        let scan = LambdaPath::real_line(0.0, 5.0).unwrap();
        let pairs = find_eigenvalues(&family, &scan, &IntegratorConfig::default(), 1e-9).unwrap();
        let mut ls: Vec<f64> = pairs.iter().map(|p| p.lambda.re).collect();
        ls.sort_by(f64::total_cmp);
        assert_eq!(ls.len(), 2);
        assert_abs_diff_eq!(ls[0], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(ls[1], 4.0, epsilon = 1e-7);
    }

    #[test]
    fn eigenvector_points_along_null_space() {
        // f(l) = -l diag(1/2, 1/5): at l = 2 the null space of I + f is e1
        let family = OperatorFamily::scaled(DiscreteOperator::diagonal_real(&[-0.5, -0.2]));
        let scan = LambdaPath::real_line(0.0, 3.0).unwrap();
        let pairs = find_eigenvalues(&family, &scan, &IntegratorConfig::default(), 1e-9).unwrap();
        assert_eq!(pairs.len(), 1);
        let v = &pairs[0].vector;
        assert_abs_diff_eq!(v[0].norm(), 1.0, epsilon = 1e-9);
        assert!(v[1].norm() < 1e-7);
    }

    #[test]
    fn complex_zero_found_by_winding() {
        // f(l) = -l/(2+i): d vanishes at l = 2 + i, off the real axis
        let pole = c(2.0, 1.0);
        let family =
            OperatorFamily::scaled(DiscreteOperator::diagonal(&[
                -Complex64::new(1.0, 0.0) / pole
            ]));
        // scan a segment passing near (but not through) the zero
        let scan = LambdaPath::line(c(0.0, 0.8), c(4.0, 1.2)).unwrap();
        let pairs = find_eigenvalues(&family, &scan, &IntegratorConfig::default(), 1e-9).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].lambda - pole).norm() < 1e-7);
    }

    #[test]
    fn coarse_threshold_forces_abort_and_restart() {
        // with a fat singularity guard the march cannot cross l = 2 at all;
        // the abort point itself becomes the candidate and the scan resumes
        // on the far side
        let family = OperatorFamily::scaled(DiscreteOperator::diagonal_real(&[-0.5]));
        let scan = LambdaPath::real_line(0.0, 3.0).unwrap();
        let cfg = IntegratorConfig {
            singularity_threshold: 5e-3,
            ..Default::default()
        };
        let pairs = find_eigenvalues(&family, &scan, &cfg, 1e-7).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_abs_diff_eq!(pairs[0].lambda.re, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn no_bracket_reported() {
        let family = OperatorFamily::scaled(DiscreteOperator::diagonal_real(&[0.5]));
        let scan = LambdaPath::real_line(0.0, 1.0).unwrap();
        let err = find_eigenvalues(&family, &scan, &IntegratorConfig::default(), 1e-9).unwrap_err();
        assert!(matches!(err, ImbedError::NoBracket));
    }
}
