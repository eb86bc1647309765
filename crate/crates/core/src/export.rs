//! Deterministic table output.
//!
//! All floats are printed with 17 significant digits ('.' separator, `\n`
//! line endings), which round-trips f64 exactly and makes repeated runs
//! byte-identical.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::hammerstein::ContinuationState;
use crate::imbedding::TrajectoryPoint;

/// 17-significant-digit scientific form, e.g. `1.5000000000000000e0`.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Trajectory CSV: `lambda_re, lambda_im, d_re, d_im, residual, step_size`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, points: &[TrajectoryPoint]) -> io::Result<()> {
    writeln!(w, "lambda_re,lambda_im,d_re,d_im,residual,step_size")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(p.state.lambda.re),
            fmt_f64(p.state.lambda.im),
            fmt_f64(p.state.det.re),
            fmt_f64(p.state.det.im),
            fmt_f64(p.residual),
            fmt_f64(p.step_size),
        )?;
    }
    Ok(())
}

/// Eigenvalue CSV: `index, lambda_re, lambda_im, d_abs`.
pub fn write_eigenvalues_csv<W: Write>(w: &mut W, rows: &[(Complex64, f64)]) -> io::Result<()> {
    writeln!(w, "index,lambda_re,lambda_im,d_abs")?;
    for (i, (lambda, d_abs)) in rows.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            i,
            fmt_f64(lambda.re),
            fmt_f64(lambda.im),
            fmt_f64(*d_abs),
        )?;
    }
    Ok(())
}

/// Solution CSV: `x, phi_re, phi_im, psi_re, psi_im`.
pub fn write_solution_csv<W: Write>(
    w: &mut W,
    nodes: &[f64],
    phi: &[Complex64],
    psi: &[Complex64],
) -> io::Result<()> {
    writeln!(w, "x,phi_re,phi_im,psi_re,psi_im")?;
    for i in 0..nodes.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(nodes[i]),
            fmt_f64(phi[i].re),
            fmt_f64(phi[i].im),
            fmt_f64(psi[i].re),
            fmt_f64(psi[i].im),
        )?;
    }
    Ok(())
}

/// Branch CSV: `lambda, branch_id, d_lin_re, d_lin_im, amplitude,
/// newton_iters`.
pub fn write_branch_csv<W: Write>(w: &mut W, states: &[ContinuationState]) -> io::Result<()> {
    writeln!(
        w,
        "lambda,branch_id,d_lin_re,d_lin_im,amplitude,newton_iters"
    )?;
    for s in states {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(s.lambda),
            s.branch_id,
            fmt_f64(s.d_lin.re),
            fmt_f64(s.d_lin.im),
            fmt_f64(s.amplitude()),
            s.newton_iters,
        )?;
    }
    Ok(())
}

/// Selftest CSV: `case, dim, check, residual, tolerance, pass`.
pub fn write_selftest_csv<W: Write>(
    w: &mut W,
    records: &[crate::selftest::CheckRecord],
) -> io::Result<()> {
    writeln!(w, "case,dim,check,residual,tolerance,pass")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.case,
            r.dim,
            r.check,
            fmt_f64(r.residual),
            fmt_f64(r.tolerance),
            if r.pass { "true" } else { "false" },
        )?;
    }
    Ok(())
}
