//! Shared Runge-Kutta steppers over complex state vectors.
//!
//! Both the generalized imbedding march and the classical kernel march flatten
//! their state (a scalar plus a matrix) into a `Vec<Complex64>` and integrate
//! along a real segment parameter `t in [0, 1]`. The right-hand side may fail
//! (singularity guard), so every stage evaluation is fallible. Accepted steps
//! are handed to a sink, which may veto the march or rewrite the state
//! (periodic renormalization).

use num_complex::Complex64;

use crate::error::{ImbedError, Result};

/// One accepted integrator step: the segment parameter reached and the step
/// size that produced it.
pub(crate) struct StepRecord<'a> {
    pub t: f64,
    pub y: &'a [Complex64],
    pub step_size: f64,
}

/// Receives accepted steps. Returning `Some(y)` replaces the integrator
/// state before the next step.
pub(crate) trait StepSink {
    fn accept(&mut self, rec: StepRecord<'_>) -> Result<Option<Vec<Complex64>>>;
}

pub(crate) trait Rhs {
    fn eval(&mut self, t: f64, y: &[Complex64]) -> Result<Vec<Complex64>>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[Complex64]) -> Result<Vec<Complex64>>,
{
    fn eval(&mut self, t: f64, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self(t, y)
    }
}

fn axpy(y: &[Complex64], parts: &[(&[Complex64], f64)]) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for (k, c) in parts {
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += v * Complex64::new(*c, 0.0);
        }
    }
    out
}

/// Classical fixed-step RK4 from `t0` to `t1` in `steps` equal steps.
/// Returns the final state.
pub(crate) fn rk4_fixed(
    rhs: &mut dyn Rhs,
    t0: f64,
    t1: f64,
    y0: &[Complex64],
    steps: usize,
    sink: &mut dyn StepSink,
) -> Result<Vec<Complex64>> {
    assert!(steps >= 1);
    let h = (t1 - t0) / steps as f64;
    let mut t = t0;
    let mut y = y0.to_vec();
    for i in 0..steps {
        let k1 = rhs.eval(t, &y)?;
        let k2 = rhs.eval(t + 0.5 * h, &axpy(&y, &[(&k1, 0.5 * h)]))?;
        let k3 = rhs.eval(t + 0.5 * h, &axpy(&y, &[(&k2, 0.5 * h)]))?;
        let k4 = rhs.eval(t + h, &axpy(&y, &[(&k3, h)]))?;
        y = axpy(
            &y,
            &[
                (&k1, h / 6.0),
                (&k2, h / 3.0),
                (&k3, h / 3.0),
                (&k4, h / 6.0),
            ],
        );
        t = if i + 1 == steps {
            t1
        } else {
            t0 + (i + 1) as f64 * h
        };
        if let Some(replacement) = sink.accept(StepRecord {
            t,
            y: &y,
            step_size: h,
        })? {
            y = replacement;
        }
    }
    Ok(y)
}

// Dormand-Prince 5(4) Butcher tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub(crate) struct AdaptiveSettings {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
}

/// Adaptive Dormand-Prince 5(4) from `t0` to `t1`. Returns the final state;
/// fails with `StepSize` if the controller stalls below `min_step`. The
/// lambda reported in errors is produced by `lambda_of_t`.
pub(crate) fn dopri45(
    rhs: &mut dyn Rhs,
    t0: f64,
    t1: f64,
    y0: &[Complex64],
    settings: &AdaptiveSettings,
    lambda_of_t: &dyn Fn(f64) -> Complex64,
    sink: &mut dyn StepSink,
) -> Result<Vec<Complex64>> {
    let span = t1 - t0;
    assert!(span > 0.0);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = span / 16.0;
    let mut rejects_in_a_row = 0usize;

    while t < t1 - 1e-15 * span {
        if h < settings.min_step {
            return Err(ImbedError::StepSize {
                lambda: lambda_of_t(t),
                min_step: settings.min_step,
            });
        }
        let mut clamped = false;
        if t + h >= t1 {
            h = t1 - t;
            clamped = true;
        }

        let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(7);
        k.push(rhs.eval(t, &y)?);
        for s in 1..7 {
            let parts: Vec<(&[Complex64], f64)> = (0..s)
                .filter(|&j| A[s][j] != 0.0)
                .map(|j| (k[j].as_slice(), A[s][j] * h))
                .collect();
            let ys = axpy(&y, &parts);
            k.push(rhs.eval(t + C[s] * h, &ys)?);
        }

        let y5 = axpy(
            &y,
            &(0..7)
                .filter(|&j| B5[j] != 0.0)
                .map(|j| (k[j].as_slice(), B5[j] * h))
                .collect::<Vec<_>>(),
        );
        let y4 = axpy(
            &y,
            &(0..7)
                .filter(|&j| B4[j] != 0.0)
                .map(|j| (k[j].as_slice(), B4[j] * h))
                .collect::<Vec<_>>(),
        );

        let mut err_sq = 0.0;
        for i in 0..y.len() {
            let scale = settings.atol + settings.rtol * y[i].norm().max(y5[i].norm());
            let e = (y5[i] - y4[i]).norm() / scale;
            err_sq += e * e;
        }
        let err = (err_sq / y.len() as f64).sqrt();

        if err <= 1.0 {
            t = if clamped { t1 } else { t + h };
            y = y5;
            if let Some(replacement) = sink.accept(StepRecord {
                t,
                y: &y,
                step_size: h,
            })? {
                y = replacement;
            }
            rejects_in_a_row = 0;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !clamped {
                h *= factor;
            }
        } else {
            rejects_in_a_row += 1;
            if rejects_in_a_row > 200 {
                return Err(ImbedError::StepSize {
                    lambda: lambda_of_t(t),
                    min_step: settings.min_step,
                });
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(y)
}
