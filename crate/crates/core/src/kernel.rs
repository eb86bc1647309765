//! Continuous kernels `K(x, y)` on an interval, as named builtins, separable
//! factor lists, or tabulated grids with bilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{ImbedError, Result};

/// A named one-variable factor, used both for separable kernels and for
/// inhomogeneities given by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinFn {
    /// `x^power`
    Monomial {
        power: u32,
    },
    /// `sin(n pi x)`
    SinePi {
        n: u32,
    },
    /// `cos(n pi x)`
    CosinePi {
        n: u32,
    },
    /// `exp(rate * x)`
    Exp {
        rate: f64,
    },
    Constant {
        value: f64,
    },
}

impl BuiltinFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BuiltinFn::Monomial { power } => x.powi(power as i32),
            BuiltinFn::SinePi { n } => (n as f64 * std::f64::consts::PI * x).sin(),
            BuiltinFn::CosinePi { n } => (n as f64 * std::f64::consts::PI * x).cos(),
            BuiltinFn::Exp { rate } => (rate * x).exp(),
            BuiltinFn::Constant { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BuiltinFn::Exp { rate } => rate.is_finite(),
            BuiltinFn::Constant { value } => value.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ImbedError::InvalidInput(
                "kernel factor parameters must be finite".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinKernel {
    /// `K(x, y) = x y`
    ProductXy,
    /// `K(x, y) = sin(n pi x) sin(n pi y)`
    SineProduct { n: u32 },
    /// `K(x, y) = exp(-c |x - y|)`
    ExponentialAbsdiff { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Builtin(BuiltinKernel),
    /// `K(x, y) = sum_i u_i(x) v_i(y)`
    Separable {
        factors: Vec<(BuiltinFn, BuiltinFn)>,
    },
    /// Samples on a rectangular grid, bilinearly interpolated. First-order
    /// accurate only.
    Tabulated {
        x: Vec<f64>,
        y: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// A kernel together with its domain `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub domain: (f64, f64),
}

impl KernelSpec {
    pub fn new(kind: KernelKind, domain: (f64, f64)) -> Result<Self> {
        let spec = Self { kind, domain };
        spec.validate()?;
        Ok(spec)
    }

    pub fn product_xy(a: f64, b: f64) -> Result<Self> {
        Self::new(KernelKind::Builtin(BuiltinKernel::ProductXy), (a, b))
    }

    pub fn sine_product(n: u32, a: f64, b: f64) -> Result<Self> {
        Self::new(
            KernelKind::Builtin(BuiltinKernel::SineProduct { n }),
            (a, b),
        )
    }

    pub fn exponential_absdiff(c: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(
            KernelKind::Builtin(BuiltinKernel::ExponentialAbsdiff { c }),
            (a, b),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.domain;
        if a >= b || !a.is_finite() || !b.is_finite() {
            return Err(ImbedError::InvalidInput(format!(
                "kernel domain must satisfy a < b, got [{a}, {b}]"
            )));
        }
        match &self.kind {
            KernelKind::Builtin(BuiltinKernel::ExponentialAbsdiff { c }) => {
                if !c.is_finite() {
                    return Err(ImbedError::InvalidInput(
                        "kernel parameter must be finite".into(),
                    ));
                }
            }
            KernelKind::Builtin(_) => {}
            KernelKind::Separable { factors } => {
                if factors.is_empty() {
                    return Err(ImbedError::InvalidInput(
                        "separable kernel needs at least one factor pair".into(),
                    ));
                }
                for (u, v) in factors {
                    u.validate()?;
                    v.validate()?;
                }
            }
            KernelKind::Tabulated { x, y, values } => {
                if x.len() < 2 || y.len() < 2 {
                    return Err(ImbedError::InvalidInput(
                        "tabulated kernel needs at least a 2x2 grid".into(),
                    ));
                }
                if !x.windows(2).all(|w| w[0] < w[1]) || !y.windows(2).all(|w| w[0] < w[1]) {
                    return Err(ImbedError::InvalidInput(
                        "tabulated grid coordinates must be strictly increasing".into(),
                    ));
                }
                if values.len() != x.len() || values.iter().any(|row| row.len() != y.len()) {
                    return Err(ImbedError::InvalidInput(
                        "tabulated values must form an |x| by |y| grid".into(),
                    ));
                }
                if values.iter().any(|row| row.iter().any(|v| !v.is_finite())) {
                    return Err(ImbedError::InvalidInput(
                        "tabulated values must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            KernelKind::Builtin(BuiltinKernel::ProductXy) => x * y,
            KernelKind::Builtin(BuiltinKernel::SineProduct { n }) => {
                let w = *n as f64 * std::f64::consts::PI;
                (w * x).sin() * (w * y).sin()
            }
            KernelKind::Builtin(BuiltinKernel::ExponentialAbsdiff { c }) => {
                (-c * (x - y).abs()).exp()
            }
            KernelKind::Separable { factors } => {
                factors.iter().map(|(u, v)| u.eval(x) * v.eval(y)).sum()
            }
            KernelKind::Tabulated {
                x: gx,
                y: gy,
                values,
            } => bilinear(gx, gy, values, x, y),
        }
    }

    /// Loads a tabulated kernel from CSV: header row carries the y-nodes
    /// (first cell ignored), each following row starts with its x-node.
    pub fn tabulated_from_csv(text: &str, domain: (f64, f64)) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ImbedError::InvalidInput("empty tabulated kernel CSV".into()))?;
        let y: Vec<f64> = header
            .split(',')
            .skip(1)
            .map(parse_cell)
            .collect::<Result<_>>()?;
        let mut x = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let mut cells = line.split(',');
            let x_cell = cells
                .next()
                .ok_or_else(|| ImbedError::InvalidInput("short CSV row".into()))?;
            x.push(parse_cell(x_cell)?);
            let row: Vec<f64> = cells.map(parse_cell).collect::<Result<_>>()?;
            values.push(row);
        }
        Self::new(KernelKind::Tabulated { x, y, values }, domain)
    }
}

fn parse_cell(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| ImbedError::InvalidInput(format!("bad CSV number {s:?}: {e}")))
}

fn bilinear(gx: &[f64], gy: &[f64], values: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let i = clamp_interval(gx, x);
    let j = clamp_interval(gy, y);
    let tx = ((x - gx[i]) / (gx[i + 1] - gx[i])).clamp(0.0, 1.0);
    let ty = ((y - gy[j]) / (gy[j + 1] - gy[j])).clamp(0.0, 1.0);
    let v00 = values[i][j];
    let v10 = values[i + 1][j];
    let v01 = values[i][j + 1];
    let v11 = values[i + 1][j + 1];
    v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
}

/// Index of the grid interval containing `x`, clamped to the table range.
fn clamp_interval(g: &[f64], x: f64) -> usize {
    match g.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(g.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(g.len() - 2),
    }
}
