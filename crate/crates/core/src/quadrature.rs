//! Quadrature grids for the Nystrom discretization.

use serde::{Deserialize, Serialize};

use crate::error::{ImbedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    GaussLegendre,
    Trapezoid,
}

/// Nodes and positive weights on an interval `[a, b]`, with
/// `sum(weights) = b - a`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rule: QuadratureRule,
    a: f64,
    b: f64,
}

impl QuadratureGrid {
    pub fn new(rule: QuadratureRule, n: usize, a: f64, b: f64) -> Result<Self> {
        match rule {
            QuadratureRule::GaussLegendre => Self::gauss_legendre(n, a, b),
            QuadratureRule::Trapezoid => Self::trapezoid(n, a, b),
        }
    }

    fn check_domain(a: f64, b: f64) -> Result<()> {
        if a >= b || !a.is_finite() || !b.is_finite() {
            return Err(ImbedError::InvalidInput(format!(
                "domain must satisfy a < b, got [{a}, {b}]"
            )));
        }
        Ok(())
    }

    /// Gauss-Legendre rule with `n` nodes mapped to `[a, b]`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        Self::check_domain(a, b)?;
        if n < 1 {
            return Err(ImbedError::InvalidInput("need at least 1 node".into()));
        }
        let (x, w) = legendre_nodes_weights(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Ok(Self {
            nodes: x.iter().map(|&t| mid + half * t).collect(),
            weights: w.iter().map(|&v| half * v).collect(),
            rule: QuadratureRule::GaussLegendre,
            a,
            b,
        })
    }

    /// Composite trapezoid rule with `n >= 2` nodes including the endpoints.
    pub fn trapezoid(n: usize, a: f64, b: f64) -> Result<Self> {
        Self::check_domain(a, b)?;
        if n < 2 {
            return Err(ImbedError::InvalidInput(
                "trapezoid rule needs at least 2 nodes".into(),
            ));
        }
        let h = (b - a) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
        let weights: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Ok(Self {
            nodes,
            weights,
            rule: QuadratureRule::Trapezoid,
            a,
            b,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Quadrature sum of `f` over the grid.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre polynomial, with the usual cosine initial guesses.
fn legendre_nodes_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = legendre_eval(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // enforce exact symmetry of the rule
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x, by the three-term
/// recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
