//! Run configuration: one JSON document per run.

use num_complex::Complex64;
use serde::Deserialize;

use imbed_core::{
    BuiltinFn, ImbedError, IntegratorConfig, KernelSpec, LambdaPath, OperatorDump, OperatorFamily,
    QuadratureGrid, QuadratureRule, Weighting,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Scenario {
    Scan,
    Solve,
    Eigs,
    Hammerstein,
    Selftest,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rule: QuadratureRule,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedCsvSpec {
    pub path: String,
    pub domain: (f64, f64),
}

/// What the operator family acts on: a kernel discretized over a grid, or an
/// explicit matrix `A` giving the linear family `f(lambda) = lambda A`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kernel: Option<KernelSpec>,
    pub tabulated_csv: Option<TabulatedCsvSpec>,
    pub grid: Option<GridSpec>,
    pub weighting: Option<Weighting>,
    pub matrix: Option<OperatorDump>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    /// `F(y, psi) = psi`
    Identity,
    /// `F(y, psi) = linear * psi + cubic * psi^3`
    Cubic { linear: f64, cubic: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub direction: f64,
    pub amplitude: f64,
    pub lambda_offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammersteinSpec {
    pub nonlinearity: NonlinearitySpec,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub step: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton_iters")]
    pub max_newton_iters: usize,
    #[serde(default = "default_bifurcation_tol")]
    pub bifurcation_tol: f64,
    pub psi0: Option<BuiltinFn>,
    /// Multiplier on the sampled `psi0`, for starting on a branch whose
    /// amplitude the named functions cannot express.
    #[serde(default = "default_psi0_scale")]
    pub psi0_scale: f64,
    pub switch: Option<SwitchSpec>,
}

fn default_psi0_scale() -> f64 {
    1.0
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_max_newton_iters() -> usize {
    25
}
fn default_bifurcation_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub prefix: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub problem: Option<ProblemSpec>,
    pub path: Option<Vec<[f64; 2]>>,
    pub lambda: Option<[f64; 2]>,
    pub phi: Option<BuiltinFn>,
    pub refine_tol: Option<f64>,
    pub integrator: Option<IntegratorConfig>,
    pub hammerstein: Option<HammersteinSpec>,
    pub output: Option<OutputSpec>,
    pub seed: Option<u64>,
    pub cases: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        let cfg = self.integrator.unwrap_or_default();
        cfg.validate()
            .map_err(|e| CliError::Config(format!("bad integrator config: {e}")))?;
        Ok(cfg)
    }

    pub fn lambda_path(&self) -> Result<LambdaPath, CliError> {
        let pts = self
            .path
            .as_ref()
            .ok_or_else(|| CliError::Config("scenario requires a `path`".into()))?;
        let waypoints: Vec<Complex64> =
            pts.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        LambdaPath::new(waypoints).map_err(|e| CliError::Config(format!("bad path: {e}")))
    }
}

/// A problem resolved into a family, plus the grid when one exists (kernel
/// problems only).
pub struct ResolvedProblem {
    pub family: OperatorFamily,
    pub kernel: Option<KernelSpec>,
    pub grid: Option<QuadratureGrid>,
}

impl ProblemSpec {
    pub fn resolve(&self) -> Result<ResolvedProblem, CliError> {
        let kernel = match (&self.kernel, &self.tabulated_csv) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either `kernel` or `tabulated_csv`, not both".into(),
                ))
            }
            (Some(k), None) => Some(k.clone()),
            (None, Some(tab)) => {
                let text = std::fs::read_to_string(&tab.path)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", tab.path)))?;
                Some(
                    KernelSpec::tabulated_from_csv(&text, tab.domain)
                        .map_err(|e| CliError::Config(format!("bad tabulated kernel: {e}")))?,
                )
            }
            (None, None) => None,
        };

        match (kernel, &self.matrix) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either a kernel or a matrix problem, not both".into(),
            )),
            (Some(kernel), None) => {
                let grid_spec = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| CliError::Config("kernel problems need a `grid`".into()))?;
                let (a, b) = kernel.domain;
                let grid = QuadratureGrid::new(grid_spec.rule, grid_spec.n, a, b)
                    .map_err(CliError::engine)?;
                let weighting = self.weighting.unwrap_or(Weighting::OneSided);
                let family = imbed_core::discretize_with(&kernel, &grid, weighting)
                    .map_err(CliError::engine)?;
                Ok(ResolvedProblem {
                    family,
                    kernel: Some(kernel),
                    grid: Some(grid),
                })
            }
            (None, Some(dump)) => {
                let a = imbed_core::DiscreteOperator::from_dump(dump)
                    .map_err(|e| CliError::Config(format!("bad matrix: {e}")))?;
                Ok(ResolvedProblem {
                    family: OperatorFamily::scaled(a),
                    kernel: None,
                    grid: None,
                })
            }
            (None, None) => Err(CliError::Config(
                "problem needs a `kernel` (with `grid`) or a `matrix`".into(),
            )),
        }
    }
}

impl NonlinearitySpec {
    pub fn build(
        &self,
        kernel: KernelSpec,
        grid: QuadratureGrid,
    ) -> Result<imbed_core::NonlinearProblem, ImbedError> {
        match *self {
            NonlinearitySpec::Identity => imbed_core::NonlinearProblem::new(
                kernel,
                grid,
                |_y, p| p,
                |_y, _p| Complex64::new(1.0, 0.0),
            ),
            NonlinearitySpec::Cubic { linear, cubic } => {
                let (cl, cc) = (Complex64::new(linear, 0.0), Complex64::new(cubic, 0.0));
                imbed_core::NonlinearProblem::new(
                    kernel,
                    grid,
                    move |_y, p| cl * p + cc * p * p * p,
                    move |_y, p| cl + Complex64::new(3.0, 0.0) * cc * p * p,
                )
            }
        }
    }
}
