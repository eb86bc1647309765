//! Scenario execution and output writing.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use num_complex::Complex64;
use serde_json::json;

use imbed_core::export;
use imbed_core::{
    initialize_at_robust, integrate_path, ContinuationConfig, ImbedError, TrajectoryPoint,
};

use crate::config::{OutputFormat, OutputSpec, RunConfig, Scenario};
use crate::CliError;

pub struct Outputs {
    prefix: PathBuf,
    csv: bool,
    json: bool,
}

impl Outputs {
    pub fn new(spec: Option<&OutputSpec>, override_prefix: Option<&str>) -> Self {
        let prefix = override_prefix
            .map(str::to_owned)
            .or_else(|| spec.map(|s| s.prefix.clone()))
            .unwrap_or_else(|| "imbed_out".into());
        let formats = spec
            .map(|s| s.formats.clone())
            .unwrap_or_else(|| vec![OutputFormat::Csv]);
        Self {
            prefix: PathBuf::from(prefix),
            csv: formats.contains(&OutputFormat::Csv),
            json: formats.contains(&OutputFormat::Json),
        }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        let mut name = self
            .prefix
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "imbed_out".into());
        name.push('_');
        name.push_str(suffix);
        match self.prefix.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.join(name),
            _ => PathBuf::from(name),
        }
    }

    fn write_bytes(&self, suffix: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(suffix);
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)
                    .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
            }
        }
        let mut f = fs::File::create(&path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }

    fn maybe_csv(
        &self,
        suffix: &str,
        render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        if self.csv {
            let mut buf = Vec::new();
            render(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            let path = self.write_bytes(suffix, &buf)?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }

    fn maybe_json(&self, suffix: &str, value: &serde_json::Value) -> Result<(), CliError> {
        if self.json {
            let text =
                serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
            let path = self.write_bytes(suffix, text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn complex_pair(z: Complex64) -> serde_json::Value {
    json!([z.re, z.im])
}

pub fn run_scenario(scenario: Scenario, config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    match scenario {
        Scenario::Scan => run_scan(config, out),
        Scenario::Solve => run_solve(config, out),
        Scenario::Eigs => run_eigs(config, out),
        Scenario::Hammerstein => run_hammerstein(config, out),
        Scenario::Selftest => run_selftest(config, out),
    }
}

fn require_problem(config: &RunConfig) -> Result<crate::config::ResolvedProblem, CliError> {
    config
        .problem
        .as_ref()
        .ok_or_else(|| CliError::Config("scenario requires a `problem`".into()))?
        .resolve()
}

fn run_scan(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = require_problem(config)?;
    let path = config.lambda_path()?;
    let cfg = config.integrator()?;
    let init =
        initialize_at_robust(&problem.family, path.first(), &cfg).map_err(CliError::engine)?;
    let traj = integrate_path(&problem.family, &path, &init, &cfg).map_err(CliError::engine)?;

    out.maybe_csv("trajectory.csv", |w| export::write_trajectory_csv(w, &traj))?;
    let waypoint_states: Vec<serde_json::Value> = path
        .waypoints()
        .iter()
        .filter_map(|&wp| {
            traj.iter()
                .min_by(|a, b| {
                    (a.state.lambda - wp)
                        .norm()
                        .total_cmp(&(b.state.lambda - wp).norm())
                })
                .filter(|p| (p.state.lambda - wp).norm() <= 1e-12 * (1.0 + wp.norm()))
                .map(|p: &TrajectoryPoint| {
                    json!({
                        "lambda": complex_pair(p.state.lambda),
                        "d": complex_pair(p.state.det),
                        "residual": p.residual,
                        "operator": p.state.adjugate.to_dump(),
                    })
                })
        })
        .collect();
    out.maybe_json(
        "trajectory.json",
        &json!({
            "samples": traj.len(),
            "final_lambda": complex_pair(traj.last().unwrap().state.lambda),
            "final_d": complex_pair(traj.last().unwrap().state.det),
            "waypoints": waypoint_states,
        }),
    )?;
    Ok(())
}

fn run_solve(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = require_problem(config)?;
    let (kernel, grid) = match (problem.kernel, problem.grid) {
        (Some(k), Some(g)) => (k, g),
        _ => {
            return Err(CliError::Config(
                "solve scenario requires a kernel problem".into(),
            ))
        }
    };
    let [re, im] = config
        .lambda
        .ok_or_else(|| CliError::Config("solve scenario requires `lambda`".into()))?;
    let lambda = Complex64::new(re, im);
    let phi_fn = config
        .phi
        .clone()
        .ok_or_else(|| CliError::Config("solve scenario requires `phi`".into()))?;
    let cfg = config.integrator()?;

    let phi: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&x| Complex64::new(phi_fn.eval(x), 0.0))
        .collect();
    let psi =
        imbed_core::solve_fredholm(&kernel, &grid, lambda, &phi, &cfg).map_err(CliError::engine)?;

    out.maybe_csv("solution.csv", |w| {
        export::write_solution_csv(w, grid.nodes(), &phi, &psi)
    })?;
    out.maybe_json(
        "solution.json",
        &json!({
            "lambda": [re, im],
            "x": grid.nodes(),
            "psi": psi.iter().map(|&z| complex_pair(z)).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn run_eigs(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = require_problem(config)?;
    let path = config.lambda_path()?;
    let cfg = config.integrator()?;
    let refine_tol = config.refine_tol.unwrap_or(1e-9);
    if refine_tol <= 0.0 {
        return Err(CliError::Config("refine_tol must be positive".into()));
    }
    let pairs = imbed_core::find_eigenvalues(&problem.family, &path, &cfg, refine_tol)
        .map_err(CliError::engine)?;

    let rows: Vec<(Complex64, f64)> = pairs
        .iter()
        .map(|p| {
            let d_abs = problem
                .family
                .f(p.lambda)
                .fredholm_det_series(1e-300)
                .value
                .norm();
            (p.lambda, d_abs)
        })
        .collect();
    out.maybe_csv("eigenvalues.csv", |w| {
        export::write_eigenvalues_csv(w, &rows)
    })?;
    out.maybe_json(
        "eigenvectors.json",
        &json!({
            "eigenpairs": pairs
                .iter()
                .map(|p| {
                    json!({
                        "lambda": complex_pair(p.lambda),
                        "vector": p.vector.iter().map(|&z| complex_pair(z)).collect::<Vec<_>>(),
                    })
                })
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn run_hammerstein(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let problem = require_problem(config)?;
    let (kernel, grid) = match (problem.kernel, problem.grid) {
        (Some(k), Some(g)) => (k, g),
        _ => {
            return Err(CliError::Config(
                "hammerstein scenario requires a kernel problem".into(),
            ))
        }
    };
    let spec = config
        .hammerstein
        .as_ref()
        .ok_or_else(|| CliError::Config("hammerstein scenario requires `hammerstein`".into()))?;
    let nodes = grid.nodes().to_vec();
    let nonlinear = spec
        .nonlinearity
        .build(kernel, grid)
        .map_err(CliError::engine)?;
    let cfg = ContinuationConfig {
        newton_tol: spec.newton_tol,
        max_newton_iters: spec.max_newton_iters,
        bifurcation_tol: spec.bifurcation_tol,
        integrator: config.integrator()?,
    };
    let psi0: Vec<Complex64> = match &spec.psi0 {
        Some(f) => nodes
            .iter()
            .map(|&x| Complex64::new(spec.psi0_scale * f.eval(x), 0.0))
            .collect(),
        None => vec![Complex64::new(0.0, 0.0); nodes.len()],
    };

    let run = imbed_core::continue_branch(
        &nonlinear,
        spec.lambda_start,
        spec.lambda_end,
        spec.step,
        &psi0,
        &cfg,
    )
    .map_err(CliError::engine)?;

    let mut states = run.states.clone();
    let mut switched = None;
    if let Some(sw) = &spec.switch {
        let bif = run
            .bifurcations
            .first()
            .ok_or(CliError::Engine(ImbedError::NoBracket))?;
        let at = imbed_core::newton_solve(
            &nonlinear,
            bif.lambda,
            &psi0,
            cfg.newton_tol,
            cfg.max_newton_iters,
            &cfg.integrator,
        )
        .map_err(CliError::engine)?;
        let state = imbed_core::branch_switch(
            &nonlinear,
            &at,
            sw.direction,
            sw.amplitude,
            sw.lambda_offset,
            &cfg,
        )
        .map_err(CliError::engine)?;
        states.push(state.clone());
        switched = Some(state);
    }

    out.maybe_csv("branch.csv", |w| export::write_branch_csv(w, &states))?;
    out.maybe_json(
        "branch.json",
        &json!({
            "bifurcations": run
                .bifurcations
                .iter()
                .map(|b| json!({"lambda": b.lambda, "bracket": [b.bracket.0, b.bracket.1]}))
                .collect::<Vec<_>>(),
            "x": nodes,
            "states": states
                .iter()
                .map(|s| {
                    json!({
                        "lambda": s.lambda,
                        "branch_id": s.branch_id,
                        "d_lin": complex_pair(s.d_lin),
                        "amplitude": s.amplitude(),
                        "newton_iters": s.newton_iters,
                        "psi": s.psi.iter().map(|&z| complex_pair(z)).collect::<Vec<_>>(),
                    })
                })
                .collect::<Vec<_>>(),
            "switched": switched.map(|s| json!({
                "lambda": s.lambda,
                "branch_id": s.branch_id,
                "amplitude": s.amplitude(),
            })),
        }),
    )?;
    Ok(())
}

fn run_selftest(config: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let seed = config.seed.unwrap_or(42);
    let cases = config.cases.unwrap_or(40);
    let records = imbed_core::selftest::run_selftest(seed, cases);
    let failed: Vec<_> = records.iter().filter(|r| !r.pass).collect();

    out.maybe_csv("selftest.csv", |w| export::write_selftest_csv(w, &records))?;
    out.maybe_json(
        "selftest.json",
        &json!({
            "seed": seed,
            "cases": cases,
            "checks": records.len(),
            "failed": failed.len(),
        }),
    )?;
    println!(
        "selftest: seed {seed}, {} checks, {} failed",
        records.len(),
        failed.len()
    );
    if !failed.is_empty() {
        let worst = failed
            .iter()
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
            .unwrap();
        return Err(CliError::Engine(ImbedError::NonConvergence {
            lambda: Complex64::new(0.0, 0.0),
            iters: failed.len(),
            residual: worst.residual,
        }));
    }
    Ok(())
}
