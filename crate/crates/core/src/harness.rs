//! End-to-end experiment runs and their artifacts.
//!
//! An output directory receives `trajectory.csv`, `summary.json` and, when the
//! reference mode is `oracle`, `oracle.json`. Nothing is written until the
//! config has been fully resolved, and artifacts carry no timestamps, so the
//! same config always yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_exponential_rate, RateFit, RunRecord, DEFAULT_RATE_WINDOW};
use crate::dynamics::{run, Scheme};
use crate::experiment::{ExperimentConfig, ReferenceMode};
use crate::oracle::{solve_centralized, OracleSolution, DEFAULT_TOL};
use crate::{Error, Result};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ORACLE_FILE: &str = "oracle.json";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// The run finished without meeting the stopping rule, or a diagnostic failed.
    pub const NOT_CONVERGED: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CONFIG_OR_IO: i32 = 4;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => exit::INFEASIBLE,
        Error::Numerical { .. } => exit::NUMERICAL,
        Error::Diagnostic(_) => exit::NOT_CONVERGED,
        Error::Config(_) | Error::Domain(_) | Error::Generation(_) | Error::Io(_) | Error::Json(_) => {
            exit::CONFIG_OR_IO
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Slope of the log-linear fit of `V`; null without a reference.
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub final_consensus: f64,
    pub final_residual: f64,
    pub n: usize,
    pub m: usize,
    pub scheme: Scheme,
    pub converged: bool,
    pub steps_taken: usize,
    pub records: usize,
    /// Common Lipschitz bound `c`.
    pub lipschitz: f64,
    /// Smallest strong-convexity modulus `β`.
    pub beta: f64,
    /// Whether `K > n·c` holds.
    pub certified: bool,
    pub final_value: f64,
    pub f_star: Option<f64>,
    /// `max_i ‖x_i − x*‖` at the end of the run.
    pub max_deviation: Option<f64>,
    /// `|L(x_end) − f*| / (1 + |f*|)`.
    pub relative_gap: Option<f64>,
    pub rate_window: Option<[usize; 2]>,
    pub max_inner_iterations: usize,
    pub inner_failures: usize,
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub record: RunRecord,
    pub oracle: Option<OracleSolution>,
    pub output: Option<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.converged {
            exit::OK
        } else {
            exit::NOT_CONVERGED
        }
    }
}

/// Runs the experiment without touching the file system.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let inst = cfg.build()?;
    let p = &inst.problem;
    let oracle = match cfg.reference {
        ReferenceMode::Oracle => Some(solve_centralized(p.objectives(), p.sets(), DEFAULT_TOL)?),
        ReferenceMode::None => None,
    };
    let x_star = oracle.as_ref().map(OracleSolution::x_star);
    let record = run(p, &inst.x0, &cfg.integrator, cfg.seed, x_star.as_ref())?;

    let fit: Option<RateFit> = match &record.v_values {
        Some(_) => fit_exponential_rate(&record, DEFAULT_RATE_WINDOW).ok(),
        None => None,
    };
    let finals = record.final_states();
    let final_value = p.penalized_value(finals)?;
    let f_star = oracle.as_ref().map(|o| o.f_star);
    let max_deviation = x_star.as_ref().map(|x| finals.iter().map(|xi| (xi - x).norm()).fold(0.0, f64::max));
    let mut provenance = if cfg.provenance.is_null() { cfg.materialize()?.provenance } else { cfg.provenance.clone() };
    if provenance.is_null() {
        provenance = serde_json::json!({});
    }
    let summary = Summary {
        k: p.penalty(),
        alpha: cfg.integrator.alpha,
        seed: cfg.seed,
        slope: fit.map(|f| f.slope),
        r_squared: fit.map(|f| f.r_squared),
        final_consensus: record.final_consensus(),
        final_residual: record.final_residual(),
        n: p.n(),
        m: p.dim(),
        scheme: cfg.integrator.scheme,
        converged: record.converged,
        steps_taken: record.steps_taken,
        records: record.len(),
        lipschitz: p.lipschitz(),
        beta: p.beta(),
        certified: p.is_certified(),
        final_value,
        f_star,
        max_deviation,
        relative_gap: f_star.map(|f| (final_value - f).abs() / (1.0 + f.abs())),
        rate_window: fit.map(|f| [f.window.0, f.window.1]),
        max_inner_iterations: record.max_inner_iterations,
        inner_failures: record.inner_failures,
        provenance,
    };
    Ok(Outcome { summary, record, oracle, output: None })
}

/// Runs the experiment and writes its artifacts to `out` (or the config's
/// output directory).
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    let mut outcome = execute(cfg)?;
    write_artifacts(&dir, &outcome)?;
    outcome.output = Some(dir);
    Ok(outcome)
}

pub fn write_artifacts(dir: &Path, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    outcome.record.write_csv(&mut csv)?;
    fs::write(dir.join(TRAJECTORY_FILE), csv)?;
    fs::write(dir.join(SUMMARY_FILE), to_json_line(&outcome.summary)?)?;
    if let Some(o) = &outcome.oracle {
        fs::write(dir.join(ORACLE_FILE), to_json_line(o)?)?;
    }
    Ok(())
}

/// Solves the config's centralized problem and writes `oracle.json`.
pub fn run_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<OracleSolution> {
    let inst = cfg.build()?;
    let sol = solve_centralized(inst.problem.objectives(), inst.problem.sets(), DEFAULT_TOL)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(ORACLE_FILE), to_json_line(&sol)?)?;
    Ok(sol)
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
