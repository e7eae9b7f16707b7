//! Experiment configuration: TOML schema, validation, and expansion into
//! concrete runs.
//!
//! Matrices are row-major nested lists and noise/prior matrices are
//! precisions, not covariances. Validation error messages start with the
//! config field they refer to.

use std::path::{Path, PathBuf};

use actinf_core::linalg::{check_psd, check_symmetric, cholesky};
use actinf_core::model::{GoalPrior, LinearGaussianModel};
use actinf_core::simulation::Controller;
use actinf_core::Gaussian;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    w_w: Vec<Vec<f64>>,
    w_v: Vec<Vec<f64>>,
    prior_mean: Vec<f64>,
    prior_precision: Vec<Vec<f64>>,
    x0: Vec<f64>,
    goal: GoalSection,
    run: RunSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalSection {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    controllers: Vec<String>,
    horizon: usize,
    steps: usize,
    seeds: Vec<u64>,
    noise_on: bool,
    rng: String,
    out_dir: String,
}

/// Command-line overrides applied before validation.
#[derive(Default)]
pub struct Overrides {
    pub noise_off: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Lqg,
    ActInf,
    None,
}

/// A fully validated experiment.
pub struct Experiment {
    pub model: LinearGaussianModel,
    /// Goal prior at unit strength; per-run strengths come from `lambdas`.
    pub base_goal: GoalPrior,
    pub lambdas: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    pub horizon: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub noise_on: bool,
    pub x0: DVector<f64>,
    pub out_dir: PathBuf,
}

/// One simulation to perform: controller, evaluation goal, seed, and the
/// labels its output files carry.
pub struct RunPlan {
    pub controller: Controller,
    pub fe_goal: GoalPrior,
    pub controller_label: &'static str,
    pub lambda_label: String,
    pub seed: u64,
}

impl RunPlan {
    pub fn trace_filename(&self) -> String {
        format!("trace_{}_{}_{}.csv", self.controller_label, self.lambda_label, self.seed)
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(format!("{field}: must have at least one row and one column"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(format!("{field}: rows have unequal lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(format!("{field}: entries must be finite"));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &rows.concat()))
}

fn vector(field: &str, entries: &[f64], len: usize) -> Result<DVector<f64>, String> {
    if entries.len() != len {
        return Err(format!("{field}: expected {len} entries, found {}", entries.len()));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(format!("{field}: entries must be finite"));
    }
    Ok(DVector::from_column_slice(entries))
}

fn square(field: &str, m: DMatrix<f64>, n: usize) -> Result<DMatrix<f64>, String> {
    if m.nrows() != n || m.ncols() != n {
        return Err(format!("{field}: expected {n}x{n}, found {}x{}", m.nrows(), m.ncols()));
    }
    Ok(m)
}

fn sym_pd(field: &str, m: &DMatrix<f64>) -> Result<(), String> {
    check_symmetric(m, "config").map_err(|_| format!("{field}: not symmetric"))?;
    cholesky(m, "config").map_err(|_| format!("{field}: not positive definite"))?;
    Ok(())
}

fn sym_psd(field: &str, m: &DMatrix<f64>) -> Result<(), String> {
    check_symmetric(m, "config").map_err(|_| format!("{field}: not symmetric"))?;
    check_psd(m, "config").map_err(|_| format!("{field}: not positive semidefinite"))?;
    Ok(())
}

/// Parse, apply overrides, and validate a config file. Error messages name
/// the offending field.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut file: ConfigFile = toml::from_str(&text).map_err(|e| e.to_string())?;

    if overrides.noise_off {
        file.run.noise_on = false;
    }
    if let Some(seed) = overrides.seed {
        file.run.seeds = vec![seed];
    }
    if let Some(out) = &overrides.out {
        file.run.out_dir = out.to_string_lossy().into_owned();
    }

    let a = matrix("a", &file.a)?;
    let n_x = a.nrows();
    let a = square("a", a, n_x)?;
    let b = matrix("b", &file.b)?;
    if b.nrows() != n_x {
        return Err(format!("b: expected {n_x} rows, found {}", b.nrows()));
    }
    let n_u = b.ncols();
    let c = matrix("c", &file.c)?;
    if c.ncols() != n_x {
        return Err(format!("c: expected {n_x} columns, found {}", c.ncols()));
    }
    let n_y = c.nrows();
    let w_w = square("w_w", matrix("w_w", &file.w_w)?, n_x)?;
    sym_pd("w_w", &w_w)?;
    let w_v = square("w_v", matrix("w_v", &file.w_v)?, n_y)?;
    sym_pd("w_v", &w_v)?;
    let prior_mean = vector("prior_mean", &file.prior_mean, n_x)?;
    let prior_precision = square("prior_precision", matrix("prior_precision", &file.prior_precision)?, n_x)?;
    sym_pd("prior_precision", &prior_precision)?;
    let x0 = vector("x0", &file.x0, n_x)?;

    let q = square("goal.q", matrix("goal.q", &file.goal.q)?, n_x)?;
    sym_psd("goal.q", &q)?;
    let r = square("goal.r", matrix("goal.r", &file.goal.r)?, n_u)?;
    sym_pd("goal.r", &r)?;
    if file.goal.lambdas.is_empty() {
        return Err("goal.lambdas: must not be empty".into());
    }
    if file.goal.lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err("goal.lambdas: lambda must be > 0".into());
    }

    let mut controllers = Vec::new();
    for name in &file.run.controllers {
        let kind = match name.as_str() {
            "lqg" => ControllerKind::Lqg,
            "actinf" => ControllerKind::ActInf,
            "none" => ControllerKind::None,
            other => {
                return Err(format!("run.controllers: unknown controller `{other}` (expected lqg, actinf, or none)"));
            }
        };
        if controllers.contains(&kind) {
            return Err(format!("run.controllers: duplicate entry `{name}`"));
        }
        controllers.push(kind);
    }
    if controllers.is_empty() {
        return Err("run.controllers: must not be empty".into());
    }
    if file.run.horizon == 0 {
        return Err("run.horizon: must be at least 1".into());
    }
    if file.run.steps == 0 {
        return Err("run.steps: must be at least 1".into());
    }
    if file.run.seeds.is_empty() {
        return Err("run.seeds: must not be empty".into());
    }
    if file.run.rng != "chacha12" {
        return Err(format!("run.rng: only \"chacha12\" is supported, found \"{}\"", file.run.rng));
    }
    if file.run.out_dir.is_empty() {
        return Err("run.out_dir: must not be empty".into());
    }

    let prior = Gaussian::from_mean_precision(prior_mean, prior_precision)
        .map_err(|e| format!("prior_precision: {e}"))?;
    let model = LinearGaussianModel::new(a, b, c, w_w, w_v, prior).map_err(|e| e.to_string())?;
    let base_goal = GoalPrior::new(q, r, 1.0).map_err(|e| e.to_string())?;
    model.check_goal(&base_goal).map_err(|e| format!("goal: {e}"))?;

    Ok(Experiment {
        model,
        base_goal,
        lambdas: file.goal.lambdas,
        controllers,
        horizon: file.run.horizon,
        steps: file.run.steps,
        seeds: file.run.seeds,
        noise_on: file.run.noise_on,
        x0,
        out_dir: PathBuf::from(file.run.out_dir),
    })
}

impl Experiment {
    /// Concrete runs in deterministic order: controllers as configured, the
    /// goal-conditioned one once per (lambda, seed), the others once per
    /// seed. Runs without a lambda of their own are labeled "na" and
    /// evaluated at unit goal strength.
    pub fn runs(&self) -> Result<Vec<RunPlan>, String> {
        let mut plans = Vec::new();
        for kind in &self.controllers {
            match kind {
                ControllerKind::ActInf => {
                    for &lambda in &self.lambdas {
                        let goal = self.base_goal.with_lambda(lambda).map_err(|e| e.to_string())?;
                        for &seed in &self.seeds {
                            plans.push(RunPlan {
                                controller: Controller::ActInf(goal.clone()),
                                fe_goal: goal.clone(),
                                controller_label: "actinf",
                                lambda_label: lambda.to_string(),
                                seed,
                            });
                        }
                    }
                }
                ControllerKind::Lqg => {
                    for &seed in &self.seeds {
                        plans.push(RunPlan {
                            controller: Controller::Lqg(self.base_goal.clone()),
                            fe_goal: self.base_goal.clone(),
                            controller_label: "lqg",
                            lambda_label: "na".into(),
                            seed,
                        });
                    }
                }
                ControllerKind::None => {
                    for &seed in &self.seeds {
                        plans.push(RunPlan {
                            controller: Controller::Uncontrolled,
                            fe_goal: self.base_goal.clone(),
                            controller_label: "none",
                            lambda_label: "na".into(),
                            seed,
                        });
                    }
                }
            }
        }
        Ok(plans)
    }
}
