//! Command-line front end: run configured simulations to CSV, or check the
//! closed-form controller against the message-passing route on the
//! configured system.
//!
//! Exit codes: 0 success, 1 failed `check`, 2 invalid configuration
//! (message names the offending field), 3 simulation divergence.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actinf_core::control::{actinf_gain, actinf_schedule};
use actinf_core::ffg::SliceSpec;
use actinf_core::simulation::{simulate, SimSettings};
use actinf_core::{Error, Gaussian};
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use config::{Experiment, Overrides};

/// Largest relative deviation between the two controller routes that
/// `check` accepts.
const CHECK_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "actinf", version, about = "Goal-conditioned control of linear Gaussian models, with LQG and open-loop baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured run and write CSV traces plus summary.csv
    Run {
        config: PathBuf,
        /// Disable process and observation noise, overriding the config
        #[arg(long)]
        noise_off: bool,
        /// Replace the configured seed list with this single seed
        #[arg(long)]
        seed: Option<u64>,
        /// Write outputs here instead of the configured directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config and print the deviation between the closed-form
    /// gains and the message-passing oracle on the configured system
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, noise_off, seed, out } => {
            let overrides = Overrides { noise_off, seed, out };
            run(&config, &overrides)
        }
        Command::Check { config } => check(&config),
    }
}

fn load_or_exit(path: &Path, overrides: &Overrides) -> Result<Experiment, ExitCode> {
    config::load(path, overrides).map_err(|msg| {
        eprintln!("config error: {msg}");
        ExitCode::from(2)
    })
}

fn run(path: &Path, overrides: &Overrides) -> ExitCode {
    let experiment = match load_or_exit(path, overrides) {
        Ok(e) => e,
        Err(code) => return code,
    };
    let plans = match experiment.runs() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = fs::create_dir_all(&experiment.out_dir) {
        eprintln!("run.out_dir: cannot create {}: {e}", experiment.out_dir.display());
        return ExitCode::from(2);
    }

    let dims = experiment.model.dims();
    let mut summary = String::from(output::SUMMARY_HEADER);
    summary.push('\n');
    for plan in &plans {
        let settings = SimSettings {
            horizon: experiment.horizon,
            steps: experiment.steps,
            seed: plan.seed,
            noise_on: experiment.noise_on,
            x0: experiment.x0.clone(),
        };
        let trace = match simulate(&experiment.model, &plan.controller, &plan.fe_goal, &settings) {
            Ok(trace) => trace,
            Err(Error::Diverged { t, .. }) => {
                eprintln!(
                    "{} (lambda {}, seed {}): state diverged at step {t}",
                    plan.controller_label, plan.lambda_label, plan.seed
                );
                return ExitCode::from(3);
            }
            Err(e) => {
                eprintln!("{} (lambda {}, seed {}): {e}", plan.controller_label, plan.lambda_label, plan.seed);
                return ExitCode::from(2);
            }
        };
        let file = experiment.out_dir.join(plan.trace_filename());
        if let Err(e) = fs::write(&file, output::trace_csv(&trace, dims)) {
            eprintln!("cannot write {}: {e}", file.display());
            return ExitCode::from(2);
        }
        println!("wrote {}", file.display());
        summary.push_str(&output::summary_row(plan, &trace));
    }
    let file = experiment.out_dir.join("summary.csv");
    if let Err(e) = fs::write(&file, summary) {
        eprintln!("cannot write {}: {e}", file.display());
        return ExitCode::from(2);
    }
    println!("wrote {}", file.display());
    ExitCode::SUCCESS
}

fn rel_gap(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).amax() / (1.0 + want.amax())
}

fn rel_gap_vec(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).amax() / (1.0 + want.amax())
}

fn check(path: &Path) -> ExitCode {
    let experiment = match load_or_exit(path, &Overrides::default()) {
        Ok(e) => e,
        Err(code) => return code,
    };
    let model = &experiment.model;
    let estimate = match Gaussian::from_mean_precision(
        experiment.x0.clone(),
        DMatrix::identity(model.dims().n_x, model.dims().n_x),
    ) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("x0: {e}");
            return ExitCode::from(2);
        }
    };

    let mut worst: f64 = 0.0;
    for &lambda in &experiment.lambdas {
        let outcome = (|| -> Result<(f64, f64), Error> {
            let goal = experiment.base_goal.with_lambda(lambda)?;
            let schedule = actinf_schedule(model, &goal, experiment.horizon)?;
            let spec = SliceSpec::new(model, &goal)?;

            let mut messages = vec![goal.lambda_q()];
            for _ in 1..experiment.horizon {
                messages.insert(0, spec.backward_slice(&messages[0])?.p_prev);
            }
            let schedule_gap = schedule
                .p_seq()
                .iter()
                .zip(&messages)
                .map(|(closed, message)| rel_gap(message, closed))
                .fold(0.0, f64::max);

            let (_, u_closed) = actinf_gain(&schedule, &estimate, model, &goal)?;
            let slice = spec.control_slice(&estimate, schedule.p_next())?;
            Ok((schedule_gap, rel_gap_vec(&slice.u_mode, &u_closed)))
        })();
        match outcome {
            Ok((schedule_gap, control_gap)) => {
                println!("lambda {lambda}: precision-to-go deviation {schedule_gap:.3e}, control deviation {control_gap:.3e}");
                worst = worst.max(schedule_gap).max(control_gap);
            }
            Err(e) => {
                eprintln!("lambda {lambda}: {e}");
                return ExitCode::from(2);
            }
        }
    }
    if worst < CHECK_TOL {
        println!("check passed: max deviation {worst:.3e} < {CHECK_TOL:e}");
        ExitCode::SUCCESS
    } else {
        eprintln!("check failed: max deviation {worst:.3e} >= {CHECK_TOL:e}");
        ExitCode::from(1)
    }
}
