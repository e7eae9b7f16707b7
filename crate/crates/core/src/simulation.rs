//! Closed-loop rollouts with reproducible noise.
//!
//! A rollout starts at a known state `x0` with `u_0 = 0`, then alternates
//! simulating the plant, filtering the new observation and picking the next
//! control. Record `t` holds the true state at time `t`, the observation
//! made there (`None` at `t = 0`, before anything is observed), the control
//! chosen there, the quadratic cost so far and the free energy of the
//! current belief.
//!
//! Noise is drawn from a counter-based generator seeded per run, in a fixed
//! order (process noise first, then observation noise, each step), so a
//! rerun with the same seed reproduces a trace bit for bit. With
//! `noise_on = false` no draws are made at all and the rollout is fully
//! deterministic.
//!
//! Costs are reported against the unscaled weights `Q` and `R` of the
//! evaluation goal, independent of the `lambda` any controller uses, so
//! traces from different controllers are comparable.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::control::{actinf_gain, actinf_schedule, lqg_gain, lqg_schedule, GainSchedule};
use crate::estimation::FilterState;
use crate::freenergy::{step_report, FreeEnergyReport};
use crate::linalg::cholesky;
use crate::model::{GoalPrior, LinearGaussianModel};
use crate::{Error, Result};

const DIVERGENCE_LIMIT: f64 = 1e12;

/// Control law applied during a rollout.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Goal-conditioned feedback from the full belief state.
    ActInf(GoalPrior),
    /// Classical certainty-equivalent LQG feedback.
    Lqg(GoalPrior),
    /// No actuation; the plant runs open loop.
    Uncontrolled,
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::ActInf(_) => "actinf",
            Controller::Lqg(_) => "lqg",
            Controller::Uncontrolled => "none",
        }
    }
}

/// Rollout configuration.
#[derive(Debug, Clone)]
pub struct SimSettings {
    /// Lookahead length used by the controllers and the free energy.
    pub horizon: usize,
    /// Number of plant transitions to simulate.
    pub steps: usize,
    pub seed: u64,
    pub noise_on: bool,
    pub x0: DVector<f64>,
}

/// One row of a rollout.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub x_true: DVector<f64>,
    /// Observation made at `t`; `None` at `t = 0`.
    pub y: Option<DVector<f64>>,
    /// Control chosen at `t` (zero at `t = 0`).
    pub u: DVector<f64>,
    pub inst_cost: f64,
    pub cum_cost: f64,
    pub fe: FreeEnergyReport,
}

/// Complete rollout, one record per time index `0 ..= steps`.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn final_cum_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cum_cost)
    }

    pub fn final_fe_total(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.fe.total)
    }

    /// Largest control magnitude over the whole rollout.
    pub fn max_abs_u(&self) -> f64 {
        self.records.iter().map(|r| r.u.amax()).fold(0.0, f64::max)
    }
}

fn quadratic_cost(x: &DVector<f64>, u: &DVector<f64>, goal: &GoalPrior) -> f64 {
    (x.transpose() * goal.q() * x)[(0, 0)] + (u.transpose() * goal.r() * u)[(0, 0)]
}

enum Feedback {
    ActInf { schedule: GainSchedule, goal: GoalPrior },
    Lqg { schedule: GainSchedule, goal: GoalPrior },
    None,
}

impl Feedback {
    fn prepare(controller: &Controller, model: &LinearGaussianModel, horizon: usize) -> Result<Feedback> {
        Ok(match controller {
            Controller::ActInf(goal) => Feedback::ActInf {
                schedule: actinf_schedule(model, goal, horizon)?,
                goal: goal.clone(),
            },
            Controller::Lqg(goal) => Feedback::Lqg {
                schedule: lqg_schedule(model, goal, horizon)?,
                goal: goal.clone(),
            },
            Controller::Uncontrolled => Feedback::None,
        })
    }

    fn control(&self, filter: &FilterState, model: &LinearGaussianModel) -> Result<DVector<f64>> {
        Ok(match self {
            Feedback::ActInf { schedule, goal } => actinf_gain(schedule, filter.estimate(), model, goal)?.1,
            Feedback::Lqg { schedule, goal } => lqg_gain(schedule, filter.estimate().mean(), model, goal)?.1,
            Feedback::None => DVector::zeros(model.dims().n_u),
        })
    }
}

fn standard_normal_vector(rng: &mut ChaCha12Rng, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Run a closed-loop rollout.
///
/// `fe_goal` is the evaluation goal: its unscaled `Q`/`R` define the logged
/// quadratic cost, and its scaled precisions define the free-energy columns.
/// It may differ from the controller's own goal (an uncontrolled or LQG run
/// still gets a well-defined free energy this way).
pub fn simulate(
    model: &LinearGaussianModel,
    controller: &Controller,
    fe_goal: &GoalPrior,
    settings: &SimSettings,
) -> Result<SimulationTrace> {
    let dims = model.dims();
    if settings.x0.len() != dims.n_x {
        return Err(Error::DimensionMismatch {
            context: "simulate",
            detail: format!("x0 has length {}, state dimension {}", settings.x0.len(), dims.n_x),
        });
    }
    if settings.steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be at least 1".into(),
        });
    }
    model.check_goal(fe_goal)?;

    let feedback = Feedback::prepare(controller, model, settings.horizon)?;
    let process_chol = cholesky(model.process_noise_cov(), "simulate: process noise")?;
    let obs_chol = cholesky(model.obs_noise_cov(), "simulate: observation noise")?;
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);

    let mut filter = FilterState::init(model, model.prior())?;
    let mut x = settings.x0.clone();
    let mut u = DVector::zeros(dims.n_u);
    let mut cum_cost = quadratic_cost(&x, &u, fe_goal);
    let mut records = vec![StepRecord {
        t: 0,
        x_true: x.clone(),
        y: None,
        u: u.clone(),
        inst_cost: cum_cost,
        cum_cost,
        fe: step_report(&filter, model, fe_goal, settings.horizon)?,
    }];

    for t in 1..=settings.steps {
        x = model.a() * &x + model.b() * &u;
        let mut y = model.c() * &x;
        if settings.noise_on {
            x += process_chol.l() * standard_normal_vector(&mut rng, dims.n_x);
            y = model.c() * &x + obs_chol.l() * standard_normal_vector(&mut rng, dims.n_y);
        }
        if !x.iter().all(|v| v.is_finite()) || x.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                t,
                trace: Box::new(SimulationTrace { records }),
            });
        }

        filter = filter.step(model, &u, &y)?;
        u = feedback.control(&filter, model)?;
        if !u.iter().all(|v| v.is_finite()) || u.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                t,
                trace: Box::new(SimulationTrace { records }),
            });
        }

        let inst_cost = quadratic_cost(&x, &u, fe_goal);
        cum_cost += inst_cost;
        records.push(StepRecord {
            t,
            x_true: x.clone(),
            y: Some(y),
            u: u.clone(),
            inst_cost,
            cum_cost,
            fe: step_report(&filter, model, fe_goal, settings.horizon)?,
        });
    }

    Ok(SimulationTrace { records })
}
