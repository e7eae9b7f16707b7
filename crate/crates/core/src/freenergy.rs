//! Variational free energy of a belief state under the goal prior.
//!
//! For a linear Gaussian model all the usual bounds are tight, so the free
//! energy splits into two exactly computable pieces:
//!
//! * the past part, `-ln p(y_1..y_t)`: the negative log evidence
//!   accumulated by the filter;
//! * the future part, the negative log mass of the filtering posterior
//!   multiplied by the goal chain over the remaining horizon, with the
//!   control priors and process noise marginalized out step by step.
//!
//! The goal chain uses normalized factors: the state goal at each of the
//! `horizon + 1` remaining slices is the density `N(0, (lambda Q)^{-1})`,
//! and the control prior `N(0, (lambda R)^{-1})` is integrated out of each
//! transition, widening it by `B (lambda R)^{-1} B^T`. Normalized factors
//! keep the future part comparable across `lambda`: tightening the goal
//! around a state the posterior cannot reach raises the value instead of
//! rewarding narrowness.
//!
//! The future part is evaluated by sequential elimination: starting from the
//! posterior, alternate pushing through the dynamics (with the widened
//! spread) and multiplying in the next goal factor, tracking the mass of the
//! product. Every push is through `A` only, so no matrix inverse of the
//! model maps is ever needed.

use nalgebra::DVector;

use crate::estimation::FilterState;
use crate::gaussian::Gaussian;
use crate::linalg::{cholesky, spd_inverse, symmetrize};
use crate::model::{GoalPrior, LinearGaussianModel};
use crate::{Error, Result};

/// Free energy of one step, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyReport {
    /// Negative accumulated log evidence of the observations so far.
    pub past_part: f64,
    /// Negative log mass of the posterior against the remaining goal chain.
    pub future_part: f64,
    /// Sum of the two parts.
    pub total: f64,
}

fn goal_factor(model: &LinearGaussianModel, goal: &GoalPrior) -> Result<Gaussian> {
    if goal.lambda() <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: "free energy uses normalized goal factors, so lambda must be positive".into(),
        });
    }
    let lambda_q = goal.lambda_q();
    cholesky(&lambda_q, "freenergy").map_err(|_| Error::InvalidParameter {
        name: "q",
        reason: "free energy uses normalized goal factors, so Q must be positive definite".into(),
    })?;
    Gaussian::from_mean_precision(DVector::zeros(model.dims().n_x), lambda_q)
}

/// Negative log mass of `estimate` against the goal chain over the next
/// `horizon` transitions (`horizon + 1` goal factors in total, one per
/// remaining slice including the current one).
pub fn future_free_energy(
    estimate: &Gaussian,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
    horizon: usize,
) -> Result<f64> {
    model.check_goal(goal)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    if estimate.dim() != model.dims().n_x {
        return Err(Error::DimensionMismatch {
            context: "future_free_energy",
            detail: format!("estimate dimension {}, state dimension {}", estimate.dim(), model.dims().n_x),
        });
    }
    let tilde = goal_factor(model, goal)?;
    let b = model.b();
    let lr_inv = spd_inverse(&goal.lambda_r(), "freenergy: lambda R")?;
    let spread = symmetrize(&(b * lr_inv * b.transpose() + model.process_noise_cov()));
    let offset = DVector::zeros(model.dims().n_x);

    let mut g = estimate.normalized()?.multiply(&tilde)?;
    for _ in 0..horizon {
        g = g.affine_push(model.a(), &offset)?.add_covariance(&spread)?.multiply(&tilde)?;
    }
    Ok(-g.log_partition()?)
}

/// Both parts of the free energy for the current filter state.
pub fn step_report(
    filter: &FilterState,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
    horizon: usize,
) -> Result<FreeEnergyReport> {
    let past_part = -filter.log_evidence();
    let future_part = future_free_energy(filter.estimate(), model, goal, horizon)?;
    Ok(FreeEnergyReport {
        past_part,
        future_part,
        total: past_part + future_part,
    })
}
