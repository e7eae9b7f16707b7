//! Backward gain schedules and one-step control laws.
//!
//! Both controllers run the same backward sweep over a horizon of length
//! `T`: a terminal goal precision `P_{t+T} = lambda Q` is propagated through
//! the dynamics, producing `P_{t+1}` and from it a feedback gain with
//! `u = -K x_hat`.
//!
//! The goal-conditioned (ActInf) step is
//!
//! ```text
//! P_{k-1} = A^T P_k A - A^T P_k B (R' + B^T P_k B)^{-1} B^T P_k A + lambda Q
//! R'      = ([lambda R]^{-1} + [B^T W_w B]^{-1})^{-1}
//! ```
//!
//! with `R'` evaluated by the Searle identity so neither addend is inverted
//! on its own. Folding the process noise into `R'` like this is exact only
//! for square invertible `B` (it needs `B (B^T W_w B)^{-1} B^T = W_w^{-1}`);
//! for every other shape, and when `B^T W_w B` is singular, the step uses
//! the equivalent pre-Woodbury form
//!
//! ```text
//! P_{k-1} = A^T (P_k^{-1} + B [lambda R]^{-1} B^T + W_w^{-1})^{-1} A + lambda Q
//! ```
//!
//! evaluated through a rearrangement that never inverts `P_k`, so singular
//! schedules (e.g. rank-deficient `Q`) stay usable. The classical LQG sweep
//! is the same recursion with `R' := lambda R`, which drops the process
//! noise from the effort term; the two coincide as `lambda -> 0` or as the
//! relevant precisions grow, and those limits are checked by
//! [`limit_check_lambda`] and the acceptance suite.

use nalgebra::{DMatrix, DVector};

use crate::gaussian::Gaussian;
use crate::linalg::{check_psd, check_symmetric, cholesky, searle_combine, spd_inverse, symmetrize};
use crate::model::{GoalPrior, LinearGaussianModel};
use crate::{Error, Result};

/// Backward sweep output: `p[i]` is `P_{t+1+i}`, so `p.first()` is the
/// `P_{t+1}` used by the gain and `p.last()` is the terminal `lambda Q`.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    p: Vec<DMatrix<f64>>,
    r_prime: Option<DMatrix<f64>>,
    horizon: usize,
}

impl GainSchedule {
    /// `P_{t+1}`, the precision-to-go used by the one-step gain.
    pub fn p_next(&self) -> &DMatrix<f64> {
        &self.p[0]
    }

    /// Full sequence `P_{t+1} ..= P_{t+T}`.
    pub fn p_seq(&self) -> &[DMatrix<f64>] {
        &self.p
    }

    /// Combined control-effort precision, when defined for the sweep.
    pub fn r_prime(&self) -> Option<&DMatrix<f64>> {
        self.r_prime.as_ref()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

fn validate_p(p_k: &DMatrix<f64>, model: &LinearGaussianModel, context: &'static str) -> Result<()> {
    let n_x = model.dims().n_x;
    if p_k.nrows() != n_x || p_k.ncols() != n_x {
        return Err(Error::DimensionMismatch {
            context,
            detail: format!("P is {}x{}, state dimension {n_x}", p_k.nrows(), p_k.ncols()),
        });
    }
    check_symmetric(p_k, context)?;
    check_psd(p_k, context)
}

/// `(P_k^{-1} + S)^{-1}` for PSD `P_k` and PD `S`, via
/// `P - P (P + S^{-1})^{-1} P`, which never inverts `P_k`.
fn shrink_through(p_k: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s_inv = spd_inverse(s, "control: noise-plus-effort spread")?;
    let inner = spd_inverse(&symmetrize(&(p_k + &s_inv)), "control: P + S^{-1}")?;
    Ok(symmetrize(&(p_k - p_k * inner * p_k)))
}

/// One goal-conditioned backward step through the `R'` form.
pub(crate) fn backward_step_searle(
    p_k: &DMatrix<f64>,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
    btwb: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a = model.a();
    let b = model.b();
    let r_prime = searle_combine(&goal.lambda_r(), btwb)?;
    let inner = symmetrize(&(&r_prime + b.transpose() * p_k * b));
    let inner_chol = cholesky(&inner, "control: R' + B^T P B")?;
    let bt_p_a = b.transpose() * p_k * a;
    let correction = bt_p_a.transpose() * inner_chol.solve(&bt_p_a);
    Ok(symmetrize(&(a.transpose() * p_k * a - correction + goal.lambda_q())))
}

/// One goal-conditioned backward step through the pre-Woodbury form, valid
/// for any PSD `P_k` and any `B` (including `B = 0`) as long as
/// `lambda > 0`.
pub(crate) fn backward_step_spread(
    p_k: &DMatrix<f64>,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
) -> Result<DMatrix<f64>> {
    let a = model.a();
    let b = model.b();
    let lr_inv = spd_inverse(&goal.lambda_r(), "control: lambda R").map_err(|_| Error::InvalidParameter {
        name: "lambda",
        reason: "the backward step with rank-deficient B^T W_w B needs lambda > 0".into(),
    })?;
    let spread = symmetrize(&(b * lr_inv * b.transpose() + model.process_noise_cov()));
    let mid = shrink_through(p_k, &spread)?;
    Ok(symmetrize(&(a.transpose() * mid * a + goal.lambda_q())))
}

/// One backward step of the goal-conditioned sweep (see module docs).
pub fn actinf_backward_step(p_k: &DMatrix<f64>, model: &LinearGaussianModel, goal: &GoalPrior) -> Result<DMatrix<f64>> {
    validate_p(p_k, model, "actinf_backward_step")?;
    model.check_goal(goal)?;
    let dims = model.dims();
    if dims.n_u == dims.n_x {
        let btwb = symmetrize(&(model.b().transpose() * model.w_w() * model.b()));
        if cholesky(&btwb, "control").is_ok() {
            match backward_step_searle(p_k, model, goal, &btwb) {
                Ok(p) => return Ok(p),
                Err(Error::Singular { .. }) => {} // lambda = 0 against singular P_k
                Err(e) => return Err(e),
            }
        }
    }
    backward_step_spread(p_k, model, goal)
}

fn terminal(goal: &GoalPrior) -> DMatrix<f64> {
    symmetrize(&goal.lambda_q())
}

fn combined_effort(model: &LinearGaussianModel, goal: &GoalPrior) -> Option<DMatrix<f64>> {
    let dims = model.dims();
    if dims.n_u != dims.n_x {
        return None;
    }
    let btwb = symmetrize(&(model.b().transpose() * model.w_w() * model.b()));
    cholesky(&btwb, "control").ok()?;
    searle_combine(&goal.lambda_r(), &btwb).ok()
}

/// Backward sweep of length `horizon >= 1` for the goal-conditioned
/// controller; `P_{t+T} = lambda Q` followed by `horizon - 1` applications
/// of [`actinf_backward_step`].
pub fn actinf_schedule(model: &LinearGaussianModel, goal: &GoalPrior, horizon: usize) -> Result<GainSchedule> {
    model.check_goal(goal)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    let mut p = vec![terminal(goal)];
    for _ in 1..horizon {
        let next = actinf_backward_step(&p[0], model, goal)?;
        p.insert(0, next);
    }
    Ok(GainSchedule {
        p,
        r_prime: combined_effort(model, goal),
        horizon,
    })
}

/// `Sigma^{-1}` for `Sigma = A V' A^T + P^{-1} + W_w^{-1}`, rearranged so a
/// singular `P` is never inverted.
fn sigma_inverse(p_next: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // (D + P^{-1})^{-1} = D^{-1} - D^{-1} (P + D^{-1})^{-1} D^{-1}
    let d_inv = spd_inverse(d, "control: A V' A^T + W_w^{-1}")?;
    let inner = spd_inverse(&symmetrize(&(p_next + &d_inv)), "control: P + D^{-1}")?;
    Ok(symmetrize(&(&d_inv - &d_inv * inner * &d_inv)))
}

/// One-step goal-conditioned feedback from the current belief:
/// `u = -K x_hat` with
/// `K = [B^T S^-1 B + lambda R]^{-1} B^T S^-1 A V' W_hat`,
/// `S = A V' A^T + P_{t+1}^{-1} + W_w^{-1}` and `V' = (W_hat + lambda Q)^{-1}`.
pub fn actinf_gain(
    schedule: &GainSchedule,
    estimate: &Gaussian,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.check_goal(goal)?;
    let n_x = model.dims().n_x;
    if estimate.dim() != n_x {
        return Err(Error::DimensionMismatch {
            context: "actinf_gain",
            detail: format!("estimate dimension {}, state dimension {n_x}", estimate.dim()),
        });
    }
    let a = model.a();
    let b = model.b();
    let w_hat = estimate.precision()?;
    let v_prime = spd_inverse(&symmetrize(&(w_hat + goal.lambda_q())), "actinf_gain: W_hat + lambda Q")?;
    let p_next = schedule.p_next();
    let d = symmetrize(&(a * &v_prime * a.transpose() + model.process_noise_cov()));
    let sig_inv = match cholesky(p_next, "actinf_gain") {
        Ok(chol) => {
            let sigma = symmetrize(&(&d + chol.inverse()));
            spd_inverse(&sigma, "actinf_gain: Sigma")?
        }
        Err(_) => sigma_inverse(p_next, &d)?,
    };
    let lhs = symmetrize(&(b.transpose() * &sig_inv * b + goal.lambda_r()));
    let rhs = b.transpose() * &sig_inv * a * &v_prime * w_hat;
    let k = cholesky(&lhs, "actinf_gain: B^T Sigma^{-1} B + lambda R")?.solve(&rhs);
    let u = -&k * estimate.mean();
    Ok((k, u))
}

/// Backward Riccati sweep of the classical LQG controller: the same
/// recursion as [`actinf_schedule`] with `R' := lambda R`.
pub fn lqg_schedule(model: &LinearGaussianModel, cost: &GoalPrior, horizon: usize) -> Result<GainSchedule> {
    model.check_goal(cost)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    let a = model.a();
    let b = model.b();
    let lambda_r = cost.lambda_r();
    let mut p = vec![terminal(cost)];
    for _ in 1..horizon {
        let p_k = &p[0];
        let inner = symmetrize(&(&lambda_r + b.transpose() * p_k * b));
        let inner_chol = cholesky(&inner, "lqg_schedule: lambda R + B^T P B")?;
        let bt_p_a = b.transpose() * p_k * a;
        let correction = bt_p_a.transpose() * inner_chol.solve(&bt_p_a);
        let prev = symmetrize(&(a.transpose() * p_k * a - correction + cost.lambda_q()));
        p.insert(0, prev);
    }
    Ok(GainSchedule {
        p,
        r_prime: Some(lambda_r),
        horizon,
    })
}

/// Certainty-equivalent LQG feedback
/// `K = (B^T P_{t+1} B + lambda R)^{-1} B^T P_{t+1} A`, `u = -K x_hat`.
pub fn lqg_gain(
    schedule: &GainSchedule,
    x_hat: &DVector<f64>,
    model: &LinearGaussianModel,
    cost: &GoalPrior,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.check_goal(cost)?;
    if x_hat.len() != model.dims().n_x {
        return Err(Error::DimensionMismatch {
            context: "lqg_gain",
            detail: format!("x_hat length {}, state dimension {}", x_hat.len(), model.dims().n_x),
        });
    }
    let b = model.b();
    let p_next = schedule.p_next();
    let lhs = symmetrize(&(b.transpose() * p_next * b + cost.lambda_r()));
    let rhs = b.transpose() * p_next * model.a();
    let k = cholesky(&lhs, "lqg_gain: B^T P B + lambda R")?.solve(&rhs);
    let u = -&k * x_hat;
    Ok((k, u))
}

/// Max-entry gap `|K_actinf(lambda) - K_lqg|` for each `lambda`, with the
/// goal-conditioned gain evaluated at belief precision `w_hat`. The LQG
/// reference gain is invariant to joint scaling of `(Q, R)`, so it is taken
/// at `lambda = 1`. The gaps shrink to zero as `lambda -> 0`.
pub fn limit_check_lambda(
    model: &LinearGaussianModel,
    goal: &GoalPrior,
    horizon: usize,
    lambdas: &[f64],
    w_hat: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let reference = goal.with_lambda(1.0)?;
    let lqg = lqg_schedule(model, &reference, horizon)?;
    let x_hat = DVector::zeros(model.dims().n_x);
    let (k_ref, _) = lqg_gain(&lqg, &x_hat, model, &reference)?;
    let estimate = Gaussian::from_mean_precision(x_hat, w_hat.clone())?;
    let mut gaps = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let scaled = goal.with_lambda(lambda)?;
        let schedule = actinf_schedule(model, &scaled, horizon)?;
        let (k, _) = actinf_gain(&schedule, &estimate, model, &scaled)?;
        gaps.push((&k - &k_ref).amax());
    }
    Ok(gaps)
}
