//! Forward filtering sweep with evidence bookkeeping.
//!
//! The filter is the standard Kalman recursion written as Gaussian message
//! operations: predict in covariance form (push through the dynamics, add
//! process noise), update in precision form (multiply by the observation
//! factor pulled back through `C`). The mass of each posterior product is
//! the per-step marginal likelihood, so `log_evidence` accumulates the log
//! probability the model assigned to the observations seen so far.

use nalgebra::DVector;

use crate::gaussian::Gaussian;
use crate::model::LinearGaussianModel;
use crate::{Error, Result};

/// Filtered belief over the current state.
#[derive(Debug, Clone)]
pub struct FilterState {
    estimate: Gaussian,
    log_evidence: f64,
    t: usize,
}

impl FilterState {
    /// Start the sweep from a prior belief over `x_0`. The estimate is kept
    /// normalized; evidence starts at zero.
    pub fn init(model: &LinearGaussianModel, prior: &Gaussian) -> Result<Self> {
        if prior.dim() != model.dims().n_x {
            return Err(Error::DimensionMismatch {
                context: "FilterState::init",
                detail: format!("prior dimension {}, state dimension {}", prior.dim(), model.dims().n_x),
            });
        }
        Ok(Self {
            estimate: prior.normalized()?,
            log_evidence: 0.0,
            t: 0,
        })
    }

    /// Current belief `p_e(x_t)`, normalized.
    pub fn estimate(&self) -> &Gaussian {
        &self.estimate
    }

    /// Accumulated log marginal likelihood of all observations so far.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// Number of observations incorporated.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Incorporate one transition (driven by `u_prev`) and one observation.
    pub fn step(&self, model: &LinearGaussianModel, u_prev: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        let dims = model.dims();
        if u_prev.len() != dims.n_u || y.len() != dims.n_y {
            return Err(Error::DimensionMismatch {
                context: "FilterState::step",
                detail: format!(
                    "control length {} (expected {}), observation length {} (expected {})",
                    u_prev.len(),
                    dims.n_u,
                    y.len(),
                    dims.n_y
                ),
            });
        }
        if !u_prev.iter().all(|x| x.is_finite()) || !y.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "FilterState::step",
            });
        }
        let prediction = self
            .estimate
            .affine_push(model.a(), &(model.b() * u_prev))?
            .add_covariance(model.process_noise_cov())?;
        // N(y | Cx, W_v^{-1}) as a Gaussian factor over the state
        let observation = Gaussian::from_mean_cov(y.clone(), model.obs_noise_cov().clone())?;
        let posterior = prediction.multiply(&observation.affine_pull(model.c())?)?;
        let increment = posterior.log_partition()?;
        Ok(Self {
            estimate: posterior.normalized()?,
            log_evidence: self.log_evidence + increment,
            t: self.t + 1,
        })
    }
}
