//! Control of linear Gaussian state-space models by free-energy minimization.
//!
//! The model is `x_{t+1} = A x_t + B u_t + w` with `y_t = C x_t + v`, where
//! the process and observation noises carry precision matrices `W_w` and
//! `W_v`. Quadratic state/control costs enter as zero-mean Gaussian goal
//! factors with precisions `lambda * Q` and `lambda * R`, which makes the
//! whole control problem a Gaussian inference problem:
//!
//! * [`estimation`] runs the forward (Kalman) sweep and tracks log evidence,
//! * [`control`] computes backward gain schedules in closed form, together
//!   with the classical LQG schedule they approach for small `lambda`,
//! * [`ffg`] re-derives both slices by explicit message passing on the
//!   factor graph, used as an independent cross-check,
//! * [`freenergy`] evaluates the variational free energy of the current
//!   belief, split into past (evidence) and future (goal) parts,
//! * [`simulation`] closes the loop and produces reproducible traces.
//!
//! All matrix work is on f64 `nalgebra` types; dimensions are small and
//! checked at run time.

pub mod control;
pub mod estimation;
pub mod ffg;
pub mod freenergy;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod simulation;

pub use gaussian::Gaussian;
pub use model::{GoalPrior, LinearGaussianModel, MatrixDims};

use simulation::SimulationTrace;

/// Errors shared by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: dimension mismatch, {detail}")]
    DimensionMismatch {
        context: &'static str,
        detail: String,
    },
    #[error("{context}: matrix is not symmetric within tolerance")]
    NotSymmetric { context: &'static str },
    #[error("{context}: matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { context: &'static str, min_eig: f64 },
    #[error("{context}: singular matrix")]
    Singular { context: &'static str },
    #[error("{context}: improper Gaussian has no covariance form")]
    ImproperGaussian { context: &'static str },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("{context}: non-finite value")]
    NonFinite { context: &'static str },
    #[error("simulation diverged at step {t}")]
    Diverged { t: usize, trace: Box<SimulationTrace> },
}

pub type Result<T> = std::result::Result<T, Error>;
