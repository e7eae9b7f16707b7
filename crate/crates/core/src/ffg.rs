//! Message passing on one time slice of the factor graph.
//!
//! This module re-derives the backward sweep and the control posterior of
//! [`crate::control`] purely from local Gaussian operations (products,
//! convolutions, pushes and pulls along the model's maps), without ever
//! writing down the closed-form recursions. The two routes must agree, which
//! makes this module an executable cross-check of the closed forms; the
//! acceptance suite compares them on the benchmark system and on randomly
//! drawn models.
//!
//! A backward slice propagates the precision-to-go from a later state to an
//! earlier one; its messages are numbered in evaluation order:
//!
//! |  # | message on            | value                                     |
//! |---:|-----------------------|-------------------------------------------|
//! |  1 | later state           | goal-to-go factor, precision `P_k`        |
//! |  2 | control edge          | flat (nothing known during planning)      |
//! |  3 | later state           | flat (future outputs unobserved)          |
//! |  4 | later state           | `1 x 3`                                   |
//! |  5 | `A x + B u`           | `4` convolved with the process noise      |
//! |  6 | control edge          | control prior, precision `lambda R`       |
//! |  7 | `B u`                 | `6` pushed through `B`                    |
//! |  8 | `A x`                 | `5` convolved with the mirror of `7`      |
//! |  9 | earlier state         | `8` pulled back through `A`               |
//! | 10 | earlier state         | state goal factor, precision `lambda Q`   |
//! | 11 | earlier state         | `9 x 10`; precision is the new `P_{k-1}`  |
//!
//! A control slice shares messages 1 to 6 (with `P_{t+1}` in message 1) and
//! continues forward from the filtering posterior:
//!
//! |  # | message on            | value                                     |
//! |---:|-----------------------|-------------------------------------------|
//! |  7 | current state         | filtering posterior                       |
//! |  8 | current state         | state goal factor, precision `lambda Q`   |
//! |  9 | current state         | `7 x 8`                                   |
//! | 10 | `A x`                 | `9` pushed through `A`                    |
//! | 11 | `B u`                 | `5` convolved with the mirror of `10`     |
//! | 12 | control edge          | `11` pulled back through `B`              |
//!
//! The control posterior `q(u)` is `6 x 12` and the action is its mode. No
//! inverse of `A` or `B` is ever formed, so non-square and rank-deficient
//! maps are fine. Where a message is improper and its counterpart has a
//! rank-deficient spread, the generic convolution has no usable
//! parameterization; those two spots fall back to marginalizing the shared
//! edge out of the local joint, which is defined for every positive
//! `lambda`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::gaussian::Gaussian;
use crate::linalg::{check_psd, check_symmetric, cholesky, spd_inverse, symmetrize};
use crate::model::{GoalPrior, LinearGaussianModel};
use crate::{Error, Result};

/// Messages of one slice, keyed by their evaluation order.
#[derive(Debug, Clone, Default)]
pub struct MessageSet {
    inner: BTreeMap<u8, Gaussian>,
}

impl MessageSet {
    fn insert(&mut self, index: u8, message: Gaussian) {
        let previous = self.inner.insert(index, message);
        debug_assert!(previous.is_none(), "message {index} computed twice");
    }

    pub fn get(&self, index: u8) -> Option<&Gaussian> {
        self.inner.get(&index)
    }

    pub fn indices(&self) -> impl Iterator<Item = u8> + '_ {
        self.inner.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

/// Result of a backward slice: the propagated precision-to-go and every
/// intermediate message.
#[derive(Debug, Clone)]
pub struct BackwardSlice {
    pub p_prev: DMatrix<f64>,
    pub messages: MessageSet,
}

/// Result of a control slice: the control posterior, its mode and every
/// intermediate message.
#[derive(Debug, Clone)]
pub struct ControlSlice {
    pub u_mode: DVector<f64>,
    pub q_u: Gaussian,
    pub messages: MessageSet,
}

/// A model/goal pair fixed for message passing. Requires `lambda > 0`:
/// the slice operations push the control prior through `B`, which needs a
/// proper prior.
#[derive(Debug, Clone, Copy)]
pub struct SliceSpec<'a> {
    model: &'a LinearGaussianModel,
    goal: &'a GoalPrior,
}

impl<'a> SliceSpec<'a> {
    pub fn new(model: &'a LinearGaussianModel, goal: &'a GoalPrior) -> Result<Self> {
        model.check_goal(goal)?;
        if goal.lambda() <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "message passing needs a proper control prior, so lambda must be positive".into(),
            });
        }
        Ok(SliceSpec { model, goal })
    }

    fn validate_p(&self, p: &DMatrix<f64>, context: &'static str) -> Result<()> {
        let n_x = self.model.dims().n_x;
        if p.nrows() != n_x || p.ncols() != n_x {
            return Err(Error::DimensionMismatch {
                context,
                detail: format!("P is {}x{}, state dimension {n_x}", p.nrows(), p.ncols()),
            });
        }
        check_symmetric(p, context)?;
        check_psd(p, context)
    }

    /// Messages 1 to 6, shared by both slice kinds. Returns the set primed
    /// with them plus the two that are consumed later.
    fn shared_prefix(&self, p_k: &DMatrix<f64>) -> Result<(MessageSet, Gaussian, Gaussian)> {
        let dims = self.model.dims();
        let mut messages = MessageSet::default();

        let one = Gaussian::from_mean_precision(DVector::zeros(dims.n_x), p_k.clone())?;
        let two = Gaussian::uninformative(dims.n_u);
        let three = Gaussian::uninformative(dims.n_x);
        let four = one.multiply(&three)?;
        let noise = Gaussian::from_mean_cov(DVector::zeros(dims.n_x), self.model.process_noise_cov().clone())?;
        let five = four.convolve(&noise)?;
        let six = Gaussian::from_mean_precision(DVector::zeros(dims.n_u), self.goal.lambda_r())?;

        messages.insert(1, one);
        messages.insert(2, two);
        messages.insert(3, three);
        messages.insert(4, four);
        messages.insert(5, five.clone());
        messages.insert(6, six.clone());
        Ok((messages, five, six))
    }

    /// Propagate the precision-to-go one step backward.
    pub fn backward_slice(&self, p_k: &DMatrix<f64>) -> Result<BackwardSlice> {
        self.validate_p(p_k, "SliceSpec::backward_slice")?;
        let a = self.model.a();
        let b = self.model.b();
        let (mut messages, five, six) = self.shared_prefix(p_k)?;

        let seven = six.affine_push(b, &DVector::zeros(self.model.dims().n_x))?;
        let eight = match five.convolve(&seven.flipped()) {
            Ok(g) => g,
            // improper 5 against a rank-deficient spread in 7: marginalize
            // the control edge out of the joint over (A x, u) instead
            Err(_) => {
                let w5 = five.precision()?;
                let bt_w5 = b.transpose() * w5;
                let inner = symmetrize(&(self.goal.lambda_r() + &bt_w5 * b));
                let solved = cholesky(&inner, "backward_slice: lambda R + B^T W_5 B")?.solve(&bt_w5);
                let w8 = symmetrize(&(w5 - bt_w5.transpose() * solved));
                Gaussian::prec_form(DVector::zeros(self.model.dims().n_x), w8, 0.0)
            }
        };
        let nine = eight.affine_pull(a)?;
        let ten = Gaussian::from_mean_precision(DVector::zeros(self.model.dims().n_x), self.goal.lambda_q())?;
        let eleven = nine.multiply(&ten)?;
        let p_prev = eleven.precision()?.clone();

        messages.insert(7, seven);
        messages.insert(8, eight);
        messages.insert(9, nine);
        messages.insert(10, ten);
        messages.insert(11, eleven);
        Ok(BackwardSlice { p_prev, messages })
    }

    /// Control posterior for the current step, given the filtering
    /// posterior and the precision-to-go `P_{t+1}` of the remaining horizon.
    pub fn control_slice(&self, estimate: &Gaussian, p_next: &DMatrix<f64>) -> Result<ControlSlice> {
        self.validate_p(p_next, "SliceSpec::control_slice")?;
        let dims = self.model.dims();
        if estimate.dim() != dims.n_x {
            return Err(Error::DimensionMismatch {
                context: "SliceSpec::control_slice",
                detail: format!("estimate dimension {}, state dimension {}", estimate.dim(), dims.n_x),
            });
        }
        if !estimate.is_proper() {
            return Err(Error::ImproperGaussian {
                context: "SliceSpec::control_slice",
            });
        }
        let a = self.model.a();
        let b = self.model.b();
        let (mut messages, five, six) = self.shared_prefix(p_next)?;

        let seven = estimate.normalized()?;
        let eight = Gaussian::from_mean_precision(DVector::zeros(dims.n_x), self.goal.lambda_q())?;
        let nine = seven.multiply(&eight)?;
        let ten = nine.affine_push(a, &DVector::zeros(dims.n_x))?;
        let eleven = match five.convolve(&ten.flipped()) {
            Ok(g) => g,
            // improper 5 against a rank-deficient spread in 10: fold the
            // goal-to-go precision into the joint spread without inverting it
            Err(_) => {
                let d = symmetrize(&(ten.covariance()? + self.model.process_noise_cov()));
                let d_inv = spd_inverse(&d, "control_slice: spread")?;
                let inner = spd_inverse(&symmetrize(&(p_next + &d_inv)), "control_slice: P + D^{-1}")?;
                let w11 = symmetrize(&(&d_inv - &d_inv * inner * &d_inv));
                Gaussian::prec_form(-ten.mean(), w11, 0.0)
            }
        };
        let twelve = eleven.affine_pull(b)?;
        let q_u = six.multiply(&twelve)?;
        let u_mode = q_u.mean().clone();

        messages.insert(7, seven);
        messages.insert(8, eight);
        messages.insert(9, nine);
        messages.insert(10, ten);
        messages.insert(11, eleven);
        messages.insert(12, twelve);
        Ok(ControlSlice { u_mode, q_u, messages })
    }
}
