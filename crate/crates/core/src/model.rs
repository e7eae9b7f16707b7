//! Model and goal containers with validated shapes.

use nalgebra::DMatrix;

use crate::gaussian::Gaussian;
use crate::linalg::{check_psd, check_symmetric, cholesky, spd_inverse};
use crate::{Error, Result};

/// State, control and observation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
}

/// Discrete-time linear Gaussian state-space model
/// `x' = A x + B u + w`, `y = C x + v`, with noise precisions `W_w`, `W_v`
/// and a Gaussian prior over the initial state.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    w_w: DMatrix<f64>,
    w_v: DMatrix<f64>,
    w_w_inv: DMatrix<f64>,
    w_v_inv: DMatrix<f64>,
    prior: Gaussian,
}

fn check_finite(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: "contains non-finite entries".into(),
        })
    }
}

impl LinearGaussianModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        w_w: DMatrix<f64>,
        w_v: DMatrix<f64>,
        prior: Gaussian,
    ) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::InvalidParameter {
                name: "a",
                reason: format!("must be square and non-empty, found {}x{}", a.nrows(), a.ncols()),
            });
        }
        let n_x = a.nrows();
        if b.nrows() != n_x || b.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: format!("must be {}x(n_u >= 1), found {}x{}", n_x, b.nrows(), b.ncols()),
            });
        }
        if c.ncols() != n_x || c.nrows() == 0 {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: format!("must be (n_y >= 1)x{}, found {}x{}", n_x, c.nrows(), c.ncols()),
            });
        }
        let n_y = c.nrows();
        for (name, m) in [("a", &a), ("b", &b), ("c", &c), ("w_w", &w_w), ("w_v", &w_v)] {
            check_finite(name, m)?;
        }
        if w_w.nrows() != n_x {
            return Err(Error::InvalidParameter {
                name: "w_w",
                reason: format!("must be {n_x}x{n_x}, found {}x{}", w_w.nrows(), w_w.ncols()),
            });
        }
        if w_v.nrows() != n_y {
            return Err(Error::InvalidParameter {
                name: "w_v",
                reason: format!("must be {n_y}x{n_y}, found {}x{}", w_v.nrows(), w_v.ncols()),
            });
        }
        check_symmetric(&w_w, "w_w")?;
        check_symmetric(&w_v, "w_v")?;
        let w_w_inv = spd_inverse(&w_w, "w_w").map_err(|_| Error::InvalidParameter {
            name: "w_w",
            reason: "must be positive definite".into(),
        })?;
        let w_v_inv = spd_inverse(&w_v, "w_v").map_err(|_| Error::InvalidParameter {
            name: "w_v",
            reason: "must be positive definite".into(),
        })?;
        if prior.dim() != n_x {
            return Err(Error::InvalidParameter {
                name: "prior",
                reason: format!("dimension {} does not match state dimension {n_x}", prior.dim()),
            });
        }
        Ok(Self {
            a,
            b,
            c,
            w_w,
            w_v,
            w_w_inv,
            w_v_inv,
            prior,
        })
    }

    pub fn dims(&self) -> MatrixDims {
        MatrixDims {
            n_x: self.a.nrows(),
            n_u: self.b.ncols(),
            n_y: self.c.nrows(),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Process noise precision.
    pub fn w_w(&self) -> &DMatrix<f64> {
        &self.w_w
    }

    /// Observation noise precision.
    pub fn w_v(&self) -> &DMatrix<f64> {
        &self.w_v
    }

    /// Process noise covariance `W_w^{-1}`.
    pub fn process_noise_cov(&self) -> &DMatrix<f64> {
        &self.w_w_inv
    }

    /// Observation noise covariance `W_v^{-1}`.
    pub fn obs_noise_cov(&self) -> &DMatrix<f64> {
        &self.w_v_inv
    }

    pub fn prior(&self) -> &Gaussian {
        &self.prior
    }

    /// Errors unless the goal matrices conform to this model's dimensions.
    pub fn check_goal(&self, goal: &GoalPrior) -> Result<()> {
        let dims = self.dims();
        if goal.q().nrows() != dims.n_x {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("must be {0}x{0} to match the state dimension", dims.n_x),
            });
        }
        if goal.r().nrows() != dims.n_u {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("must be {0}x{0} to match the control dimension", dims.n_u),
            });
        }
        Ok(())
    }
}

/// Quadratic state/control cost `(x^T Q x + u^T R u) / 2` encoded as a pair
/// of zero-mean Gaussian goal factors with precisions `lambda Q` and
/// `lambda R`.
#[derive(Debug, Clone)]
pub struct GoalPrior {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    lambda: f64,
}

impl GoalPrior {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, lambda: f64) -> Result<Self> {
        check_finite("q", &q)?;
        check_finite("r", &r)?;
        check_psd(&q, "q").map_err(|_| Error::InvalidParameter {
            name: "q",
            reason: "must be symmetric positive semidefinite".into(),
        })?;
        check_symmetric(&r, "r").map_err(|_| Error::InvalidParameter {
            name: "r",
            reason: "must be symmetric".into(),
        })?;
        cholesky(&r, "r").map_err(|_| Error::InvalidParameter {
            name: "r",
            reason: "must be positive definite".into(),
        })?;
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be finite and >= 0, found {lambda}"),
            });
        }
        Ok(Self { q, r, lambda })
    }

    /// Same cost matrices with a different sharpness `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.q.clone(), self.r.clone(), lambda)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Goal precision over the state, `lambda Q`.
    pub fn lambda_q(&self) -> DMatrix<f64> {
        &self.q * self.lambda
    }

    /// Goal precision over the control, `lambda R`.
    pub fn lambda_r(&self) -> DMatrix<f64> {
        &self.r * self.lambda
    }
}
