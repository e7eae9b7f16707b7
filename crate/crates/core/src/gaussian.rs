//! Unnormalized multivariate Gaussians in mean/covariance or mean/precision
//! form.
//!
//! Messages in a linear Gaussian model are Gaussian up to scale, so every
//! value carries a `log_weight` besides its shape parameters:
//!
//! * proper (invertible precision): the value denotes
//!   `exp(log_weight) * N(x | mean, V)`, i.e. `log_weight` is the log of the
//!   total mass and is 0 for a normalized distribution;
//! * improper (singular precision, e.g. a flat prior): no normalizer exists
//!   and the value denotes
//!   `exp(log_weight) * exp(-(x - mean)^T W (x - mean) / 2)`.
//!
//! Products track the Gaussian product normalizer exactly, which is what
//! turns a filtering sweep into an evidence computation and a chain of
//! marginalizations into a free-energy value.
//!
//! Whichever parameterization a value was built from stays authoritative;
//! the other is derived lazily and cached. Matrices are re-symmetrized on
//! entry and results of every operation are re-symmetrized again.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, cholesky, mean_solve, psd_least_squares, spd_log_det, symmetrize};
use crate::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Which parameterization a [`Gaussian`] was constructed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Covariance,
    Precision,
}

/// Unnormalized Gaussian with lazily cached dual parameterization.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    form: Form,
    cov: OnceLock<DMatrix<f64>>,
    prec: OnceLock<DMatrix<f64>>,
    log_weight: f64,
}

impl Gaussian {
    /// Normalized Gaussian from mean and covariance. The covariance must be
    /// symmetric within `1e-10` (relative) and PSD; it is re-symmetrized on
    /// entry. A singular covariance is allowed and describes a distribution
    /// concentrated on an affine subspace.
    pub fn from_mean_cov(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::validate(&mean, &cov, "Gaussian::from_mean_cov")?;
        Ok(Self::cov_form(mean, symmetrize(&cov), 0.0))
    }

    /// Normalized (or, when `prec` is singular, unit-height) Gaussian from
    /// mean and precision.
    pub fn from_mean_precision(mean: DVector<f64>, prec: DMatrix<f64>) -> Result<Self> {
        Self::validate(&mean, &prec, "Gaussian::from_mean_precision")?;
        Ok(Self::prec_form(mean, symmetrize(&prec), 0.0))
    }

    /// Flat message: zero precision, carries no information.
    pub fn uninformative(dim: usize) -> Self {
        Self::prec_form(DVector::zeros(dim), DMatrix::zeros(dim, dim), 0.0)
    }

    fn validate(mean: &DVector<f64>, matrix: &DMatrix<f64>, context: &'static str) -> Result<()> {
        if matrix.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                context,
                detail: format!("mean has length {}, matrix is {}x{}", mean.len(), matrix.nrows(), matrix.ncols()),
            });
        }
        if !mean.iter().all(|x| x.is_finite()) || !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context });
        }
        linalg::check_symmetric(matrix, context)?;
        linalg::check_psd(matrix, context)
    }

    pub(crate) fn cov_form(mean: DVector<f64>, cov: DMatrix<f64>, log_weight: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(cov);
        Gaussian {
            mean,
            form: Form::Covariance,
            cov: cell,
            prec: OnceLock::new(),
            log_weight,
        }
    }

    pub(crate) fn prec_form(mean: DVector<f64>, prec: DMatrix<f64>, log_weight: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(prec);
        Gaussian {
            mean,
            form: Form::Precision,
            cov: OnceLock::new(),
            prec: cell,
            log_weight,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    /// Which parameterization is authoritative for this value.
    pub fn form(&self) -> Form {
        self.form
    }

    /// Same shape with `log_weight` shifted by `delta`.
    pub fn scaled(&self, delta: f64) -> Self {
        let mut g = self.clone();
        g.log_weight += delta;
        g
    }

    /// Covariance, derived from the precision on first use. Errors for
    /// improper Gaussians (singular precision).
    pub fn covariance(&self) -> Result<&DMatrix<f64>> {
        if let Some(v) = self.cov.get() {
            return Ok(v);
        }
        let w = self.prec.get().expect("precision form must be set");
        let v = symmetrize(&cholesky(w, "Gaussian::covariance")
            .map_err(|_| Error::ImproperGaussian {
                context: "Gaussian::covariance",
            })?
            .inverse());
        Ok(self.cov.get_or_init(|| v))
    }

    /// Precision, derived from the covariance on first use. Errors when the
    /// covariance is singular (a distribution concentrated on a subspace).
    pub fn precision(&self) -> Result<&DMatrix<f64>> {
        if let Some(w) = self.prec.get() {
            return Ok(w);
        }
        let v = self.cov.get().expect("covariance form must be set");
        let w = symmetrize(&cholesky(v, "Gaussian::precision")?.inverse());
        Ok(self.prec.get_or_init(|| w))
    }

    /// True when the value has a finite covariance (invertible precision).
    pub fn is_proper(&self) -> bool {
        self.covariance().is_ok()
    }

    /// Same shape, `log_weight` reset to 0 (a normalized distribution).
    /// Errors for improper Gaussians, which cannot be normalized.
    pub fn normalized(&self) -> Result<Self> {
        self.covariance().map_err(|_| Error::ImproperGaussian {
            context: "Gaussian::normalized",
        })?;
        let mut g = self.clone();
        g.log_weight = 0.0;
        Ok(g)
    }

    /// Log of the Gaussian's normalization constant
    /// `-(n/2) ln 2pi + (1/2) ln det W`, or `None` for improper values.
    fn log_norm_const(&self) -> Result<Option<f64>> {
        let w = match self.form {
            Form::Precision => self.prec.get().expect("precision form must be set"),
            // errors on a singular covariance: no density exists at all then
            Form::Covariance => self.precision()?,
        };
        match cholesky(w, "Gaussian::log_norm_const") {
            Ok(chol) => Ok(Some(0.5 * spd_log_det(&chol) - 0.5 * self.dim() as f64 * LN_2PI)),
            Err(_) => Ok(None),
        }
    }

    /// `log phi(mean)`: the log-height of the unnormalized density at its
    /// mean, under the weight conventions in the module docs.
    fn log_height(&self) -> Result<f64> {
        Ok(self.log_weight + self.log_norm_const()?.unwrap_or(0.0))
    }

    /// `(x - mean)^T W (x - mean)`.
    fn quad_form(&self, x: &DVector<f64>) -> Result<f64> {
        let d = x - &self.mean;
        Ok((&d.transpose() * self.precision()? * &d)[(0, 0)])
    }

    /// Pointwise product of two Gaussian factors.
    ///
    /// Precisions add; the weight accumulates the log of the Gaussian
    /// product normalizer, so that for proper inputs the result's
    /// [`log_partition`](Self::log_partition) is the log mass of the
    /// product. Improper inputs are fine as long as the summed precision is
    /// invertible (a flat prior is absorbed); a singular product precision
    /// with consistent information is returned improper, and it is an error
    /// when no mean exists at all (both factors blind in a shared subspace
    /// with conflicting pulls).
    pub fn multiply(&self, other: &Gaussian) -> Result<Gaussian> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian::multiply",
                detail: format!("{} vs {}", self.dim(), other.dim()),
            });
        }
        let wa = self.precision()?;
        let wb = other.precision()?;
        let w = symmetrize(&(wa + wb));
        let h = wa * &self.mean + wb * &other.mean;
        let (mean, chol) = mean_solve(&w, &h, "Gaussian::multiply")?;
        let log_norm = chol.map(|chol| 0.5 * spd_log_det(&chol) - 0.5 * self.dim() as f64 * LN_2PI);
        let log_weight = self.log_height()? - 0.5 * self.quad_form(&mean)? + other.log_height()?
            - 0.5 * other.quad_form(&mean)?
            - log_norm.unwrap_or(0.0);
        Ok(Gaussian::prec_form(mean, w, log_weight))
    }

    /// Push through the affine map `x -> M x + offset`: the distribution of
    /// the image of this Gaussian. Mass is preserved. Requires a covariance
    /// form, so improper inputs error.
    pub fn affine_push(&self, m: &DMatrix<f64>, offset: &DVector<f64>) -> Result<Gaussian> {
        if m.ncols() != self.dim() || offset.len() != m.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian::affine_push",
                detail: format!("map {}x{}, offset {}, input dim {}", m.nrows(), m.ncols(), offset.len(), self.dim()),
            });
        }
        let v = self.covariance().map_err(|_| Error::ImproperGaussian {
            context: "Gaussian::affine_push",
        })?;
        let mean = m * &self.mean + offset;
        let cov = symmetrize(&(m * v * m.transpose()));
        Ok(Gaussian::cov_form(mean, cov, self.log_weight))
    }

    /// Pull backward through the linear map `x -> M x`: the function
    /// `x -> phi(M x)` as a Gaussian over the input space. Precisions map as
    /// `W -> M^T W M`, so the result is improper whenever `M` loses rank.
    /// The scale of the function is preserved exactly; in particular the
    /// mass of a proper result picks up `-ln |det M|` for invertible `M`.
    pub fn affine_pull(&self, m: &DMatrix<f64>) -> Result<Gaussian> {
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian::affine_pull",
                detail: format!("map {}x{}, message dim {}", m.nrows(), m.ncols(), self.dim()),
            });
        }
        let w_self = self.precision()?;
        let w = symmetrize(&(m.transpose() * w_self * m));
        let h_self = w_self * &self.mean;
        let h = m.transpose() * &h_self;
        // the constant term of the exponent is unchanged by substitution
        let gamma = self.log_height()? - 0.5 * h_self.dot(&self.mean);
        // a wide map always loses rank, so its pull has no normalizer; don't
        // give a spurious factorization of the singular precision the chance
        let (mean, chol) = if m.ncols() > m.nrows() {
            (psd_least_squares(&w, &h, "Gaussian::affine_pull")?, None)
        } else {
            mean_solve(&w, &h, "Gaussian::affine_pull")?
        };
        let log_norm = chol.map(|chol| 0.5 * spd_log_det(&chol) - 0.5 * m.ncols() as f64 * LN_2PI);
        let log_weight = gamma + 0.5 * h.dot(&mean) - log_norm.unwrap_or(0.0);
        Ok(Gaussian::prec_form(mean, w, log_weight))
    }

    /// Distribution of the sum of two independent variables. Covariances
    /// add when both are available; otherwise the result's precision is the
    /// parallel sum of the input precisions, which tolerates an improper
    /// input. Weights add (exact mass for proper inputs, proportional
    /// bookkeeping otherwise).
    pub fn convolve(&self, other: &Gaussian) -> Result<Gaussian> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian::convolve",
                detail: format!("{} vs {}", self.dim(), other.dim()),
            });
        }
        let mean = &self.mean + &other.mean;
        let log_weight = self.log_weight + other.log_weight;
        if let (Ok(va), Ok(vb)) = (self.covariance(), other.covariance()) {
            return Ok(Gaussian::cov_form(mean, symmetrize(&(va + vb)), log_weight));
        }
        let w = linalg::searle_combine(self.precision()?, other.precision()?)?;
        Ok(Gaussian::prec_form(mean, w, log_weight))
    }

    /// Convolve with zero-mean noise of the given covariance.
    pub fn add_covariance(&self, noise_cov: &DMatrix<f64>) -> Result<Gaussian> {
        if noise_cov.nrows() != self.dim() || noise_cov.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Gaussian::add_covariance",
                detail: format!("noise {}x{}, dim {}", noise_cov.nrows(), noise_cov.ncols(), self.dim()),
            });
        }
        let v = self.covariance().map_err(|_| Error::ImproperGaussian {
            context: "Gaussian::add_covariance",
        })?;
        Ok(Gaussian::cov_form(self.mean.clone(), symmetrize(&(v + noise_cov)), self.log_weight))
    }

    /// Mirror image `x -> phi(-x)`: negated mean, same shape and weight.
    pub(crate) fn flipped(&self) -> Gaussian {
        let mut g = self.clone();
        g.mean = -&g.mean;
        g
    }

    /// Log of the total mass `ln \int phi(x) dx`. Under the weight
    /// conventions this is exactly `log_weight`; it exists only for proper
    /// Gaussians, so a singular covariance or precision errors.
    pub fn log_partition(&self) -> Result<f64> {
        let v = self.covariance().map_err(|_| Error::ImproperGaussian {
            context: "Gaussian::log_partition",
        })?;
        cholesky(v, "Gaussian::log_partition")?;
        Ok(self.log_weight)
    }
}
