//! Dense symmetric-matrix helpers shared by the Gaussian and control code.
//!
//! Everything here is small and explicit: dimensions stay below ~100, so
//! clarity wins over asymptotics. Symmetric results are re-symmetrized as
//! `(M + M^T) / 2` after every update, and positive semidefiniteness is
//! accepted down to eigenvalues of `-1e-10 * ||M||_2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_RTOL: f64 = 1e-10;

/// Eigenvalue floor for PSD checks, relative to the spectral norm.
pub const PSD_RTOL: f64 = 1e-10;

/// Pivot-ratio floor for accepting a Cholesky factorization. Rank-deficient
/// matrices often factor "successfully" with trailing pivots at roundoff
/// level, and solves through those pivots amplify noise by ~1e16; a pivot
/// this far below the largest one marks the matrix as singular instead.
pub const CHOLESKY_PIVOT_RTOL: f64 = 1e-7;

/// Residual bound (relative to `1 + ||h||_inf`) for accepting a solve of
/// `W x = h`.
pub const SOLVE_RESIDUAL_RTOL: f64 = 1e-6;

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Errors unless `M` is square and symmetric within [`SYMMETRY_RTOL`]
/// (relative to its largest entry).
pub fn check_symmetric(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context,
            detail: format!("expected square matrix, found {}x{}", m.nrows(), m.ncols()),
        });
    }
    let scale = 1.0 + m.amax();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::NotSymmetric { context });
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, unordered.
fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().symmetric_eigenvalues()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).min()
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).abs().max()
}

/// Errors unless the symmetric matrix `M` is PSD within [`PSD_RTOL`].
pub fn check_psd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    check_symmetric(m, context)?;
    let eigs = symmetric_eigenvalues(m);
    let min_eig = eigs.min();
    if min_eig < -PSD_RTOL * eigs.abs().max() {
        return Err(Error::NotPositiveSemidefinite { context, min_eig });
    }
    Ok(())
}

/// Cholesky factorization, or a `Singular` error when `M` is not positive
/// definite to working precision (including factorizations that technically
/// complete but whose pivot ratio falls below [`CHOLESKY_PIVOT_RTOL`]).
pub fn cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::Singular { context })?;
    let pivots = chol.l_dirty().diagonal();
    if pivots.min() <= CHOLESKY_PIVOT_RTOL * pivots.max() {
        return Err(Error::Singular { context });
    }
    Ok(chol)
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, context)?.inverse()))
}

/// `log det M` for symmetric positive definite `M`.
pub fn spd_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Least-squares solution of `W x = h` for symmetric PSD `W`, via SVD.
///
/// Used to place the mean of a degenerate Gaussian; callers are expected to
/// pass a consistent right-hand side (`h` in the range of `W`).
pub fn psd_least_squares(w: &DMatrix<f64>, h: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let svd = w.clone().svd(true, true);
    let x = svd
        .solve(h, PSD_RTOL * (1.0 + w.amax()))
        .map_err(|_| Error::Singular { context })?
        .column(0)
        .into_owned();
    let residual = (w * &x - h).amax();
    if residual > SOLVE_RESIDUAL_RTOL * (1.0 + h.amax()) {
        return Err(Error::Singular { context });
    }
    Ok(x)
}

/// A solved mean and, when the solve went through a full-rank
/// factorization, that factorization.
pub type SolvedMean = (DVector<f64>, Option<Cholesky<f64, Dyn>>);

/// Mean of an information-form Gaussian: solves `W mean = h`, preferring a
/// Cholesky solve and falling back to [`psd_least_squares`] when `W` is
/// singular or the solve fails to reproduce `h`. Returns the factorization
/// only when the solve went through it, so callers can reuse it for
/// normalization constants.
pub fn mean_solve(w: &DMatrix<f64>, h: &DVector<f64>, context: &'static str) -> Result<SolvedMean> {
    if let Ok(chol) = cholesky(w, context) {
        let mean = chol.solve(h);
        if (w * &mean - h).amax() <= SOLVE_RESIDUAL_RTOL * (1.0 + h.amax()) {
            return Ok((mean, Some(chol)));
        }
    }
    Ok((psd_least_squares(w, h, context)?, None))
}

/// `(W + U C V)^{-1}` by the Woodbury identity
/// `W^{-1} - W^{-1} U (C^{-1} + V W^{-1} U)^{-1} V W^{-1}`.
///
/// Only `W` (n-by-n) and `C` (k-by-k) are inverted, so the identity pays off
/// when `k < n` or when `W^{-1}` is already cheap. Errors when `W`, `C` or
/// the inner term is singular.
pub fn woodbury_inverse(
    w: &DMatrix<f64>,
    u: &DMatrix<f64>,
    c: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let k = c.nrows();
    if !w.is_square() || !c.is_square() || u.nrows() != n || u.ncols() != k || v.nrows() != k || v.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "woodbury_inverse",
            detail: format!(
                "W {}x{}, U {}x{}, C {}x{}, V {}x{}",
                w.nrows(),
                w.ncols(),
                u.nrows(),
                u.ncols(),
                c.nrows(),
                c.ncols(),
                v.nrows(),
                v.ncols()
            ),
        });
    }
    let w_lu = w.clone().lu();
    let w_inv_u = w_lu.solve(u).ok_or(Error::Singular {
        context: "woodbury_inverse: W",
    })?;
    let c_inv = c.clone().lu().try_inverse().ok_or(Error::Singular {
        context: "woodbury_inverse: C",
    })?;
    let inner = c_inv + v * &w_inv_u;
    let inner_inv = inner.lu().try_inverse().ok_or(Error::Singular {
        context: "woodbury_inverse: inner term",
    })?;
    let w_inv = w_lu.try_inverse().ok_or(Error::Singular {
        context: "woodbury_inverse: W",
    })?;
    Ok(&w_inv - &w_inv_u * inner_inv * v * &w_inv)
}

/// Parallel sum `(Pa^{-1} + Pb^{-1})^{-1}` computed as `Pa (Pa + Pb)^{-1} Pb`,
/// which never inverts `Pa` or `Pb` on their own and therefore tolerates
/// singular inputs as long as the sum is invertible.
pub fn searle_combine(pa: &DMatrix<f64>, pb: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pa.shape() != pb.shape() || !pa.is_square() {
        return Err(Error::DimensionMismatch {
            context: "searle_combine",
            detail: format!("Pa {}x{}, Pb {}x{}", pa.nrows(), pa.ncols(), pb.nrows(), pb.ncols()),
        });
    }
    let sum_lu = (pa + pb).lu();
    let solved = sum_lu.solve(pb).ok_or(Error::Singular {
        context: "searle_combine: Pa + Pb",
    })?;
    Ok(symmetrize(&(pa * solved)))
}
