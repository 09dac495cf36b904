//! Small dense-matrix helpers shared by the solver and the generator:
//! symmetric matrix roots, Kronecker products, eigenvalue probes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, StcsError};

/// Eigenvalues below this are treated as zero when inverting a root.
pub const EIG_CLAMP: f64 = 1e-12;

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(StcsError::InvalidDimension(format!(
            "symmetric root requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(StcsError::InvalidValue(
            "matrix contains non-finite entries".into(),
        ));
    }
    // Symmetrize first so rounding asymmetry cannot perturb the decomposition.
    let sym = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym))
}

/// Symmetric square root of a symmetric PSD matrix via eigendecomposition.
/// Negative eigenvalues from rounding are clamped to zero.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(rebuild(&eig.eigenvectors, &roots))
}

/// Symmetric inverse square root. Eigenvalues are clamped at `EIG_CLAMP`
/// before inversion so a rank-deficient input still yields a finite result.
pub fn symmetric_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let roots = eig.eigenvalues.map(|v| 1.0 / v.max(EIG_CLAMP).sqrt());
    Ok(rebuild(&eig.eigenvectors, &roots))
}

fn rebuild(vectors: &DMatrix<f64>, scaled: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    let mut scaled_vectors = vectors.clone();
    for (j, mut col) in scaled_vectors.column_iter_mut().enumerate() {
        col *= scaled[j];
    }
    let out = &scaled_vectors * vectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Dense Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra * rb, ca * cb);
    for ia in 0..ra {
        for ja in 0..ca {
            let v = a[(ia, ja)];
            if v == 0.0 {
                continue;
            }
            out.view_mut((ia * rb, ja * cb), (rb, cb))
                .copy_from(&(b * v));
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Condition number of a symmetric PSD matrix (ratio of extreme eigenvalues).
/// Returns infinity when the smallest eigenvalue is not strictly positive.
pub fn spd_condition_number(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// AR(1) Toeplitz correlation matrix `T[p,q] = r^|p-q|`, unit diagonal.
pub fn ar1_toeplitz(size: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(size, size, |p, q| {
        r.powi((p as i64 - q as i64).unsigned_abs() as i32)
    })
}

/// Solve `a * x = rhs` for symmetric positive definite `a`, falling back to
/// a clamped-eigenvalue pseudo-solve when the Cholesky factorization fails
/// (a nearly singular `a` from accumulated rounding).
pub(crate) fn solve_spd(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return chol.solve(rhs);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let inv = eig.eigenvalues.map(|v| 1.0 / v.max(EIG_CLAMP));
    rebuild(&eig.eigenvectors, &inv) * rhs
}
