//! Orthonormal DCT dictionary. Signals are synthesized as x = D z and
//! analyzed as z = D^T x; orthonormality makes the two directions mutually
//! consistent and preserves norms across domains.

use nalgebra::DMatrix;

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;
use crate::measurement::MeasurementMatrix;

/// Square orthonormal M x M basis whose columns are DCT-II vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    values: DMatrix<f64>,
}

/// Build the orthonormal DCT-II dictionary of size m:
/// D[j,k] = c_k cos(pi (2j+1) k / (2m)) with c_0 = sqrt(1/m) and
/// c_k = sqrt(2/m) for k >= 1.
pub fn dct_dictionary(m: usize) -> Result<Dictionary> {
    if m == 0 {
        return Err(StcsError::InvalidDimension(
            "dictionary size must be at least 1".into(),
        ));
    }
    let mf = m as f64;
    let c0 = (1.0 / mf).sqrt();
    let ck = (2.0 / mf).sqrt();
    let values = DMatrix::from_fn(m, m, |j, k| {
        let scale = if k == 0 { c0 } else { ck };
        scale * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * mf)).cos()
    });
    Ok(Dictionary { values })
}

impl Dictionary {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Coefficients of a frame: Z = D^T X.
    pub fn analyze(&self, x: &MultichannelFrame) -> Result<MultichannelFrame> {
        self.check_samples(x)?;
        MultichannelFrame::new(self.values.transpose() * x.values())
    }

    /// Frame from coefficients: X = D Z.
    pub fn synthesize(&self, z: &MultichannelFrame) -> Result<MultichannelFrame> {
        self.check_samples(z)?;
        MultichannelFrame::new(&self.values * z.values())
    }

    fn check_samples(&self, f: &MultichannelFrame) -> Result<()> {
        if self.size() != f.n_samples() {
            return Err(StcsError::DimensionMismatch(format!(
                "dictionary size {} but frame has {} samples",
                self.size(),
                f.n_samples()
            )));
        }
        Ok(())
    }
}

/// Dense product Phi D: the operator recovery actually sees when signals are
/// reconstructed in the transformed domain. Exploits Phi's two-entry columns,
/// so the cost is O(2 M^2) instead of O(N M^2).
pub fn effective_matrix(phi: &MeasurementMatrix, d: &Dictionary) -> Result<DMatrix<f64>> {
    if phi.n_cols() != d.size() {
        return Err(StcsError::DimensionMismatch(format!(
            "operator has {} columns but dictionary size is {}",
            phi.n_cols(),
            d.size()
        )));
    }
    let m = d.size();
    let mut out = DMatrix::zeros(phi.n_rows(), m);
    let dm = d.matrix();
    for (c, pair) in phi.column_entries().iter().enumerate() {
        for k in 0..m {
            let v = dm[(c, k)];
            out[(pair[0], k)] += v;
            out[(pair[1], k)] += v;
        }
    }
    Ok(out)
}
