//! Simultaneous orthogonal matching pursuit: the greedy joint-recovery
//! baseline. One atom is selected per step by the l2 norm of its normalized
//! correlation with the residual across all channels, then all channels are
//! re-fit by least squares on the selected set.

use nalgebra::DMatrix;

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;

#[derive(Debug, Clone, Copy)]
pub struct SompOptions {
    /// Hard cap on the number of selected atoms.
    pub max_atoms: usize,
    /// Stop once ||R||_F / ||Y||_F drops below this.
    pub residual_tol: f64,
}

impl SompOptions {
    /// Classical defaults for an N-row system: at most N/2 atoms,
    /// residual tolerance 1e-6.
    pub fn for_measurements(n_rows: usize) -> Self {
        SompOptions {
            max_atoms: (n_rows / 2).max(1),
            residual_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SompResult {
    /// M x L estimate, nonzero only on the selected rows.
    pub x_hat: MultichannelFrame,
    /// Selected atom indices in selection order.
    pub support: Vec<usize>,
    /// ||R||_F before the first selection and after each refit.
    pub residual_trace: Vec<f64>,
    /// True when selection stopped because the chosen columns lost rank;
    /// the offending atom is discarded.
    pub rank_deficient: bool,
}

fn least_squares(
    a_eff: &DMatrix<f64>,
    support: &[usize],
    y: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let n = a_eff.nrows();
    let mut a_s = DMatrix::zeros(n, support.len());
    for (k, &j) in support.iter().enumerate() {
        a_s.set_column(k, &a_eff.column(j));
    }
    let svd = a_s.svd(true, true);
    let sv_max = svd.singular_values.max();
    let eps = sv_max * n.max(support.len()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let coeffs = svd
        .solve(y, eps)
        .map_err(|e| StcsError::SingularSystem(e.to_string()))?;
    Ok((coeffs, rank))
}

pub fn somp(y: &MultichannelFrame, a_eff: &DMatrix<f64>, opts: &SompOptions) -> Result<SompResult> {
    let (n, m) = a_eff.shape();
    let l = y.n_channels();
    if y.n_samples() != n {
        return Err(StcsError::DimensionMismatch(format!(
            "measurements have {} rows but the operator has {}",
            y.n_samples(),
            n
        )));
    }
    if opts.max_atoms == 0 || opts.max_atoms > m {
        return Err(StcsError::InvalidValue(format!(
            "max_atoms must be in 1..={m}, got {}",
            opts.max_atoms
        )));
    }
    if opts.residual_tol.is_nan() || opts.residual_tol < 0.0 {
        return Err(StcsError::InvalidValue(format!(
            "residual_tol must be nonnegative, got {}",
            opts.residual_tol
        )));
    }
    let col_norms: Vec<f64> = (0..m).map(|j| a_eff.column(j).norm()).collect();
    if let Some(j) = col_norms.iter().position(|&v| v == 0.0) {
        return Err(StcsError::InvalidValue(format!(
            "operator column {j} is identically zero"
        )));
    }

    let y_norm = y.values().norm();
    let mut residual = y.values().clone();
    let mut trace = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DMatrix::zeros(0, l);
    let mut rank_deficient = false;

    if y_norm > 0.0 {
        let mut selected = vec![false; m];
        while support.len() < opts.max_atoms {
            let mut best = None;
            let mut best_score = -1.0;
            for j in 0..m {
                if selected[j] {
                    continue;
                }
                let score = (a_eff.column(j).transpose() * &residual).norm() / col_norms[j];
                if score > best_score {
                    best_score = score;
                    best = Some(j);
                }
            }
            let j = best.expect("max_atoms <= m leaves a candidate");
            support.push(j);
            selected[j] = true;
            let (c, rank) = least_squares(a_eff, &support, y.values())?;
            if rank < support.len() {
                support.pop();
                rank_deficient = true;
                if !support.is_empty() {
                    let (prev, _) = least_squares(a_eff, &support, y.values())?;
                    coeffs = prev;
                }
                break;
            }
            coeffs = c;
            let mut a_s = DMatrix::zeros(n, support.len());
            for (k, &idx) in support.iter().enumerate() {
                a_s.set_column(k, &a_eff.column(idx));
            }
            residual = y.values() - &a_s * &coeffs;
            trace.push(residual.norm());
            if residual.norm() <= opts.residual_tol * y_norm {
                break;
            }
        }
    }

    let mut x = DMatrix::zeros(m, l);
    for (k, &j) in support.iter().enumerate() {
        x.set_row(j, &coeffs.row(k));
    }
    Ok(SompResult {
        x_hat: MultichannelFrame::new(x)?,
        support,
        residual_trace: trace,
        rank_deficient,
    })
}
