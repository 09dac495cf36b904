//! Joint recovery of multichannel block-sparse signals by EM-learned
//! Gaussian priors.
//!
//! The model places N(0, gamma_i A_i) on each coefficient block (shared
//! across channels) and couples channels through an L x L matrix B, so the
//! prior over the whole frame is N(0, Pi (x) B) with Pi the block diagonal
//! of the gamma_i A_i. Each iteration re-estimates B from the current
//! frame, computes the posterior of the spatially whitened coefficients,
//! re-estimates gamma_i and A_i, prunes blocks whose scale collapses, and
//! rebuilds the frame as mu B^{1/2}.

use nalgebra::{Cholesky, DMatrix, Dyn, LU};

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;
use crate::linalg::{solve_spd, spd_condition_number, symmetric_inv_sqrt, symmetric_sqrt};
use crate::partition::BlockPartition;

/// How the intra-block matrices are regularized between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AConstraint {
    /// Keep the raw EM update. Only sensible for short runs and formula
    /// checks: the unconstrained estimate has far more parameters than the
    /// data supports.
    Free,
    /// Project each update onto Toeplitz(1, r, r^2, ...) with a single
    /// AR(1) coefficient pooled across the active blocks.
    ToeplitzAr1,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the relative Frobenius change of mu,
    /// checked from the second iteration on: with the unit initial prior
    /// the first posterior reproduces the least squares start up to
    /// O(lambda) whenever the channel coupling has nothing to rotate, so
    /// an iteration-one check would stop single-channel runs immediately.
    pub tolerance: f64,
    /// Regularizer added to the measurement covariance; kept fixed.
    pub lambda: f64,
    /// Blocks with gamma below this fraction of the largest gamma are
    /// zeroed and frozen.
    pub prune_gamma: f64,
    pub constrain_a: AConstraint,
    /// Relative ridge added to the raw channel covariance before it is
    /// normalized, so its inverse root always exists.
    pub b_ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 40,
            tolerance: 1e-8,
            lambda: 1e-10,
            prune_gamma: 1e-4,
            constrain_a: AConstraint::ToeplitzAr1,
            b_ridge: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(StcsError::InvalidValue(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("tolerance", self.tolerance),
            ("lambda", self.lambda),
            ("prune_gamma", self.prune_gamma),
            ("b_ridge", self.b_ridge),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(StcsError::InvalidValue(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Hyperparameters and posterior moments carried between iterations.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Per-block scales; zero on pruned blocks.
    pub gamma: Vec<f64>,
    /// Per-block intra-block matrices; identity placeholder on pruned blocks.
    pub a_blocks: Vec<DMatrix<f64>>,
    /// Channel coupling, unit Frobenius norm.
    pub b: DMatrix<f64>,
    /// Posterior mean of the whitened coefficients, M x L.
    pub mu: DMatrix<f64>,
    /// Diagonal blocks of the posterior covariance.
    pub sigma: Vec<DMatrix<f64>>,
    /// False once a block has been pruned.
    pub active_mask: Vec<bool>,
    /// The regularizer the moments were computed with.
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub x_hat: MultichannelFrame,
    pub iterations: usize,
    pub converged: bool,
    pub final_state: SolverState,
    /// Relative Frobenius change of mu at each iteration.
    pub trace: Vec<f64>,
    /// Iterations where the channel covariance update had no usable data
    /// and the previous B was kept.
    pub b_frozen_iterations: Vec<usize>,
}

fn check_shapes(
    y: &MultichannelFrame,
    a_eff: &DMatrix<f64>,
    partition: &BlockPartition,
) -> Result<()> {
    if y.n_samples() != a_eff.nrows() {
        return Err(StcsError::DimensionMismatch(format!(
            "measurements have {} rows but the operator has {}",
            y.n_samples(),
            a_eff.nrows()
        )));
    }
    if partition.total() != a_eff.ncols() {
        return Err(StcsError::DimensionMismatch(format!(
            "partition covers {} rows but the operator has {} columns",
            partition.total(),
            a_eff.ncols()
        )));
    }
    Ok(())
}

/// Starting point: minimum-norm least squares for the frame, unit scales,
/// identity intra-block matrices, identity channel coupling scaled to unit
/// Frobenius norm, zero posterior covariance.
pub fn init_state(
    y: &MultichannelFrame,
    a_eff: &DMatrix<f64>,
    partition: &BlockPartition,
    opts: &SolverOptions,
) -> Result<SolverState> {
    opts.validate()?;
    check_shapes(y, a_eff, partition)?;
    let gram = a_eff * a_eff.transpose();
    let cond = spd_condition_number(&gram);
    if cond.is_nan() || cond > 1e12 {
        return Err(StcsError::IllConditioned(format!(
            "gram matrix condition number {cond:.3e} exceeds 1e12"
        )));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| StcsError::IllConditioned("gram matrix is not positive definite".into()))?;
    let x0 = a_eff.transpose() * chol.solve(y.values());

    let l = y.n_channels();
    let g = partition.n_blocks();
    Ok(SolverState {
        gamma: vec![1.0; g],
        a_blocks: partition
            .sizes()
            .iter()
            .map(|&d| DMatrix::identity(d, d))
            .collect(),
        b: DMatrix::identity(l, l) / (l as f64).sqrt(),
        mu: x0,
        sigma: partition
            .sizes()
            .iter()
            .map(|&d| DMatrix::zeros(d, d))
            .collect(),
        active_mask: vec![true; g],
        lambda: opts.lambda,
    })
}

fn update_spatial_b_impl(
    state: &SolverState,
    x_current: &DMatrix<f64>,
    partition: &BlockPartition,
    ridge: f64,
) -> (DMatrix<f64>, bool) {
    let l = state.b.nrows();
    let mut raw = DMatrix::zeros(l, l);
    let mut contributed = false;
    for (i, range) in partition.iter() {
        if !state.active_mask[i] || state.gamma[i] <= 0.0 {
            continue;
        }
        let xi = x_current.rows(range.start, range.len()).into_owned();
        if xi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let ainv_xi = solve_spd(&state.a_blocks[i], &xi);
        raw += xi.transpose() * ainv_xi / state.gamma[i];
        contributed = true;
    }
    if !contributed {
        return (state.b.clone(), true);
    }
    let trace = raw.trace();
    if ridge > 0.0 && trace > 0.0 {
        let scaled = ridge * trace / l as f64;
        for k in 0..l {
            raw[(k, k)] += scaled;
        }
    }
    let norm = raw.norm();
    if !norm.is_finite() || norm == 0.0 {
        return (state.b.clone(), true);
    }
    let b = raw / norm;
    ((&b + b.transpose()) * 0.5, false)
}

/// Re-estimate the channel coupling from the current frame:
/// the normalized sum of gamma_i^{-1} X_[i]^T A_i^{-1} X_[i] over active
/// blocks, plus a relative ridge. Returns the previous B when no block can
/// contribute.
pub fn update_spatial_b(
    state: &SolverState,
    x_current: &DMatrix<f64>,
    partition: &BlockPartition,
    ridge: f64,
) -> DMatrix<f64> {
    update_spatial_b_impl(state, x_current, partition, ridge).0
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(Box<LU<f64, Dyn, Dyn>>),
}

impl Factor {
    fn new(h: DMatrix<f64>) -> Result<Self> {
        match h.clone().cholesky() {
            Some(c) => Ok(Factor::Chol(c)),
            None => {
                let lu = h.lu();
                if lu.is_invertible() {
                    Ok(Factor::Lu(Box::new(lu)))
                } else {
                    Err(StcsError::SingularSystem(
                        "the regularized measurement covariance cannot be factorized".into(),
                    ))
                }
            }
        }
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Factor::Chol(c) => Ok(c.solve(rhs)),
            Factor::Lu(lu) => lu.solve(rhs).ok_or_else(|| {
                StcsError::SingularSystem(
                    "the regularized measurement covariance cannot be solved".into(),
                )
            }),
        }
    }
}

/// Posterior mean and per-block covariance of the whitened coefficients:
/// mu = Pi Phi^T (lambda I + Phi Pi Phi^T)^{-1} Y B^{-1/2} and
/// Sigma_[i] the diagonal blocks of Pi - Pi Phi^T (...)^{-1} Phi Pi,
/// with Pi assembled from active blocks only. Everything is computed on
/// the active columns; pruned blocks yield exactly zero rows and blocks.
pub fn posterior_moments(
    y: &MultichannelFrame,
    a_eff: &DMatrix<f64>,
    state: &SolverState,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let n = a_eff.nrows();
    let m = a_eff.ncols();
    let l = y.n_channels();
    if y.n_samples() != n {
        return Err(StcsError::DimensionMismatch(format!(
            "measurements have {} rows but the operator has {}",
            y.n_samples(),
            n
        )));
    }
    if state.b.nrows() != l || state.b.ncols() != l {
        return Err(StcsError::DimensionMismatch(format!(
            "channel coupling is {}x{} but the frame has {} channels",
            state.b.nrows(),
            state.b.ncols(),
            l
        )));
    }
    let block_total: usize = state.a_blocks.iter().map(|a| a.nrows()).sum();
    if block_total != m {
        return Err(StcsError::DimensionMismatch(format!(
            "blocks cover {block_total} rows but the operator has {m} columns"
        )));
    }

    // Offsets of every block, and the layout of the active columns.
    let mut offsets = Vec::with_capacity(state.a_blocks.len());
    let mut start = 0;
    for a in &state.a_blocks {
        offsets.push(start);
        start += a.nrows();
    }
    let active: Vec<usize> = (0..state.a_blocks.len())
        .filter(|&i| state.active_mask[i] && state.gamma[i] > 0.0)
        .collect();
    let m_act: usize = active.iter().map(|&i| state.a_blocks[i].nrows()).sum();

    let mut phi_act = DMatrix::zeros(n, m_act);
    let mut phi_pi_act = DMatrix::zeros(n, m_act);
    let mut act_start = 0;
    for &i in &active {
        let d = state.a_blocks[i].nrows();
        let phi_i = a_eff.columns(offsets[i], d);
        phi_act.columns_mut(act_start, d).copy_from(&phi_i);
        let prior_i = &state.a_blocks[i] * state.gamma[i];
        phi_pi_act
            .columns_mut(act_start, d)
            .copy_from(&(phi_i * prior_i));
        act_start += d;
    }

    let mut h = &phi_pi_act * phi_act.transpose();
    h = (&h + h.transpose()) * 0.5;
    for k in 0..n {
        h[(k, k)] += state.lambda;
    }
    let factor = Factor::new(h)?;

    let y_white = y.values() * symmetric_inv_sqrt(&state.b)?;
    let w = factor.solve(&y_white)?;

    let mut mu = DMatrix::zeros(m, l);
    let mut sigma = Vec::with_capacity(state.a_blocks.len());
    let mut act_start = 0;
    for (i, a) in state.a_blocks.iter().enumerate() {
        let d = a.nrows();
        if !(state.active_mask[i] && state.gamma[i] > 0.0) {
            sigma.push(DMatrix::zeros(d, d));
            continue;
        }
        let phi_pi_i = phi_pi_act.columns(act_start, d);
        mu.rows_mut(offsets[i], d)
            .copy_from(&(phi_pi_i.transpose() * &w));
        let solved = factor.solve(&phi_pi_i.into_owned())?;
        let correction = phi_pi_act.columns(act_start, d).transpose() * solved;
        let mut s = a * state.gamma[i] - correction;
        s = (&s + s.transpose()) * 0.5;
        sigma.push(s);
        act_start += d;
    }
    Ok((mu, sigma))
}

/// Per-block scale update: the average of Tr[A_i^{-1}(Sigma_[i] +
/// mu_[i]l mu_[i]l^T)] over channels, divided by the block size.
pub fn update_gamma(
    mu: &DMatrix<f64>,
    sigma: &[DMatrix<f64>],
    a_blocks: &[DMatrix<f64>],
    partition: &BlockPartition,
    n_channels: usize,
) -> Vec<f64> {
    let l = n_channels as f64;
    partition
        .iter()
        .map(|(i, range)| {
            let d = range.len();
            let mu_i = mu.rows(range.start, d).into_owned();
            if mu_i.iter().all(|&v| v == 0.0) && sigma[i].iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let ainv_sigma = solve_spd(&a_blocks[i], &sigma[i]);
            let ainv_mu = solve_spd(&a_blocks[i], &mu_i);
            let quad = mu_i.component_mul(&ainv_mu).sum();
            ((l * ainv_sigma.trace() + quad) / (l * d as f64)).max(0.0)
        })
        .collect()
}

/// Per-block second-moment update (Sigma_[i] + mu_[i]l mu_[i]l^T averaged
/// over channels, divided by gamma_i), optionally projected onto a shared
/// AR(1) Toeplitz form. Blocks with zero gamma get an identity placeholder.
pub fn update_a_blocks(
    mu: &DMatrix<f64>,
    sigma: &[DMatrix<f64>],
    gamma: &[f64],
    partition: &BlockPartition,
    n_channels: usize,
    constrain: AConstraint,
) -> Vec<DMatrix<f64>> {
    let l = n_channels as f64;
    let raw: Vec<Option<DMatrix<f64>>> = partition
        .iter()
        .map(|(i, range)| {
            if gamma[i] <= 0.0 {
                return None;
            }
            let d = range.len();
            let mu_i = mu.rows(range.start, d);
            let second = &sigma[i] + mu_i * mu_i.transpose() / l;
            let a_hat = second / gamma[i];
            let a_hat_t = a_hat.transpose();
            Some((a_hat + a_hat_t) * 0.5)
        })
        .collect();

    match constrain {
        AConstraint::Free => raw
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                a.unwrap_or_else(|| DMatrix::identity(partition.size(i), partition.size(i)))
            })
            .collect(),
        AConstraint::ToeplitzAr1 => {
            let mut diag_sum = 0.0;
            let mut diag_count = 0usize;
            let mut super_sum = 0.0;
            let mut super_count = 0usize;
            for a in raw.iter().flatten() {
                let d = a.nrows();
                for p in 0..d {
                    diag_sum += a[(p, p)];
                    diag_count += 1;
                }
                for p in 0..d.saturating_sub(1) {
                    super_sum += a[(p, p + 1)];
                    super_count += 1;
                }
            }
            let r = if super_count == 0 || diag_count == 0 || diag_sum <= 0.0 {
                0.0
            } else {
                let ratio = (super_sum / super_count as f64) / (diag_sum / diag_count as f64);
                if ratio.is_finite() {
                    ratio.signum() * ratio.abs().min(0.99)
                } else {
                    0.0
                }
            };
            raw.into_iter()
                .enumerate()
                .map(|(i, a)| {
                    let d = partition.size(i);
                    if a.is_some() {
                        crate::linalg::ar1_toeplitz(d, r)
                    } else {
                        DMatrix::identity(d, d)
                    }
                })
                .collect()
        }
    }
}

/// Fold the channel coupling back in: X = mu B^{1/2}.
pub fn reconstruct(mu: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<MultichannelFrame> {
    let root = symmetric_sqrt(b)?;
    MultichannelFrame::new(mu * root)
}

/// One EM recovery, advanced an iteration at a time so callers can inspect
/// the state between updates.
pub struct EmSolver<'a> {
    y: &'a MultichannelFrame,
    a_eff: &'a DMatrix<f64>,
    partition: &'a BlockPartition,
    opts: SolverOptions,
    state: SolverState,
    x_current: DMatrix<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
    b_frozen_iterations: Vec<usize>,
}

impl<'a> EmSolver<'a> {
    pub fn new(
        y: &'a MultichannelFrame,
        a_eff: &'a DMatrix<f64>,
        partition: &'a BlockPartition,
        opts: SolverOptions,
    ) -> Result<Self> {
        let state = init_state(y, a_eff, partition, &opts)?;
        let x_current = state.mu.clone();
        Ok(EmSolver {
            y,
            a_eff,
            partition,
            opts,
            state,
            x_current,
            iterations: 0,
            converged: false,
            trace: Vec::new(),
            b_frozen_iterations: Vec::new(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// The frame estimate after the last completed iteration (the least
    /// squares start before the first).
    pub fn x_current(&self) -> &DMatrix<f64> {
        &self.x_current
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn is_done(&self) -> bool {
        self.converged || self.iterations >= self.opts.max_iterations
    }

    /// Run one iteration; returns the relative change of mu.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.iterations + 1;
        let (b_new, frozen) = update_spatial_b_impl(
            &self.state,
            &self.x_current,
            self.partition,
            self.opts.b_ridge,
        );
        if frozen {
            self.b_frozen_iterations.push(it);
        }
        self.state.b = b_new;

        let (mut mu_new, mut sigma_new) = posterior_moments(self.y, self.a_eff, &self.state)?;
        if mu_new.iter().any(|v| !v.is_finite()) {
            return Err(StcsError::Divergence {
                iteration: it,
                detail: "posterior mean has non-finite entries".into(),
            });
        }

        let mut gamma_new = update_gamma(
            &mu_new,
            &sigma_new,
            &self.state.a_blocks,
            self.partition,
            self.y.n_channels(),
        );
        for (i, g) in gamma_new.iter_mut().enumerate() {
            if !self.state.active_mask[i] {
                *g = 0.0;
            }
        }
        let gamma_max = gamma_new.iter().cloned().fold(0.0, f64::max);
        let threshold = self.opts.prune_gamma * gamma_max;
        for (i, range) in self.partition.iter() {
            if self.state.active_mask[i] && gamma_new[i] < threshold {
                self.state.active_mask[i] = false;
                gamma_new[i] = 0.0;
            }
            if !self.state.active_mask[i] {
                mu_new.rows_mut(range.start, range.len()).fill(0.0);
                sigma_new[i] = DMatrix::zeros(range.len(), range.len());
            }
        }

        self.state.a_blocks = update_a_blocks(
            &mu_new,
            &sigma_new,
            &gamma_new,
            self.partition,
            self.y.n_channels(),
            self.opts.constrain_a,
        );

        let denom = self.state.mu.norm();
        let delta = (&mu_new - &self.state.mu).norm();
        let rel = if denom > 0.0 {
            delta / denom
        } else if delta == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.trace.push(rel);
        self.state.mu = mu_new;
        self.state.sigma = sigma_new;
        self.state.gamma = gamma_new;

        let root = symmetric_sqrt(&self.state.b)?;
        self.x_current = &self.state.mu * root;
        if self.x_current.iter().any(|v| !v.is_finite()) {
            return Err(StcsError::Divergence {
                iteration: it,
                detail: "frame estimate has non-finite entries".into(),
            });
        }
        self.iterations = it;
        if it > 1 && rel < self.opts.tolerance {
            self.converged = true;
        }
        Ok(rel)
    }

    pub fn finish(self) -> Result<RecoveryResult> {
        Ok(RecoveryResult {
            x_hat: MultichannelFrame::new(self.x_current)?,
            iterations: self.iterations,
            converged: self.converged,
            final_state: self.state,
            trace: self.trace,
            b_frozen_iterations: self.b_frozen_iterations,
        })
    }
}

/// Recover all channels jointly.
pub fn solve(
    y: &MultichannelFrame,
    a_eff: &DMatrix<f64>,
    partition: &BlockPartition,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    let mut solver = EmSolver::new(y, a_eff, partition, *opts)?;
    while !solver.is_done() {
        solver.step()?;
    }
    solver.finish()
}

/// Recover each channel independently and concatenate. The reference
/// behavior joint recovery is compared against; `iterations` is the
/// maximum over channels, `converged` requires every channel to converge,
/// and `final_state`, `trace`, and `b_frozen_iterations` are the last
/// channel's.
pub fn solve_per_channel(
    y: &MultichannelFrame,
    a_eff: &DMatrix<f64>,
    partition: &BlockPartition,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    check_shapes(y, a_eff, partition)?;
    let mut x = DMatrix::zeros(a_eff.ncols(), y.n_channels());
    let mut iterations = 0;
    let mut converged = true;
    let mut last: Option<RecoveryResult> = None;
    for ch in 0..y.n_channels() {
        let y_ch = y.channel(ch)?;
        let result = solve(&y_ch, a_eff, partition, opts)?;
        x.set_column(ch, &result.x_hat.values().column(0));
        iterations = iterations.max(result.iterations);
        converged &= result.converged;
        last = Some(result);
    }
    let last = last.expect("frames have at least one channel");
    Ok(RecoveryResult {
        x_hat: MultichannelFrame::new(x)?,
        iterations,
        converged,
        final_state: last.final_state,
        trace: last.trace,
        b_frozen_iterations: last.b_frozen_iterations,
    })
}
