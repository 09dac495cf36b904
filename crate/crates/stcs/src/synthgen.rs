//! Synthetic block-sparse frames drawn exactly from the solver's prior, so
//! recovery experiments have a ground truth whose hyperparameters are known
//! by construction.
//!
//! Active blocks are sampled as vec(X_[i]^T) ~ N(0, (gamma_i A_i) (x) B)
//! with AR(1) Toeplitz shapes for both the intra-block matrix A_i and the
//! cross-channel matrix B; inactive blocks are exactly zero.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;
use crate::linalg::{ar1_toeplitz, kron};
use crate::partition::BlockPartition;

/// Which blocks carry signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActiveBlocks {
    /// Draw this many block indices uniformly without replacement.
    Count(usize),
    /// Use exactly these block indices.
    Indices(Vec<usize>),
}

/// Everything needed to draw one frame from the prior.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub partition: BlockPartition,
    pub n_channels: usize,
    pub active_blocks: ActiveBlocks,
    /// AR(1) coefficient of each block's intra-block matrix, |r| < 1.
    pub temporal_corr: f64,
    /// AR(1) coefficient of the cross-channel matrix, |r| < 1.
    pub spatial_corr: f64,
    /// Active-block scales gamma_i are drawn uniformly from this range.
    pub gamma_range: (f64, f64),
    pub seed: u64,
}

/// The hyperparameters a frame was drawn with. Inactive blocks carry
/// gamma 0 and an identity placeholder in `a_blocks`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub gamma: Vec<f64>,
    pub a_blocks: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    /// Sorted indices of the active blocks.
    pub active: Vec<usize>,
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(StcsError::InvalidDimension(
                "generator needs at least one channel".into(),
            ));
        }
        for (name, r) in [
            ("temporal_corr", self.temporal_corr),
            ("spatial_corr", self.spatial_corr),
        ] {
            if !r.is_finite() || r.abs() >= 1.0 {
                return Err(StcsError::InvalidValue(format!(
                    "{name} must have magnitude below 1, got {r}"
                )));
            }
        }
        let (lo, hi) = self.gamma_range;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(StcsError::InvalidValue(format!(
                "gamma_range must satisfy 0 < low <= high, got ({lo}, {hi})"
            )));
        }
        let g = self.partition.n_blocks();
        match &self.active_blocks {
            ActiveBlocks::Count(k) if *k > g => Err(StcsError::InvalidValue(format!(
                "cannot activate {k} of {g} blocks"
            ))),
            ActiveBlocks::Indices(idx) => {
                let mut seen = vec![false; g];
                for &i in idx {
                    if i >= g {
                        return Err(StcsError::InvalidValue(format!(
                            "active block index {i} out of range for {g} blocks"
                        )));
                    }
                    if seen[i] {
                        return Err(StcsError::InvalidValue(format!(
                            "active block index {i} listed twice"
                        )));
                    }
                    seen[i] = true;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Cross-channel matrix used by the generator: AR(1) Toeplitz scaled to
/// unit Frobenius norm, matching the solver's identifiability convention.
pub fn spatial_matrix(n_channels: usize, corr: f64) -> DMatrix<f64> {
    let b = ar1_toeplitz(n_channels, corr);
    let norm = b.norm();
    b / norm
}

/// Square factor F of the block covariance: F F^T = (gamma A) (x) B, built
/// from the Cholesky factors of A and B.
pub fn kronecker_factor(gamma: f64, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol_a = a.clone().cholesky().ok_or_else(|| {
        StcsError::InvalidValue("intra-block covariance is not positive definite".into())
    })?;
    let chol_b = b.clone().cholesky().ok_or_else(|| {
        StcsError::InvalidValue("cross-channel covariance is not positive definite".into())
    })?;
    Ok(kron(&chol_a.l(), &chol_b.l()) * gamma.sqrt())
}

/// Draw one frame. Returns the frame together with the hyperparameters it
/// was generated from.
pub fn generate(spec: &GeneratorSpec) -> Result<(MultichannelFrame, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.partition.n_blocks();
    let l = spec.n_channels;

    let mut active = match &spec.active_blocks {
        ActiveBlocks::Count(k) => rand::seq::index::sample(&mut rng, g, *k).into_vec(),
        ActiveBlocks::Indices(idx) => idx.clone(),
    };
    active.sort_unstable();
    let mut is_active = vec![false; g];
    for &i in &active {
        is_active[i] = true;
    }

    let b = spatial_matrix(l, spec.spatial_corr);
    let mut x = DMatrix::zeros(spec.partition.total(), l);
    let mut gamma = vec![0.0; g];
    let mut a_blocks = Vec::with_capacity(g);

    for (i, range) in spec.partition.iter() {
        let d = range.len();
        if !is_active[i] {
            a_blocks.push(DMatrix::identity(d, d));
            continue;
        }
        let a = ar1_toeplitz(d, spec.temporal_corr);
        let (lo, hi) = spec.gamma_range;
        let gi = rng.gen_range(lo..=hi);
        let factor = kronecker_factor(gi, &a, &b)?;
        let eps = DMatrix::from_fn(d * l, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = factor * eps;
        // w is vec(X_[i]^T): index p*L + l holds sample p of channel l.
        for p in 0..d {
            for ch in 0..l {
                x[(range.start + p, ch)] = w[(p * l + ch, 0)];
            }
        }
        gamma[i] = gi;
        a_blocks.push(a);
    }

    let truth = GroundTruth {
        gamma,
        a_blocks,
        b,
        active,
    };
    Ok((MultichannelFrame::new(x)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            partition: BlockPartition::uniform(16, 4).unwrap(),
            n_channels: 2,
            active_blocks: ActiveBlocks::Count(2),
            temporal_corr: 0.9,
            spatial_corr: 0.9,
            gamma_range: (0.5, 2.0),
            seed,
        }
    }

    #[test]
    fn no_active_blocks_gives_exact_zero() {
        let mut spec = base_spec(1);
        spec.active_blocks = ActiveBlocks::Count(0);
        let (x, truth) = generate(&spec).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
        assert!(truth.active.is_empty());
        assert!(truth.gamma.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn inactive_blocks_are_exact_zero_and_active_are_not() {
        let mut spec = base_spec(3);
        spec.active_blocks = ActiveBlocks::Indices(vec![1, 3]);
        let (x, truth) = generate(&spec).unwrap();
        assert_eq!(truth.active, vec![1, 3]);
        for (i, range) in spec.partition.iter() {
            let block = x.values().rows(range.start, range.len()).norm();
            if truth.active.contains(&i) {
                assert!(block > 0.0);
                assert!(truth.gamma[i] >= 0.5 && truth.gamma[i] <= 2.0);
            } else {
                assert_eq!(block, 0.0);
                assert_eq!(truth.gamma[i], 0.0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = base_spec(42);
        let (x1, _) = generate(&spec).unwrap();
        let (x2, _) = generate(&spec).unwrap();
        assert_eq!(x1.values(), x2.values());
        let (x3, _) = generate(&base_spec(43)).unwrap();
        assert_ne!(x1.values(), x3.values());
    }

    #[test]
    fn factor_reproduces_kronecker_covariance() {
        let a = ar1_toeplitz(3, 0.7);
        let b = spatial_matrix(2, 0.4);
        let gamma = 1.7;
        let f = kronecker_factor(gamma, &a, &b).unwrap();
        let target = kron(&(a * gamma), &b);
        assert_relative_eq!(&f * f.transpose(), target, epsilon = 1e-10);
    }

    #[test]
    fn uncorrelated_unit_gamma_entries_have_variance_one_over_sqrt_l() {
        // With both correlations zero and gamma = 1 the covariance of every
        // active entry is the diagonal of I (x) B = I / sqrt(L).
        let l = 2;
        let spec = |seed| GeneratorSpec {
            partition: BlockPartition::uniform(500, 10).unwrap(),
            n_channels: l,
            active_blocks: ActiveBlocks::Count(50),
            temporal_corr: 0.0,
            spatial_corr: 0.0,
            gamma_range: (1.0, 1.0),
            seed,
        };
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..100 {
            let (x, _) = generate(&spec(seed)).unwrap();
            sum_sq += x.values().norm_squared();
            count += x.values().len();
        }
        let variance = sum_sq / count as f64;
        let expected = 1.0 / (l as f64).sqrt();
        assert!(
            (variance - expected).abs() < 0.05 * expected,
            "empirical variance {variance} vs expected {expected}"
        );
    }

    #[test]
    fn empirical_covariance_matches_kronecker_target() {
        // d=2, L=2, both correlations 0.9, gamma pinned to 1: the 4x4
        // covariance of vec(X_[i]^T) must match (A (x) B) entrywise within
        // 3 standard errors over 1e5 block draws.
        let spec = |seed| GeneratorSpec {
            partition: BlockPartition::uniform(2000, 2).unwrap(),
            n_channels: 2,
            active_blocks: ActiveBlocks::Count(1000),
            temporal_corr: 0.9,
            spatial_corr: 0.9,
            gamma_range: (1.0, 1.0),
            seed,
        };
        let target = kron(&ar1_toeplitz(2, 0.9), &spatial_matrix(2, 0.9));
        let n_frames = 100;
        let mut acc = DMatrix::zeros(4, 4);
        let mut draws = 0usize;
        for seed in 0..n_frames {
            let (x, _) = generate(&spec(seed)).unwrap();
            for block in 0..1000 {
                let r = block * 2;
                let v = nalgebra::DVector::from_vec(vec![
                    x.values()[(r, 0)],
                    x.values()[(r, 1)],
                    x.values()[(r + 1, 0)],
                    x.values()[(r + 1, 1)],
                ]);
                acc += &v * v.transpose();
                draws += 1;
            }
        }
        let emp = acc / draws as f64;
        for p in 0..4 {
            for q in 0..4 {
                let se = ((target[(p, p)] * target[(q, q)] + target[(p, q)] * target[(p, q)])
                    / draws as f64)
                    .sqrt();
                assert!(
                    (emp[(p, q)] - target[(p, q)]).abs() < 3.0 * se,
                    "cov[{p},{q}] = {} vs {} (se {se})",
                    emp[(p, q)],
                    target[(p, q)]
                );
            }
        }
    }

    #[test]
    fn blocks_are_uncorrelated() {
        // Same-position entries of neighboring blocks from the covariance
        // test setup: their sample correlation should vanish.
        let spec = |seed| GeneratorSpec {
            partition: BlockPartition::uniform(2000, 2).unwrap(),
            n_channels: 2,
            active_blocks: ActiveBlocks::Count(1000),
            temporal_corr: 0.9,
            spatial_corr: 0.9,
            gamma_range: (1.0, 1.0),
            seed,
        };
        let mut pairs = Vec::new();
        for seed in 0..20 {
            let (x, _) = generate(&spec(seed)).unwrap();
            for pair in 0..500 {
                pairs.push((x.values()[(4 * pair, 0)], x.values()[(4 * pair + 2, 0)]));
            }
        }
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let r = crate::metrics::pearson(&a, &b).unwrap();
        assert!(
            r.abs() < 3.0 / (pairs.len() as f64).sqrt(),
            "cross-block correlation {r}"
        );
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = base_spec(1);
        spec.temporal_corr = 1.0;
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(1);
        spec.gamma_range = (0.0, 1.0);
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(1);
        spec.gamma_range = (2.0, 1.0);
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(1);
        spec.active_blocks = ActiveBlocks::Count(5);
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(1);
        spec.active_blocks = ActiveBlocks::Indices(vec![0, 0]);
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(1);
        spec.active_blocks = ActiveBlocks::Indices(vec![4]);
        assert!(generate(&spec).is_err());
    }
}
