//! Recovery scoring: NMSE, Pearson correlation, compression ratio, and the
//! serializable per-run report.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;

/// Normalized mean squared error ||x_hat - x_true||_F^2 / ||x_true||_F^2.
pub fn nmse(x_hat: &MultichannelFrame, x_true: &MultichannelFrame) -> Result<f64> {
    if x_hat.n_samples() != x_true.n_samples() || x_hat.n_channels() != x_true.n_channels() {
        return Err(StcsError::DimensionMismatch(format!(
            "estimate is {}x{} but reference is {}x{}",
            x_hat.n_samples(),
            x_hat.n_channels(),
            x_true.n_samples(),
            x_true.n_channels()
        )));
    }
    let ref_norm_sq = x_true.values().norm_squared();
    if ref_norm_sq == 0.0 {
        return Err(StcsError::UndefinedMetric(
            "NMSE reference frame has zero norm".into(),
        ));
    }
    Ok((x_hat.values() - x_true.values()).norm_squared() / ref_norm_sq)
}

/// Sample Pearson correlation coefficient of two equal-length sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(StcsError::DimensionMismatch(format!(
            "sequences have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(StcsError::UndefinedMetric(
            "Pearson correlation needs at least 2 samples".into(),
        ));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(StcsError::UndefinedMetric(
            "Pearson correlation of a constant sequence".into(),
        ));
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Compression ratio in percent: (m - n) / m * 100. A 45x500 operator gives
/// 91.0 even though such setups are commonly rounded to "compressed by 90%";
/// the tools always report the formula value.
pub fn compression_ratio(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(StcsError::InvalidDimension(
            "compression ratio needs positive m and n".into(),
        ));
    }
    if n > m {
        return Err(StcsError::InvalidDimension(format!(
            "compressed length n={n} exceeds frame length m={m}"
        )));
    }
    Ok((m - n) as f64 / m as f64 * 100.0)
}

/// One recovery run, serialized as JSON by the CLI and the benchmark.
/// Truth-dependent scores are present only when a reference frame was given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub algorithm: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pearson_per_channel: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson_mean: Option<f64>,
    pub compression_ratio_pct: f64,
    pub runtime_seconds: f64,
    pub iterations: usize,
}

impl Report {
    /// Fill NMSE and per-channel Pearson scores from a reference frame.
    /// Channels where the correlation is undefined (constant sequences)
    /// are skipped.
    pub fn score_against(
        &mut self,
        x_hat: &MultichannelFrame,
        x_true: &MultichannelFrame,
    ) -> Result<()> {
        self.nmse = Some(nmse(x_hat, x_true)?);
        self.pearson_per_channel.clear();
        for ch in 0..x_hat.n_channels() {
            let a: Vec<f64> = x_hat.values().column(ch).iter().copied().collect();
            let b: Vec<f64> = x_true.values().column(ch).iter().copied().collect();
            if let Ok(r) = pearson(&a, &b) {
                self.pearson_per_channel.push(r);
            }
        }
        self.pearson_mean = if self.pearson_per_channel.is_empty() {
            None
        } else {
            Some(
                self.pearson_per_channel.iter().sum::<f64>()
                    / self.pearson_per_channel.len() as f64,
            )
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(m: usize, l: usize, seed: u64) -> MultichannelFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultichannelFrame::new(DMatrix::from_fn(m, l, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn nmse_trivial_values() {
        let x = frame(20, 3, 1);
        assert_relative_eq!(nmse(&x, &x).unwrap(), 0.0);
        let zero = MultichannelFrame::new(DMatrix::zeros(20, 3)).unwrap();
        assert_relative_eq!(nmse(&zero, &x).unwrap(), 1.0, epsilon = 1e-12);
        let doubled = MultichannelFrame::new(x.values() * 2.0).unwrap();
        assert_relative_eq!(nmse(&doubled, &x).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nmse_zero_reference_is_undefined() {
        let zero = MultichannelFrame::new(DMatrix::zeros(4, 1)).unwrap();
        let x = frame(4, 1, 2);
        assert!(matches!(
            nmse(&x, &zero),
            Err(StcsError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn pearson_self_and_negation() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&a, &neg).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_constant_is_undefined() {
        let a = vec![1.0; 10];
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            pearson(&a, &b),
            Err(StcsError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mapped: Vec<f64> = b.iter().map(|v| 3.5 * v + 2.0).collect();
        assert_relative_eq!(
            pearson(&a, &b).unwrap(),
            pearson(&a, &mapped).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn compression_ratio_values() {
        assert_relative_eq!(compression_ratio(500, 45).unwrap(), 91.0);
        assert_relative_eq!(compression_ratio(500, 500).unwrap(), 0.0);
        assert_relative_eq!(compression_ratio(500, 250).unwrap(), 50.0);
        assert!(compression_ratio(45, 500).is_err());
    }

    #[test]
    fn report_scores_and_serializes() {
        let x = frame(30, 2, 3);
        let mut report = Report {
            algorithm: "stsbl".into(),
            seed: 3,
            nmse: None,
            pearson_per_channel: vec![],
            pearson_mean: None,
            compression_ratio_pct: 50.0,
            runtime_seconds: 0.1,
            iterations: 12,
        };
        report.score_against(&x, &x).unwrap();
        assert_eq!(report.nmse, Some(0.0));
        assert_eq!(report.pearson_per_channel.len(), 2);
        let json = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back.iterations, 12);
    }
}
