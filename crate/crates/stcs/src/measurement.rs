//! Sparse binary sensing matrices and the sensor-side compression Y = Phi X.
//!
//! Every column of Phi holds exactly two entries equal to 1, at two distinct
//! rows, so compressing an M x L frame costs O(2 M L) regardless of N. Rows
//! pairs are drawn per column, uniformly without replacement, from a seeded
//! ChaCha8 stream; the generator name travels with the serialized matrix so
//! an archived file states how to reproduce it.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StcsError};
use crate::frame::MultichannelFrame;

/// Identity of the row-pair generator, recorded in serialized matrices.
pub const RNG_NAME: &str = "chacha8";

/// Sparse binary N x M sensing operator with per-column weight 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementMatrix {
    n_rows: usize,
    n_cols: usize,
    seed: u64,
    /// For each column, the two distinct row indices holding value 1,
    /// stored in ascending order.
    column_entries: Vec<[usize; 2]>,
}

/// Build an N x M sparse binary matrix from a seed. Each column gets two
/// distinct rows chosen uniformly without replacement; columns are
/// independent. Deterministic for a given seed across platforms.
pub fn make_sparse_binary(n: usize, m: usize, seed: u64) -> Result<MeasurementMatrix> {
    if n < 2 {
        return Err(StcsError::InvalidDimension(format!(
            "need at least 2 rows to place two distinct entries per column, got n={n}"
        )));
    }
    if m == 0 {
        return Err(StcsError::InvalidDimension(
            "matrix needs at least one column".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut column_entries = Vec::with_capacity(m);
    for _ in 0..m {
        let pick = rand::seq::index::sample(&mut rng, n, 2);
        let mut pair = [pick.index(0), pick.index(1)];
        pair.sort_unstable();
        column_entries.push(pair);
    }
    Ok(MeasurementMatrix {
        n_rows: n,
        n_cols: m,
        seed,
        column_entries,
    })
}

impl MeasurementMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn column_entries(&self) -> &[[usize; 2]] {
        &self.column_entries
    }

    /// Apply the operator to a frame: Y = Phi X, computed column-list wise.
    pub fn compress(&self, x: &MultichannelFrame) -> Result<MultichannelFrame> {
        if self.n_cols != x.n_samples() {
            return Err(StcsError::DimensionMismatch(format!(
                "operator is {}x{} but frame has {} samples x {} channels",
                self.n_rows,
                self.n_cols,
                x.n_samples(),
                x.n_channels()
            )));
        }
        let l = x.n_channels();
        let mut y = DMatrix::zeros(self.n_rows, l);
        let xv = x.values();
        for (c, pair) in self.column_entries.iter().enumerate() {
            for ch in 0..l {
                let v = xv[(c, ch)];
                y[(pair[0], ch)] += v;
                y[(pair[1], ch)] += v;
            }
        }
        MultichannelFrame::new(y)
    }

    /// Dense 0/1 form. Column sums are all exactly 2.
    pub fn densify(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols);
        for (c, pair) in self.column_entries.iter().enumerate() {
            out[(pair[0], c)] = 1.0;
            out[(pair[1], c)] = 1.0;
        }
        out
    }

    /// Compact JSON form; round-trips bit-exactly.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = SparseMatrixFile {
            n: self.n_rows,
            m: self.n_cols,
            seed: self.seed,
            rng: RNG_NAME.to_string(),
            columns: self.column_entries.clone(),
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &file)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let file: SparseMatrixFile = serde_json::from_str(&data)?;
        if file.n < 2 {
            return Err(StcsError::InvalidDimension(format!(
                "{}: matrix needs n >= 2, got {}",
                path.display(),
                file.n
            )));
        }
        if file.columns.len() != file.m {
            return Err(StcsError::Parse(format!(
                "{}: expected {} columns, file holds {}",
                path.display(),
                file.m,
                file.columns.len()
            )));
        }
        for (c, pair) in file.columns.iter().enumerate() {
            if pair[0] == pair[1] || pair[0] >= file.n || pair[1] >= file.n {
                return Err(StcsError::Parse(format!(
                    "{}: column {} has invalid row pair {:?} for n={}",
                    path.display(),
                    c,
                    pair,
                    file.n
                )));
            }
        }
        Ok(MeasurementMatrix {
            n_rows: file.n,
            n_cols: file.m,
            seed: file.seed,
            column_entries: file.columns,
        })
    }

    /// Dense CSV export (one row per line, comma separated 0/1 values).
    pub fn write_csv_dense(&self, path: &Path) -> Result<()> {
        let dense = self.densify();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in 0..dense.nrows() {
            let row: Vec<String> = (0..dense.ncols())
                .map(|c| format!("{}", dense[(r, c)] as u8))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SparseMatrixFile {
    n: usize,
    m: usize,
    seed: u64,
    #[serde(default)]
    rng: String,
    columns: Vec<[usize; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn random_frame(rng: &mut impl Rng, m: usize, l: usize) -> MultichannelFrame {
        MultichannelFrame::new(DMatrix::from_fn(m, l, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn rejects_single_row() {
        assert!(matches!(
            make_sparse_binary(1, 5, 0),
            Err(StcsError::InvalidDimension(_))
        ));
        assert!(make_sparse_binary(2, 0, 0).is_err());
    }

    #[test]
    fn columns_sum_to_two_at_telemetry_size() {
        let phi = make_sparse_binary(45, 500, 7).unwrap();
        let dense = phi.densify();
        for c in 0..500 {
            let sum: f64 = dense.column(c).iter().sum();
            assert_eq!(sum, 2.0);
            let nonzero_rows = dense.column(c).iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nonzero_rows, 2);
        }
    }

    #[test]
    fn two_rows_forces_all_ones() {
        // With n=2 the only 2-subset is {0,1}, so the dense matrix is all ones.
        let phi = make_sparse_binary(2, 7, 99).unwrap();
        let dense = phi.densify();
        assert!(dense.iter().all(|&v| v == 1.0));
        assert_eq!(dense.shape(), (2, 7));
    }

    #[test]
    fn row_usage_roughly_uniform() {
        // Brute-force tally of column_entries; chi-square over the 4 row
        // counts against the uniform expectation of 2*1000/4 = 500 each.
        // Critical value for 3 degrees of freedom at p = 0.001 is 16.266.
        let phi = make_sparse_binary(4, 1000, 2024).unwrap();
        let mut counts = [0usize; 4];
        for pair in phi.column_entries() {
            counts[pair[0]] += 1;
            counts[pair[1]] += 1;
        }
        let expected = 500.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(
            chi2 < 16.266,
            "chi-square {chi2} too large, counts {counts:?}"
        );
    }

    #[test]
    fn compress_identity_like_column() {
        // X = e0 as a single column: Y equals Phi's column 0 densified.
        let n = 6;
        let phi = make_sparse_binary(n, n, 3).unwrap();
        let mut e0 = DMatrix::zeros(n, 1);
        e0[(0, 0)] = 1.0;
        let y = phi.compress(&MultichannelFrame::new(e0).unwrap()).unwrap();
        let dense = phi.densify();
        for r in 0..n {
            assert_eq!(y.values()[(r, 0)], dense[(r, 0)]);
        }
    }

    #[test]
    fn compress_all_ones_gives_row_sums() {
        let phi = make_sparse_binary(2, 7, 99).unwrap();
        let ones = MultichannelFrame::new(DMatrix::from_element(7, 1, 1.0)).unwrap();
        let y = phi.compress(&ones).unwrap();
        assert_eq!(y.values()[(0, 0)], 7.0);
        assert_eq!(y.values()[(1, 0)], 7.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // the oracle is deliberately naive
    fn compress_matches_dense_multiply_oracle() {
        let phi = make_sparse_binary(45, 500, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_frame(&mut rng, 500, 30);
        let fast = phi.compress(&x).unwrap();
        // Independent brute-force: build the dense matrix straight from the
        // column entry list and triple-loop the product.
        let mut dense = vec![vec![0.0f64; 500]; 45];
        for (c, pair) in phi.column_entries().iter().enumerate() {
            dense[pair[0]][c] = 1.0;
            dense[pair[1]][c] = 1.0;
        }
        for r in 0..45 {
            for l in 0..30 {
                let mut acc = 0.0;
                for c in 0..500 {
                    acc += dense[r][c] * x.values()[(c, l)];
                }
                assert_relative_eq!(fast.values()[(r, l)], acc, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn densify_consistent_with_compress() {
        let phi = make_sparse_binary(12, 40, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_frame(&mut rng, 40, 3);
        let via_sparse = phi.compress(&x).unwrap();
        let via_dense = phi.densify() * x.values();
        assert_relative_eq!(via_sparse.values(), &via_dense, max_relative = 1e-12);
    }

    #[test]
    fn compress_shape_mismatch_names_shapes() {
        let phi = make_sparse_binary(4, 10, 1).unwrap();
        let x = MultichannelFrame::new(DMatrix::zeros(9, 2).add_scalar(1.0)).unwrap();
        let err = phi.compress(&x).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("4x10") && msg.contains("9"),
            "message was {msg}"
        );
    }

    #[test]
    fn same_seed_same_matrix_different_seed_differs() {
        let a = make_sparse_binary(20, 100, 42).unwrap();
        let b = make_sparse_binary(20, 100, 42).unwrap();
        assert_eq!(a, b);
        let differing = (0..10u64)
            .filter(|&s| make_sparse_binary(20, 100, s).unwrap() != a)
            .count();
        assert!(differing >= 1);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let phi = make_sparse_binary(45, 500, 77).unwrap();
        let dir = std::env::temp_dir().join(format!("stcs-mm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("phi.json");
        phi.save_json(&path).unwrap();
        let loaded = MeasurementMatrix::load_json(&path).unwrap();
        assert_eq!(phi, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }
}
