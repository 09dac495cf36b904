//! Compressed sensing for multichannel signals with correlated channels.
//!
//! The crate covers the full acquisition/recovery pipeline:
//!
//! * [`measurement`] builds sparse binary sensing operators and compresses
//!   frames with them.
//! * [`dictionary`] provides an orthonormal DCT basis so recovery can run in
//!   a domain where signals are block sparse.
//! * [`partition`] describes how coefficient rows are grouped into blocks.
//! * [`synthgen`] draws synthetic block-sparse frames whose intra-block and
//!   cross-channel correlation structure is known exactly.
//! * [`solver`] recovers all channels jointly by sparse Bayesian learning
//!   with per-block temporal correlation and a shared channel correlation
//!   model, learned by EM.
//! * [`baselines`] has simultaneous orthogonal matching pursuit for
//!   comparison.
//! * [`metrics`] scores recoveries and serializes run reports.

pub mod baselines;
pub mod dictionary;
pub mod error;
pub mod frame;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod partition;
pub mod solver;
pub mod synthgen;

pub use baselines::{somp, SompOptions, SompResult};
pub use dictionary::{dct_dictionary, effective_matrix, Dictionary};
pub use error::{Result, StcsError};
pub use frame::MultichannelFrame;
pub use measurement::{make_sparse_binary, MeasurementMatrix};
pub use metrics::{compression_ratio, nmse, pearson, Report};
pub use partition::BlockPartition;
pub use solver::{
    init_state, posterior_moments, reconstruct, solve, solve_per_channel, update_a_blocks,
    update_gamma, update_spatial_b, AConstraint, EmSolver, RecoveryResult, SolverOptions,
    SolverState,
};
pub use synthgen::{generate, ActiveBlocks, GeneratorSpec, GroundTruth};
