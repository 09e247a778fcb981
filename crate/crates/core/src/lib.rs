//! Dynamic covariance calibration for distance-based out-of-distribution
//! scoring.
//!
//! The pipeline: L2-normalize features ([`feature_io`]), fit class means and
//! the within-class covariance ([`gaussian_stats`]), then score each test
//! feature `f` by its minimum distance to the class means under
//! `(Sigma - u u^T)^-1`, where `u` is the projection of `f` onto the residual
//! eigenspace of `Sigma` ([`dynamic_geometry`], [`scoring`]). Separability is
//! measured with AUROC and FPR95 ([`metrics`]).
//!
//! ```
//! use dyncov::{fit_stats, residual_basis, score_batch, synth, CovarianceSource, ScoreConfig};
//!
//! let spec = synth::SynthSpec { n_per_class: 40, n_ood: 50, ..Default::default() };
//! let data = synth::generate(&spec).unwrap();
//! let stats = fit_stats(&data.train, 1e-6).unwrap();
//! let basis = residual_basis(&stats, 8, CovarianceSource::Within).unwrap();
//! let scored = score_batch(&data.id_test, &stats, Some(&basis), &ScoreConfig::dcc(8)).unwrap();
//! assert_eq!(scored.scores.len(), data.id_test.n_samples());
//! ```

pub mod diagnostics;
pub mod dynamic_geometry;
pub mod error;
pub mod feature_io;
pub mod gaussian_stats;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod stats_archive;
pub mod synth;

pub use dynamic_geometry::{
    adjusted_quadratic_dense, make_context, nonneg_check, rank1_gap, AdjustmentContext, NonnegCheck,
};
pub use error::{Error, Result};
pub use feature_io::{l2_normalize, read_features, write_features, FeatureSet, Format};
pub use gaussian_stats::{
    fit_stats, residual_basis, CovarianceSource, GaussianStats, ResidualBasis,
};
pub use metrics::{auroc, evaluate, fpr_at_tpr, EvalReport};
pub use scoring::{
    classify, score_batch, score_batch_dense, score_euclidean, Method, ScoreConfig, ScoredBatch,
};
