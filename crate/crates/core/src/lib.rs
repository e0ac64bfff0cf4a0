//! Intrinsic-motivation decision transformers and embedding-geometry
//! analysis.
//!
//! * [`metrics`]: covariance trace, mean L2 norm, mean pairwise cosine
//! * [`stats`]: normalised scores, Pearson correlation, one-way ANOVA
//! * [`rnd`]: random network distillation pair and orthogonal init
//! * [`edt`]: toy decision transformer, synthetic data, training, rollouts
//! * [`io`]: embedding dumps, results tables and checkpoints

pub mod edt;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rnd;
pub mod special;
pub mod stats;
mod variant;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metrics::{
    cosine_similarity_mean, covariance_trace, l2_norm_mean, metrics_for_run, EmbeddingSet, MetricRecord, Provenance,
};
pub use rnd::{orthogonal_init, MlpNetwork, RndConfig, RndPair};
pub use stats::{AnovaResult, CorrelationResult, MetricName, RunRecord};
pub use variant::ModelVariant;
