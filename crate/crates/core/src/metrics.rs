//! Embedding-geometry metrics: covariance trace, mean L2 norm and mean
//! pairwise cosine similarity over per-step embedding matrices.
//!
//! All three metrics are computed in `f64` with compensated column sums, so
//! a given matrix always produces the same bits regardless of caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;

/// Rows with a Euclidean norm at or below this are rejected by
/// [`cosine_similarity_mean`].
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Episode cap used when collecting embeddings.
pub const MAX_EPISODE_STEPS: usize = 1000;

/// Where an embedding matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub environment: String,
    pub model_variant: String,
    pub dataset: String,
    pub seed: u64,
    pub repetition: u32,
}

impl Provenance {
    /// Same run, ignoring the repetition index.
    pub fn same_run(&self, other: &Provenance) -> bool {
        self.environment == other.environment
            && self.model_variant == other.model_variant
            && self.dataset == other.dataset
            && self.seed == other.seed
    }
}

/// An `N × d` matrix of per-step embeddings from a single episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    pub meta: Provenance,
}

impl EmbeddingSet {
    /// Builds a set from row-major data. Rejects empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, meta: Provenance) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InsufficientSamples("embedding set has no rows".into()));
        }
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be at least 1".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "expected {} values for {rows}x{dim}, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(EmbeddingSet { rows, dim, data, meta })
    }

    pub fn from_rows(rows: &[Vec<f64>], meta: Provenance) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged embedding rows".into()));
        }
        EmbeddingSet::new(rows.len(), dim, rows.concat(), meta)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(k).step_by(self.dim).copied()
    }
}

/// The three geometry metrics for one run, averaged over its episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub cov_trace: f64,
    pub l2_norm_mean: f64,
    pub cosine_sim_mean: f64,
    pub repetitions_averaged: u32,
}

/// Trace of the sample covariance matrix (divisor `N − 1`), computed as the
/// sum of per-column variances.
pub fn covariance_trace(e: &EmbeddingSet) -> Result<f64> {
    let n = e.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let variances = (0..e.dim()).map(|k| {
        let mean = compensated_sum(e.column(k)) / n as f64;
        compensated_sum(e.column(k).map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
    });
    Ok(compensated_sum(variances).max(0.0))
}

/// Mean Euclidean norm of the rows.
pub fn l2_norm_mean(e: &EmbeddingSet) -> Result<f64> {
    let norms = e.iter_rows().map(|r| compensated_sum(r.iter().map(|x| x * x)).sqrt());
    Ok(compensated_sum(norms) / e.rows() as f64)
}

/// Mean cosine similarity over unordered distinct row pairs `i < j`.
///
/// Uses `Σ_{i<j} cos(eᵢ, eⱼ) = (‖Σ êᵢ‖² − Σ‖êᵢ‖²) / 2` over unit-normalised
/// rows `êᵢ`, which is `O(N·d)`.
pub fn cosine_similarity_mean(e: &EmbeddingSet) -> Result<f64> {
    let n = e.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "cosine similarity needs at least 2 rows, got {n}"
        )));
    }
    let d = e.dim();
    let mut unit = Vec::with_capacity(n * d);
    for (i, row) in e.iter_rows().enumerate() {
        let norm = compensated_sum(row.iter().map(|x| x * x)).sqrt();
        if norm <= DEGENERATE_NORM {
            return Err(Error::DegenerateVector { row: i });
        }
        unit.extend(row.iter().map(|x| x / norm));
    }
    let col = |k: usize| unit.iter().skip(k).step_by(d).copied();
    let total_sq = compensated_sum((0..d).map(|k| {
        let s = compensated_sum(col(k));
        s * s
    }));
    let self_sq = compensated_sum(unit.iter().map(|x| x * x));
    let pairs = (n * (n - 1)) as f64;
    Ok(((total_sq - self_sq) / pairs).clamp(-1.0, 1.0))
}

/// Computes the metrics of every episode and averages them.
///
/// All episodes must come from the same run (environment, variant,
/// dataset, seed) and share the embedding width.
pub fn metrics_for_run(episodes: &[EmbeddingSet]) -> Result<MetricRecord> {
    let first = episodes
        .first()
        .ok_or_else(|| Error::InsufficientSamples("no episodes".into()))?;
    for (i, ep) in episodes.iter().enumerate().skip(1) {
        if !ep.meta.same_run(&first.meta) {
            return Err(Error::InconsistentEpisodes(format!(
                "episode {i} provenance {:?} differs from {:?}",
                ep.meta, first.meta
            )));
        }
        if ep.dim() != first.dim() {
            return Err(Error::InconsistentEpisodes(format!(
                "episode {i} has width {} but episode 0 has {}",
                ep.dim(),
                first.dim()
            )));
        }
    }
    let mut cov = Vec::with_capacity(episodes.len());
    let mut l2 = Vec::with_capacity(episodes.len());
    let mut cos = Vec::with_capacity(episodes.len());
    for ep in episodes {
        cov.push(covariance_trace(ep)?);
        l2.push(l2_norm_mean(ep)?);
        cos.push(cosine_similarity_mean(ep)?);
    }
    let k = episodes.len() as f64;
    Ok(MetricRecord {
        cov_trace: compensated_sum(cov) / k,
        l2_norm_mean: compensated_sum(l2) / k,
        cosine_sim_mean: compensated_sum(cos) / k,
        repetitions_averaged: episodes.len() as u32,
    })
}
