//! Score normalisation, correlations and one-way ANOVA over run records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::metrics::MetricRecord;
use crate::special::f_survival;
pub use crate::variant::ModelVariant;

/// Names of the three embedding metrics, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricName {
    CovTrace,
    L2NormMean,
    CosineSimMean,
}

impl MetricName {
    pub const ALL: [MetricName; 3] = [MetricName::CovTrace, MetricName::L2NormMean, MetricName::CosineSimMean];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::CovTrace => "cov_trace",
            MetricName::L2NormMean => "l2_norm_mean",
            MetricName::CosineSimMean => "cosine_sim_mean",
        }
    }

    pub fn of(self, m: &MetricRecord) -> f64 {
        match self {
            MetricName::CovTrace => m.cov_trace,
            MetricName::L2NormMean => m.l2_norm_mean,
            MetricName::CosineSimMean => m.cosine_sim_mean,
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cov_trace" | "cov" => Ok(MetricName::CovTrace),
            "l2_norm_mean" | "l2_norm" | "l2" => Ok(MetricName::L2NormMean),
            "cosine_sim_mean" | "cosine_similarity_mean" | "cosine_sim" | "cos" => {
                Ok(MetricName::CosineSimMean)
            }
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Performance plus embedding metrics of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub environment: String,
    pub model_variant: ModelVariant,
    pub dataset: String,
    pub seed: u64,
    pub performance_hns: f64,
    pub metrics: MetricRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub metric: MetricName,
    pub r: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Human-normalised score on a percent scale.
pub fn hns(score: f64, score_random: f64, score_human: f64) -> Result<f64> {
    let range = score_human - score_random;
    if range == 0.0 || !range.is_finite() {
        return Err(Error::DegenerateRange);
    }
    Ok(100.0 * (score - score_random) / range)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson: lengths {} and {} differ", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientSamples(format!("pearson needs at least 3 pairs, got {n}")));
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::ConstantInput("zero variance".into()));
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ConstantInput("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Correlates every metric with performance and returns the one with the
/// largest `|r|`. Ties go to the earlier metric in [`MetricName::ALL`].
pub fn best_correlation(runs: &[RunRecord]) -> Result<CorrelationResult> {
    let all = all_correlations(runs)?;
    let mut best = all[0];
    for c in &all[1..] {
        if c.r.abs() > best.r.abs() {
            best = *c;
        }
    }
    Ok(best)
}

/// Pearson r of each metric against performance, in [`MetricName::ALL`] order.
pub fn all_correlations(runs: &[RunRecord]) -> Result<[CorrelationResult; 3]> {
    if runs.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "correlation needs at least 3 runs, got {}",
            runs.len()
        )));
    }
    let first = &runs[0];
    if let Some(r) = runs
        .iter()
        .find(|r| r.environment != first.environment || r.dataset != first.dataset)
    {
        return Err(Error::InconsistentEpisodes(format!(
            "runs mix {}/{} with {}/{}",
            first.environment, first.dataset, r.environment, r.dataset
        )));
    }
    let perf: Vec<f64> = runs.iter().map(|r| r.performance_hns).collect();
    let corr = |metric: MetricName| -> Result<CorrelationResult> {
        let xs: Vec<f64> = runs.iter().map(|r| metric.of(&r.metrics)).collect();
        let r = pearson(&xs, &perf).map_err(|e| Error::Metric {
            metric: metric.as_str(),
            source: Box::new(e),
        })?;
        Ok(CorrelationResult { metric, r, n: runs.len() })
    };
    Ok([
        corr(MetricName::CovTrace)?,
        corr(MetricName::L2NormMean)?,
        corr(MetricName::CosineSimMean)?,
    ])
}

/// One-way ANOVA across groups.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InsufficientGroups(k));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::InsufficientSamples(format!(
            "group {i} has {} observations; need at least 2",
            g.len()
        )));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidData("non-finite observation".into()));
    }
    let total_n: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| compensated_sum(g.iter().copied()) / g.len() as f64)
        .collect();
    let grand = compensated_sum(groups.iter().flatten().copied()) / total_n as f64;
    let ss_between = compensated_sum(
        groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.len() as f64 * (m - grand) * (m - grand)),
    );
    let ss_within = compensated_sum(
        groups
            .iter()
            .zip(&means)
            .flat_map(|(g, m)| g.iter().map(move |x| (x - m) * (x - m))),
    );
    if ss_within <= 0.0 {
        return Err(Error::DegenerateGroups);
    }
    let df_between = k - 1;
    let df_within = total_n - k;
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f_statistic: f,
        p_value: f_survival(f, df_between as f64, df_within as f64),
        df_between,
        df_within,
    })
}

/// Sum of per-environment scores.
pub fn cumulative_hns(per_environment: &BTreeMap<String, f64>) -> Result<f64> {
    if per_environment.is_empty() {
        return Err(Error::InsufficientData("no environments".into()));
    }
    if let Some((env, _)) = per_environment.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite score for {env}")));
    }
    Ok(per_environment.values().sum())
}

/// Sample mean and standard deviation (divisor `n − 1`).
pub fn mean_and_std(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("need at least 2 samples, got {n}")));
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    let var = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    Ok((mean, var.sqrt()))
}
