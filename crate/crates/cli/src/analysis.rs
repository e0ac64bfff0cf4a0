//! `correlate` and `anova` over a results table.

use std::fmt;
use std::str::FromStr;

use rndedt_core::stats::{all_correlations, best_correlation, one_way_anova};
use rndedt_core::{AnovaResult, CorrelationResult, Error, MetricName, ModelVariant, RunRecord};

use crate::error::{CliError, CliResult, Context, EXIT_INVALID, EXIT_NUMERICAL};

/// Rows grouped by environment, in order of first appearance.
pub fn by_environment(rows: &[RunRecord]) -> Vec<(String, Vec<RunRecord>)> {
    let mut out: Vec<(String, Vec<RunRecord>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(e, _)| *e == r.environment) {
            Some((_, v)) => v.push(r.clone()),
            None => out.push((r.environment.clone(), vec![r.clone()])),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvCorrelation {
    pub environment: String,
    pub best: CorrelationResult,
    pub all: [CorrelationResult; 3],
}

/// Per environment: the metric with the largest |r| against performance,
/// plus all three coefficients.
pub fn cmd_correlate(rows: &[RunRecord]) -> CliResult<Vec<EnvCorrelation>> {
    by_environment(rows)
        .into_iter()
        .map(|(env, group)| {
            let label = || format!("environment '{env}'");
            Ok(EnvCorrelation {
                best: best_correlation(&group).context_with(label)?,
                all: all_correlations(&group).context_with(label)?,
                environment: env,
            })
        })
        .collect()
}

/// Column an ANOVA is run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Performance,
    Metric(MetricName),
}

impl Column {
    pub fn of(self, r: &RunRecord) -> f64 {
        match self {
            Column::Performance => r.performance_hns,
            Column::Metric(m) => m.of(&r.metrics),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Performance => f.write_str("performance"),
            Column::Metric(m) => m.fmt(f),
        }
    }
}

impl FromStr for Column {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        if s.eq_ignore_ascii_case("performance") {
            return Ok(Column::Performance);
        }
        s.parse().map(Column::Metric).map_err(CliError::from)
    }
}

#[derive(Debug)]
pub struct EnvAnova {
    pub environment: String,
    pub groups: Vec<(ModelVariant, usize)>,
    pub outcome: Result<AnovaResult, Error>,
}

/// Groups `column` by model variant within each environment. Failures
/// are reported per environment rather than aborting the table.
pub fn cmd_anova(rows: &[RunRecord], column: Column) -> Vec<EnvAnova> {
    by_environment(rows)
        .into_iter()
        .map(|(env, group)| {
            let mut groups = Vec::new();
            let mut values = Vec::new();
            for v in ModelVariant::ALL {
                let g: Vec<f64> = group.iter().filter(|r| r.model_variant == v).map(|r| column.of(r)).collect();
                if !g.is_empty() {
                    groups.push((v, g.len()));
                    values.push(g);
                }
            }
            EnvAnova { environment: env, groups, outcome: one_way_anova(&values) }
        })
        .collect()
}

pub fn anova_exit_code(results: &[EnvAnova]) -> i32 {
    let errors = results.iter().filter_map(|a| a.outcome.as_ref().err());
    errors
        .map(|e| if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID })
        .max()
        .unwrap_or(0)
}
