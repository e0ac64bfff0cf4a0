//! Report assembly and rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rndedt_core::io::format_sig9;
use rndedt_core::stats::{best_correlation, cumulative_hns};
use rndedt_core::{AnovaResult, CorrelationResult, MetricRecord, ModelVariant, RunRecord};

use crate::analysis::{by_environment, EnvAnova, EnvCorrelation};

/// Minimum number of distinct models before a correlation is reported.
pub const MIN_MODELS_FOR_CORRELATION: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Md,
    /// Comma-delimited, machine readable.
    Table,
}

/// One displayed row: a model's scores averaged over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub model: ModelVariant,
    pub seeds: usize,
    pub performance: f64,
    pub metrics: MetricRecord,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationNote {
    Strongest(CorrelationResult),
    TooFewModels(usize),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSection {
    pub environment: String,
    pub rows: Vec<ModelRow>,
    pub correlation: CorrelationNote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cumulative {
    pub model: ModelVariant,
    pub score: f64,
    pub environments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: String,
    pub sections: Vec<EnvSection>,
    pub cumulative: Vec<Cumulative>,
    pub total_environments: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn average(model: ModelVariant, rows: &[&RunRecord]) -> ModelRow {
    let m = |f: fn(&RunRecord) -> f64| mean(rows.iter().map(|r| f(r)));
    ModelRow {
        model,
        seeds: rows.len(),
        performance: m(|r| r.performance_hns),
        metrics: MetricRecord {
            cov_trace: m(|r| r.metrics.cov_trace),
            l2_norm_mean: m(|r| r.metrics.l2_norm_mean),
            cosine_sim_mean: m(|r| r.metrics.cosine_sim_mean),
            repetitions_averaged: rows.iter().map(|r| r.metrics.repetitions_averaged).min().unwrap_or(0),
        },
        best: false,
    }
}

/// Builds the per-environment report: model means, the best performer,
/// the strongest metric correlation over the displayed rows, and the
/// cumulative score of each model.
pub fn cmd_report(title: &str, rows: &[RunRecord]) -> Report {
    let mut sections = Vec::new();
    let mut per_model: BTreeMap<ModelVariant, BTreeMap<String, f64>> = BTreeMap::new();
    let envs = by_environment(rows);
    for (env, group) in &envs {
        let mut shown: Vec<ModelRow> = ModelVariant::ALL
            .iter()
            .filter_map(|&v| {
                let of_model: Vec<&RunRecord> = group.iter().filter(|r| r.model_variant == v).collect();
                (!of_model.is_empty()).then(|| average(v, &of_model))
            })
            .collect();
        let top = shown.iter().map(|r| r.performance).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut shown {
            r.best = r.performance == top;
            per_model.entry(r.model).or_default().insert(env.clone(), r.performance);
        }
        let correlation = if shown.len() < MIN_MODELS_FOR_CORRELATION {
            CorrelationNote::TooFewModels(shown.len())
        } else {
            let means: Vec<RunRecord> = shown
                .iter()
                .map(|r| RunRecord {
                    environment: env.clone(),
                    model_variant: r.model,
                    dataset: group[0].dataset.clone(),
                    seed: 0,
                    performance_hns: r.performance,
                    metrics: r.metrics,
                })
                .collect();
            match best_correlation(&means) {
                Ok(c) => CorrelationNote::Strongest(c),
                Err(e) => CorrelationNote::Failed(e.to_string()),
            }
        };
        sections.push(EnvSection { environment: env.clone(), rows: shown, correlation });
    }
    let cumulative = per_model
        .into_iter()
        .filter_map(|(model, scores)| {
            cumulative_hns(&scores).ok().map(|score| Cumulative { model, score, environments: scores.len() })
        })
        .collect();
    Report { title: title.to_string(), sections, cumulative, total_environments: envs.len() }
}

/// Two decimals like the published tables, more for small magnitudes.
fn short(x: f64, decimals: usize) -> String {
    if x != 0.0 && x.abs() < 0.5 * 10f64.powi(-(decimals as i32)) {
        format!("{x:.3e}")
    } else {
        format!("{x:.decimals$}")
    }
}

fn signed(r: f64) -> String {
    format!("{r:+.3}")
}

impl Report {
    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}\n", self.title);
        for sec in &self.sections {
            let _ = writeln!(s, "## {}\n", sec.environment);
            s.push_str("| Model | Seeds | Performance | Cov. Trace | L2 Norm | Cos. Sim. |\n");
            s.push_str("|---|---:|---:|---:|---:|---:|\n");
            for r in &sec.rows {
                let perf = short(r.performance, 2);
                let perf = if r.best { format!("**{perf}**") } else { perf };
                let _ = writeln!(
                    s,
                    "| {} | {} | {perf} | {} | {} | {} |",
                    r.model.display_name(),
                    r.seeds,
                    short(r.metrics.cov_trace, 2),
                    short(r.metrics.l2_norm_mean, 2),
                    short(r.metrics.cosine_sim_mean, 4),
                );
            }
            s.push('\n');
            match &sec.correlation {
                CorrelationNote::Strongest(c) => {
                    let _ = writeln!(s, "Strongest correlation: {} (r = {})\n", c.metric, signed(c.r));
                }
                CorrelationNote::TooFewModels(k) => {
                    let _ = writeln!(
                        s,
                        "No correlation: needs at least {MIN_MODELS_FOR_CORRELATION} models, found {k}.\n"
                    );
                }
                CorrelationNote::Failed(e) => {
                    let _ = writeln!(s, "No correlation: {e}.\n");
                }
            }
        }
        s.push_str("## Cumulative score\n\n| Model | Cumulative | Environments |\n|---|---:|---:|\n");
        for c in &self.cumulative {
            let _ = writeln!(
                s,
                "| {} | {} | {}/{} |",
                c.model.display_name(),
                short(c.score, 2),
                c.environments,
                self.total_environments
            );
        }
        s
    }

    /// Delimited form of the per-model rows.
    pub fn table(&self) -> String {
        let mut s = String::from(
            "environment,model,seeds,performance,cov_trace,l2_norm,cosine_sim,best,strongest_metric,strongest_r\n",
        );
        for sec in &self.sections {
            let (metric, r) = match &sec.correlation {
                CorrelationNote::Strongest(c) => (c.metric.as_str().to_string(), format_sig9(c.r)),
                _ => (String::new(), String::new()),
            };
            for row in &sec.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{metric},{r}",
                    sec.environment,
                    row.model,
                    row.seeds,
                    format_sig9(row.performance),
                    format_sig9(row.metrics.cov_trace),
                    format_sig9(row.metrics.l2_norm_mean),
                    format_sig9(row.metrics.cosine_sim_mean),
                    row.best,
                );
            }
        }
        s
    }

    pub fn cumulative_table(&self) -> String {
        let mut s = String::from("model,cumulative,environments\n");
        for c in &self.cumulative {
            let _ = writeln!(s, "{},{},{}", c.model, format_sig9(c.score), c.environments);
        }
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Md => self.markdown(),
            Format::Table => format!("{}\n{}", self.table(), self.cumulative_table()),
        }
    }
}

pub fn render_correlations(results: &[EnvCorrelation], format: Format) -> String {
    let mut s = String::new();
    match format {
        Format::Md => {
            s.push_str("| Environment | Strongest | r | r(cov_trace) | r(l2_norm_mean) | r(cosine_sim_mean) |\n");
            s.push_str("|---|---|---:|---:|---:|---:|\n");
            for c in results {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    c.environment,
                    c.best.metric,
                    signed(c.best.r),
                    signed(c.all[0].r),
                    signed(c.all[1].r),
                    signed(c.all[2].r)
                );
            }
        }
        Format::Table => {
            s.push_str("environment,strongest_metric,r,r_cov_trace,r_l2_norm_mean,r_cosine_sim_mean,n\n");
            for c in results {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    c.environment,
                    c.best.metric,
                    format_sig9(c.best.r),
                    format_sig9(c.all[0].r),
                    format_sig9(c.all[1].r),
                    format_sig9(c.all[2].r),
                    c.best.n
                );
            }
        }
    }
    s
}

pub fn render_anova(results: &[EnvAnova], column: &str, format: Format) -> String {
    let mut s = String::new();
    let cells = |a: &EnvAnova| -> (String, String, String, String) {
        match &a.outcome {
            Ok(AnovaResult { f_statistic, p_value, df_between, df_within }) => (
                format_sig9(*f_statistic),
                format!("{df_between}"),
                format!("{df_within}"),
                format_sig9(*p_value),
            ),
            Err(e) => (format!("error: {e}"), String::new(), String::new(), String::new()),
        }
    };
    match format {
        Format::Md => {
            let _ = writeln!(s, "| Environment | Metric | F | df between | df within | p |");
            s.push_str("|---|---|---:|---:|---:|---:|\n");
            for a in results {
                let (f, d1, d2, p) = cells(a);
                let _ = writeln!(s, "| {} | {column} | {f} | {d1} | {d2} | {p} |", a.environment);
            }
        }
        Format::Table => {
            s.push_str("environment,metric,f,df_between,df_within,p\n");
            for a in results {
                let (f, d1, d2, p) = cells(a);
                let _ = writeln!(s, "{},{column},{},{d1},{d2},{p}", a.environment, f.replace(',', ";"));
            }
        }
    }
    s
}

pub fn render_results(rows: &[RunRecord], format: Format) -> String {
    match format {
        Format::Table => rndedt_core::io::results_to_string(rows).unwrap_or_default(),
        Format::Md => {
            let mut s = String::from("| Environment | Model | Dataset | Seed | Performance | Cov. Trace | L2 Norm | Cos. Sim. |\n");
            s.push_str("|---|---|---|---:|---:|---:|---:|---:|\n");
            for r in rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.environment,
                    r.model_variant.display_name(),
                    r.dataset,
                    r.seed,
                    short(r.performance_hns, 2),
                    short(r.metrics.cov_trace, 2),
                    short(r.metrics.l2_norm_mean, 2),
                    short(r.metrics.cosine_sim_mean, 4)
                );
            }
            s
        }
    }
}
