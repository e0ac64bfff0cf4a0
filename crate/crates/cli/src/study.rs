//! Whole-study pipelines: `run` and `sweep-rnd-depth`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rndedt_core::io::{format_sig9, write_results};
use rndedt_core::stats::cumulative_hns;
use rndedt_core::{ModelVariant, RunRecord};

use crate::collect::{cmd_metrics, dump_study};
use crate::error::{CliError, CliResult, Context};
use crate::manifest::{CellEntry, RunManifest};
use crate::report::{cmd_report, Report};
use crate::train::{cmd_train, write_text, TrainSummary};

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug)]
pub struct StudyOutput {
    pub train: TrainSummary,
    pub dumps: Vec<PathBuf>,
    pub rows: Vec<RunRecord>,
    pub report: Report,
}

impl StudyOutput {
    pub fn exit_code(&self) -> i32 {
        crate::train_exit_code(&self.train)
    }
}

pub fn write_report(report: &Report, out: &Path) -> CliResult<()> {
    write_text(&out.join("report.md"), &report.markdown())?;
    write_text(&out.join("report.csv"), &report.table())?;
    write_text(&out.join("cumulative.csv"), &report.cumulative_table())
}

/// Train, dump, measure and report every cell of `manifest` under `out`.
pub fn run_study(manifest: &RunManifest, out: &Path, workers: usize) -> CliResult<StudyOutput> {
    let train = cmd_train(manifest, out, workers)?;
    let trained: Vec<_> = train.trained().cloned().collect();
    let (dumps, _) = dump_study(manifest, &trained, out, manifest.evaluation.repetitions, workers)?;
    let rows = if dumps.is_empty() { Vec::new() } else { cmd_metrics(&out.join("dumps"))? };
    let results = out.join(RESULTS_FILE);
    write_results(&rows, &results).context_with(|| results.display().to_string())?;
    let report = cmd_report(&manifest.study, &rows);
    write_report(&report, out)?;
    Ok(StudyOutput { train, dumps, rows, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: ModelVariant,
    pub depth: usize,
    /// Sum over environments of the best seed's normalised score.
    pub cumulative: f64,
    pub environments: usize,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub studies: Vec<(usize, StudyOutput)>,
}

impl SweepOutput {
    /// Depth with the highest cumulative score per model.
    pub fn best_depths(&self) -> BTreeMap<ModelVariant, usize> {
        let mut best: BTreeMap<ModelVariant, &SweepRow> = BTreeMap::new();
        for r in &self.rows {
            let slot = best.entry(r.model).or_insert(r);
            if r.cumulative > slot.cumulative {
                *slot = r;
            }
        }
        best.into_iter().map(|(m, r)| (m, r.depth)).collect()
    }

    pub fn exit_code(&self) -> i32 {
        self.studies.iter().map(|(_, s)| s.exit_code()).max().unwrap_or(0)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("model,depth,cumulative,environments\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.model, r.depth, format_sig9(r.cumulative), r.environments);
        }
        s
    }

    pub fn markdown(&self) -> String {
        let best = self.best_depths();
        let mut s = String::from("# RND depth sweep\n\n| Model | Depth | Cumulative | Environments |\n|---|---:|---:|---:|\n");
        for r in &self.rows {
            let score = format!("{:.2}", r.cumulative);
            let score = if best.get(&r.model) == Some(&r.depth) { format!("**{score}**") } else { score };
            let _ = writeln!(s, "| {} | {} | {score} | {} |", r.model.display_name(), r.depth, r.environments);
        }
        s
    }
}

/// Reruns every RND cell of `manifest` once per depth in
/// `manifest.sweep_depths` and sums each model's best-seed score over
/// environments. Baseline cells do not depend on depth and are skipped.
pub fn cmd_sweep_rnd_depth(manifest: &RunManifest, out: &Path, workers: usize) -> CliResult<SweepOutput> {
    let cells = manifest.cells()?;
    if manifest.sweep_depths.is_empty() || manifest.sweep_depths.contains(&0) {
        return Err(CliError::Invalid("sweep_depths must be a non-empty list of positive depths".into()));
    }
    let mut base: Vec<CellEntry> = Vec::new();
    for c in &cells {
        if c.variant == ModelVariant::Baseline {
            continue;
        }
        let entry = CellEntry {
            environment: c.environment.clone(),
            variant: c.variant.as_str().to_string(),
            rnd_depth: 0,
            seed: c.seed,
        };
        if !base.contains(&entry) {
            base.push(entry);
        }
    }
    if base.is_empty() {
        return Err(CliError::Invalid("sweep needs at least one SIL or TIL cell".into()));
    }
    let mut rows = Vec::new();
    let mut studies = Vec::new();
    for &depth in &manifest.sweep_depths {
        let mut m = manifest.clone();
        // seeds are already resolved above
        m.seed_policy = crate::manifest::SeedPolicy::Fixed;
        m.study = format!("{} (RND depth {depth})", manifest.study);
        m.cells = base.iter().map(|c| CellEntry { rnd_depth: depth, ..c.clone() }).collect();
        let study = run_study(&m, &out.join(format!("depth-{depth}")), workers)?;
        let mut best: BTreeMap<ModelVariant, BTreeMap<String, f64>> = BTreeMap::new();
        for r in &study.rows {
            let slot = best.entry(r.model_variant).or_default().entry(r.environment.clone()).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(r.performance_hns);
        }
        for (model, scores) in best {
            rows.push(SweepRow {
                model,
                depth,
                cumulative: cumulative_hns(&scores)?,
                environments: scores.len(),
            });
        }
        studies.push((depth, study));
    }
    rows.sort_by_key(|r| (r.model, r.depth));
    let sweep = SweepOutput { rows, studies };
    write_text(&out.join("sweep.csv"), &sweep.table())?;
    write_text(&out.join("sweep.md"), &sweep.markdown())?;
    Ok(sweep)
}
