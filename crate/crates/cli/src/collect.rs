//! `dump-embeddings` and `metrics`: rollouts to dump files to result rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rndedt_core::edt::{collect_rollouts, generate_dataset, random_policy_return, SyntheticEnvSpec};
use rndedt_core::io::{load_model, read_embedding_dump_full, write_embedding_dump_with, DumpManifest};
use rndedt_core::stats::hns;
use rndedt_core::{metrics_for_run, Error, ModelVariant, RunRecord};

use crate::error::{CliError, CliResult, Context};
use crate::manifest::{Cell, RunManifest};
use crate::train::{checkpoint_path, pool};

pub const DUMP_EXTENSION: &str = "edte";
pub const DEFAULT_REPETITIONS: usize = 3;

/// Returns that map to 0 and 100 on the normalised scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreAnchors {
    pub random: f64,
    pub reference: f64,
}

impl ScoreAnchors {
    /// The zero-gain noise policy anchors 0; the best episode of the
    /// offline dataset anchors 100.
    pub fn for_environment(manifest: &RunManifest, spec: &SyntheticEnvSpec) -> CliResult<Self> {
        let label = || format!("anchors for '{}'", spec.name);
        let random = random_policy_return(spec, manifest.evaluation.anchor_episodes.max(1)).context_with(label)?;
        let data = generate_dataset(spec, manifest.training.dataset_episodes, manifest.model.return_bins)
            .context_with(label)?;
        Ok(ScoreAnchors { random, reference: data.max_episode_return() })
    }
}

pub fn dump_path(dir: &Path, stem: &str, repetition: usize) -> PathBuf {
    dir.join(format!("{stem}-r{repetition}.{DUMP_EXTENSION}"))
}

/// Rolls a checkpoint out `repetitions` times and writes one dump per
/// episode, tagged with its return and normalised score.
pub fn cmd_dump_embeddings(
    checkpoint: &Path,
    spec: &SyntheticEnvSpec,
    anchors: ScoreAnchors,
    repetitions: usize,
    max_steps: usize,
    out_dir: &Path,
    stem: &str,
) -> CliResult<Vec<PathBuf>> {
    if repetitions == 0 {
        return Err(CliError::Invalid("repetitions must be at least 1".into()));
    }
    let model = load_model(checkpoint).context_with(|| checkpoint.display().to_string())?;
    let rollouts = collect_rollouts(&model, spec, repetitions, max_steps)
        .context_with(|| format!("rollout of {}", checkpoint.display()))?;
    fs::create_dir_all(out_dir).map_err(Error::Write).context_with(|| out_dir.display().to_string())?;
    let mut paths = Vec::with_capacity(rollouts.len());
    for (k, r) in rollouts.iter().enumerate() {
        let mut manifest = DumpManifest::for_set(&r.embeddings);
        manifest.episode_return = Some(r.episode_return);
        manifest.performance_hns =
            Some(hns(r.episode_return, anchors.random, anchors.reference).context_with(|| stem.to_string())?);
        let path = dump_path(out_dir, stem, k);
        write_embedding_dump_with(&r.embeddings, &manifest, &path).context_with(|| path.display().to_string())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Dumps every cell of a study that has a checkpoint; cells without one
/// (failed training) are returned separately.
pub fn dump_study(
    manifest: &RunManifest,
    cells: &[Cell],
    out: &Path,
    repetitions: usize,
    workers: usize,
) -> CliResult<(Vec<PathBuf>, Vec<Cell>)> {
    let dir = out.join("dumps");
    let mut anchors = BTreeMap::new();
    for cell in cells {
        if !anchors.contains_key(&cell.environment) {
            let spec = manifest.environment(&cell.environment)?.spec()?;
            let a = ScoreAnchors::for_environment(manifest, &spec)?;
            anchors.insert(cell.environment.clone(), (spec, a));
        }
    }
    let (ready, missing): (Vec<&Cell>, Vec<&Cell>) = cells.iter().partition(|c| checkpoint_path(out, c).exists());
    let written = pool(workers)?.install(|| {
        ready
            .par_iter()
            .map(|cell| {
                let (spec, a) = &anchors[&cell.environment];
                cmd_dump_embeddings(
                    &checkpoint_path(out, cell),
                    spec,
                    *a,
                    repetitions,
                    manifest.evaluation.max_steps,
                    &dir,
                    &cell.id(),
                )
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok((written.into_iter().flatten().collect(), missing.into_iter().cloned().collect()))
}

/// `name-r3` and `name-r12` share the group `name`.
pub fn group_key(stem: &str) -> &str {
    match stem.rsplit_once("-r") {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => stem,
    }
}

fn list_dumps(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|e| e == DUMP_EXTENSION) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// One results row per dump group (files sharing a stem up to `-r<k>`).
///
/// Every file in a group must carry the same provenance; the metrics are
/// averaged over the group's episodes and the performance column is the
/// mean normalised score recorded in the dump manifests.
pub fn cmd_metrics(dump_dir: &Path) -> CliResult<Vec<RunRecord>> {
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for path in list_dumps(dump_dir)? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        groups.entry(group_key(stem).to_string()).or_default().push(path);
    }
    let mut rows: Vec<RunRecord> = Vec::with_capacity(groups.len());
    let mut owners: BTreeMap<(String, ModelVariant, String, u64), String> = BTreeMap::new();
    for (key, files) in &groups {
        let mut sets = Vec::with_capacity(files.len());
        let mut perf = Vec::with_capacity(files.len());
        for path in files {
            let (set, m) = read_embedding_dump_full(path).context_with(|| path.display().to_string())?;
            if let Some(first) = sets.first().map(|s: &rndedt_core::EmbeddingSet| &s.meta) {
                if !set.meta.same_run(first) {
                    return Err(CliError::context(
                        format!("group '{key}'"),
                        Error::InconsistentEpisodes(format!(
                            "{} and {} come from different runs",
                            files[0].display(),
                            path.display()
                        )),
                    ));
                }
            }
            let p = m
                .performance_hns
                .ok_or_else(|| CliError::Invalid(format!("{}: manifest has no performance score", path.display())))?;
            perf.push(p);
            sets.push(set);
        }
        let record = metrics_for_run(&sets).context_with(|| format!("group '{key}'"))?;
        let meta = &sets[0].meta;
        let variant: ModelVariant = meta.model_variant.parse().context_with(|| files[0].display().to_string())?;
        let id = (meta.environment.clone(), variant, meta.dataset.clone(), meta.seed);
        if let Some(other) = owners.insert(id, key.clone()) {
            return Err(CliError::Invalid(format!(
                "groups '{other}' and '{key}' describe the same environment, model, dataset and seed"
            )));
        }
        rows.push(RunRecord {
            environment: meta.environment.clone(),
            model_variant: variant,
            dataset: meta.dataset.clone(),
            seed: meta.seed,
            performance_hns: perf.iter().sum::<f64>() / perf.len() as f64,
            metrics: record,
        });
    }
    Ok(rows)
}
