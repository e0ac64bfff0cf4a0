//! `train`: one checkpoint and one loss log per manifest cell.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rndedt_core::edt::{generate_dataset, LossComponents, OptimizerConfig, StepReport, ToyEdtModel, Trainer};
use rndedt_core::io::save_model;

use crate::error::{CliError, CliResult, Context, EXIT_NUMERICAL};
use crate::manifest::{Cell, RunManifest};

pub const LOG_HEADER: &str = "step,total,action,state,expectile,ret,intrinsic,grad_norm\n";

pub fn checkpoint_path(out: &Path, cell: &Cell) -> PathBuf {
    out.join("checkpoints").join(format!("{}.ckpt", cell.id()))
}

pub fn log_path(out: &Path, cell: &Cell) -> PathBuf {
    out.join("logs").join(format!("{}.csv", cell.id()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Trained,
    /// Training stopped at a failing step; the message names the cause.
    Failed { numerical: bool, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub steps_completed: usize,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub outcomes: Vec<CellOutcome>,
}

impl TrainSummary {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.outcomes.iter().filter(|o| o.status != CellStatus::Trained)
    }

    pub fn trained(&self) -> impl Iterator<Item = &Cell> {
        self.outcomes.iter().filter(|o| o.status == CellStatus::Trained).map(|o| &o.cell)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,status,steps,message\n");
        for o in &self.outcomes {
            let (status, msg) = match &o.status {
                CellStatus::Trained => ("trained", String::new()),
                CellStatus::Failed { numerical: true, message } => ("diverged", message.replace(',', ";")),
                CellStatus::Failed { numerical: false, message } => ("failed", message.replace(',', ";")),
            };
            let _ = writeln!(s, "{},{status},{},{msg}", o.cell.id(), o.steps_completed);
        }
        s
    }
}

pub fn log_line(step: usize, r: &StepReport) -> String {
    let LossComponents { action, state, expectile, ret, intrinsic, total } = r.loss;
    format!("{step},{total},{action},{state},{expectile},{ret},{intrinsic},{}\n", r.grad_norm)
}

pub(crate) fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Invalid(format!("worker pool: {e}")))
}

pub fn write_text(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(rndedt_core::Error::Write).context_with(|| dir.display().to_string())?;
    }
    fs::write(path, contents)
        .map_err(rndedt_core::Error::Write)
        .context_with(|| path.display().to_string())
}

/// Builds the model for a cell without training it, so configuration
/// errors surface before any work starts.
fn prepare(manifest: &RunManifest, cell: &Cell) -> CliResult<(ToyEdtModel, rndedt_core::edt::SyntheticDataset)> {
    let spec = manifest.environment(&cell.environment)?.spec()?;
    let data = generate_dataset(&spec, manifest.training.dataset_episodes, manifest.model.return_bins)
        .context_with(|| format!("cell {}", cell.id()))?;
    let config = manifest.model_config(cell, &spec, &data);
    let model = ToyEdtModel::new(config).context_with(|| format!("cell {}", cell.id()))?;
    Ok((model, data))
}

fn failed(cell: &Cell, step: usize, e: &CliError) -> CellOutcome {
    CellOutcome {
        cell: cell.clone(),
        steps_completed: step,
        status: CellStatus::Failed { numerical: e.exit_code() == EXIT_NUMERICAL, message: e.to_string() },
    }
}

fn train_cell(manifest: &RunManifest, cell: &Cell, out: &Path) -> CliResult<CellOutcome> {
    let ckpt = checkpoint_path(out, cell);
    if ckpt.exists() {
        fs::remove_file(&ckpt).map_err(|e| CliError::Invalid(format!("{}: {e}", ckpt.display())))?;
    }
    let (model, data) = match prepare(manifest, cell) {
        Ok(v) => v,
        Err(e) => {
            write_text(&log_path(out, cell), LOG_HEADER)?;
            return Ok(failed(cell, 0, &e));
        }
    };
    let opt = OptimizerConfig {
        learning_rate: manifest.training.learning_rate,
        weight_decay: manifest.training.weight_decay,
        ..OptimizerConfig::default()
    };
    let mut trainer = Trainer::new(model, opt, manifest.training.batch_size);
    let mut log = String::from(LOG_HEADER);
    for step in 0..manifest.train_steps {
        match trainer.step(&data) {
            Ok(r) => log.push_str(&log_line(step, &r)),
            Err(e) => {
                write_text(&log_path(out, cell), &log)?;
                return Ok(failed(cell, step, &CliError::context(format!("cell {}", cell.id()), e)));
            }
        }
    }
    write_text(&log_path(out, cell), &log)?;
    fs::create_dir_all(out.join("checkpoints")).map_err(|e| CliError::Invalid(format!("{}: {e}", out.display())))?;
    save_model(&trainer.model, &ckpt).context_with(|| ckpt.display().to_string())?;
    Ok(CellOutcome { cell: cell.clone(), steps_completed: manifest.train_steps, status: CellStatus::Trained })
}

/// Trains every cell. A cell that fails numerically is recorded and the
/// rest of the study continues; configuration errors abort up front.
pub fn cmd_train(manifest: &RunManifest, out: &Path, workers: usize) -> CliResult<TrainSummary> {
    let cells = manifest.cells()?;
    for cell in &cells {
        if let Err(e) = prepare(manifest, cell) {
            if e.exit_code() != EXIT_NUMERICAL {
                return Err(e);
            }
        }
    }
    let outcomes = pool(workers)?.install(|| {
        cells
            .par_iter()
            .map(|cell| train_cell(manifest, cell, out))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let summary = TrainSummary { outcomes };
    write_text(&out.join("train_summary.csv"), &summary.to_csv())?;
    Ok(summary)
}
