//! Study manifests: which environments, which variants, which seeds.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rndedt_core::edt::{SyntheticDataset, SyntheticEnvSpec, ToyEdtConfig};
use rndedt_core::ModelVariant;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub study: String,
    #[serde(default = "default_train_steps")]
    pub train_steps: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    /// Added to every cell seed under [`SeedPolicy::Offset`]; `--seed`
    /// overrides it.
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default = "default_sweep_depths")]
    pub sweep_depths: Vec<usize>,
    #[serde(default, rename = "environment")]
    pub environments: Vec<EnvironmentEntry>,
    #[serde(default, rename = "cell")]
    pub cells: Vec<CellEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Cell seed plus the global seed.
    #[default]
    Offset,
    /// Cell seeds used verbatim; the global seed is ignored.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub dataset_episodes: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings { learning_rate: 1e-3, weight_decay: 1e-4, batch_size: 16, dataset_episodes: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub attention_blocks: usize,
    pub heads: usize,
    pub context_length: usize,
    pub return_bins: usize,
    pub rnd_width: usize,
    pub history_candidates: Vec<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            embed_dim: 32,
            attention_blocks: 2,
            heads: 2,
            context_length: 20,
            return_bins: 21,
            rnd_width: 512,
            history_candidates: vec![1, 5, 10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub repetitions: usize,
    pub max_steps: usize,
    /// Episodes used to estimate the random-policy anchor.
    pub anchor_episodes: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings { repetitions: 3, max_steps: 1000, anchor_episodes: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentEntry {
    pub name: String,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub seed: u64,
    pub process_noise: Option<f64>,
    pub policy_noise: Option<f64>,
    pub episode_length: Option<usize>,
    pub initial_state_scale: Option<f64>,
}

impl EnvironmentEntry {
    pub fn spec(&self) -> CliResult<SyntheticEnvSpec> {
        let mut spec = SyntheticEnvSpec::random(&self.name, &self.dataset, self.state_dim, self.action_dim, self.seed)
            .map_err(|e| CliError::context(format!("environment '{}'", self.name), e))?;
        if let Some(v) = self.process_noise {
            spec.process_noise = v;
        }
        if let Some(v) = self.policy_noise {
            spec.policy_noise = v;
        }
        if let Some(v) = self.episode_length {
            spec.episode_length = v;
        }
        if let Some(v) = self.initial_state_scale {
            spec.initial_state_scale = v;
        }
        spec.validate().map_err(|e| CliError::context(format!("environment '{}'", self.name), e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub environment: String,
    pub variant: String,
    #[serde(default = "default_rnd_depth")]
    pub rnd_depth: usize,
    #[serde(default)]
    pub seed: u64,
}

/// A validated cell with its effective seed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cell {
    pub environment: String,
    pub variant: ModelVariant,
    pub rnd_depth: usize,
    pub seed: u64,
}

impl Cell {
    /// File-name stem shared by the cell's checkpoint, log and dumps.
    pub fn id(&self) -> String {
        match self.variant {
            ModelVariant::Baseline => format!("{}-{}-s{}", self.environment, self.variant, self.seed),
            _ => format!("{}-{}-d{}-s{}", self.environment, self.variant, self.rnd_depth, self.seed),
        }
    }
}

fn default_train_steps() -> usize {
    200
}

fn default_sweep_depths() -> Vec<usize> {
    vec![1, 3, 10]
}

fn default_dataset() -> String {
    "medium".into()
}

fn default_rnd_depth() -> usize {
    3
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| CliError::Invalid(format!("manifest: {e}")))?;
        m.cells()?;
        Ok(m)
    }

    pub fn with_global_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.global_seed = s;
        }
        self
    }

    pub fn environment(&self, name: &str) -> CliResult<&EnvironmentEntry> {
        self.environments
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CliError::Invalid(format!("unknown environment '{name}'")))
    }

    /// Validates and resolves every cell.
    pub fn cells(&self) -> CliResult<Vec<Cell>> {
        let mut names = HashSet::new();
        for env in &self.environments {
            if !names.insert(env.name.as_str()) {
                return Err(CliError::Invalid(format!("environment '{}' defined twice", env.name)));
            }
        }
        if self.training.batch_size == 0 || self.training.dataset_episodes == 0 {
            return Err(CliError::Invalid("batch_size and dataset_episodes must be positive".into()));
        }
        if self.evaluation.repetitions == 0 {
            return Err(CliError::Invalid("evaluation.repetitions must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let label = format!("cell {} ({} / {} / seed {})", i + 1, c.environment, c.variant, c.seed);
            let variant: ModelVariant = c.variant.parse().map_err(|e| CliError::context(label.clone(), e))?;
            if !names.contains(c.environment.as_str()) {
                return Err(CliError::Invalid(format!("{label}: unknown environment '{}'", c.environment)));
            }
            if variant != ModelVariant::Baseline && c.rnd_depth == 0 {
                return Err(CliError::Invalid(format!("{label}: rnd_depth must be at least 1")));
            }
            let seed = match self.seed_policy {
                SeedPolicy::Offset => c.seed.wrapping_add(self.global_seed),
                SeedPolicy::Fixed => c.seed,
            };
            let cell = Cell {
                environment: c.environment.clone(),
                variant,
                rnd_depth: if variant == ModelVariant::Baseline { 0 } else { c.rnd_depth },
                seed,
            };
            if !seen.insert(cell.clone()) {
                return Err(CliError::Invalid(format!("{label}: duplicate cell")));
            }
            out.push(cell);
        }
        Ok(out)
    }

    /// Model configuration for `cell`, scaled to the cell's dataset.
    pub fn model_config(&self, cell: &Cell, spec: &SyntheticEnvSpec, data: &SyntheticDataset) -> ToyEdtConfig {
        let m = &self.model;
        let mut c = ToyEdtConfig::new(spec.state_dim, spec.action_dim, cell.variant)
            .with_embed_dim(m.embed_dim)
            .with_rnd_shape(cell.rnd_depth, m.rnd_width);
        c.num_attention_blocks = m.attention_blocks;
        c.num_heads = m.heads;
        c.context_length = m.context_length;
        c.return_bins = m.return_bins;
        c.seed = cell.seed;
        let scale = data.max_abs_return_to_go();
        c.return_scale = if scale > 0.0 { scale } else { 1.0 };
        c.eval_target_return = data.max_episode_return();
        c.history_candidates = m.history_candidates.iter().copied().filter(|&k| k <= m.context_length).collect();
        c
    }

    /// `--out` (or its environment variable) wins over the manifest.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("rndedt-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
study = "s"
train_steps = 3

[[environment]]
name = "toy"
state_dim = 3
action_dim = 2
seed = 1

[[cell]]
environment = "toy"
variant = "SIL"
seed = 4
"#;

    #[test]
    fn parses_defaults() {
        let m = RunManifest::parse(SMALL).unwrap();
        assert_eq!(m.model, ModelSettings::default());
        let cells = m.cells().unwrap();
        assert_eq!(cells[0].id(), "toy-SIL-d3-s4");
        let shifted = m.with_global_seed(Some(10));
        assert_eq!(shifted.cells().unwrap()[0].seed, 14);
    }

    #[test]
    fn unknown_variant_names_the_cell() {
        let bad = SMALL.replace("\"SIL\"", "\"PPO\"");
        let msg = RunManifest::parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("cell 1") && msg.contains("PPO"), "{msg}");
    }

    #[test]
    fn duplicate_cells_and_missing_environments() {
        let dup = format!("{SMALL}\n[[cell]]\nenvironment = \"toy\"\nvariant = \"sil\"\nseed = 4\n");
        assert!(RunManifest::parse(&dup).unwrap_err().to_string().contains("duplicate"));
        let missing = SMALL.replace("environment = \"toy\"", "environment = \"nope\"");
        assert!(RunManifest::parse(&missing).unwrap_err().to_string().contains("nope"));
    }
}
