//! Published tables shipped as regression fixtures.

use std::collections::BTreeMap;

use rndedt_core::io::parse_results;
use rndedt_core::{MetricName, ModelVariant, RunRecord};

pub const MEDIUM_EMBEDDINGS: &str = include_str!("../fixtures/medium_embeddings.csv");
pub const MEDIUM_REPLAY_EMBEDDINGS: &str = include_str!("../fixtures/medium_replay_embeddings.csv");
pub const SCORES: &str = include_str!("../fixtures/scores.csv");
pub const STRONGEST_CORRELATIONS: &str = include_str!("../fixtures/strongest_correlations.csv");

/// Performance and embedding metrics per environment and model, medium tier.
pub fn medium_embeddings() -> Vec<RunRecord> {
    parse_results(MEDIUM_EMBEDDINGS).expect("fixture parses")
}

pub fn medium_replay_embeddings() -> Vec<RunRecord> {
    parse_results(MEDIUM_REPLAY_EMBEDDINGS).expect("fixture parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub dataset: String,
    pub model: ModelVariant,
    pub environment: String,
    pub mean: f64,
    pub std: f64,
}

/// Mean ± std normalised scores over five seeds.
pub fn scores() -> Vec<ScoreRow> {
    let mut rdr = csv::Reader::from_reader(SCORES.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("fixture row");
            ScoreRow {
                dataset: r[0].to_string(),
                model: r[1].parse().expect("fixture variant"),
                environment: r[2].to_string(),
                mean: r[3].parse().expect("fixture mean"),
                std: r[4].parse().expect("fixture std"),
            }
        })
        .collect()
}

/// Per-environment mean scores of one model on one dataset tier.
pub fn score_row(dataset: &str, model: ModelVariant) -> BTreeMap<String, f64> {
    scores()
        .into_iter()
        .filter(|s| s.dataset == dataset && s.model == model)
        .map(|s| (s.environment, s.mean))
        .collect()
}

/// The metric and coefficient printed next to each environment.
pub fn strongest_correlations() -> Vec<(String, MetricName, f64)> {
    let mut rdr = csv::Reader::from_reader(STRONGEST_CORRELATIONS.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("fixture row");
            (r[0].to_string(), r[1].parse().expect("fixture metric"), r[2].parse().expect("fixture r"))
        })
        .collect()
}

/// Models printed in bold per environment, medium tier.
pub const MEDIUM_BEST: [(&str, ModelVariant); 4] = [
    ("Ant", ModelVariant::Sil),
    ("HalfCheetah", ModelVariant::Sil),
    ("Hopper", ModelVariant::Til),
    ("Walker2d", ModelVariant::Til),
];
