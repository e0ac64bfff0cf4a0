//! Toy elastic decision transformer with optional RND auxiliary losses.

mod block;
mod config;
mod env;
mod loss;
mod model;
mod rollout;
mod train;

pub use block::Block;
pub use config::{LossWeights, OptimizerConfig, ToyEdtConfig};
pub use env::{
    generate_dataset, random_policy_return, spectral_radius, ReturnBins, SyntheticDataset, SyntheticEnvSpec,
    Trajectory, TrajectoryBatch,
};
pub use loss::{expectile_loss, LossComponents};
pub use model::{EdtNet, ModelGrads, Predictions, ToyEdtModel, TokenSequence, TransformerOutput, TOKENS_PER_STEP};
pub use rollout::{
    collect_embeddings, collect_rollouts, rollout, select_history_length, History, ReturnEstimator, Rollout,
};
pub use train::{
    clip_global_norm, gradient_check, relative_error, train_step, AdamW, GradCheckReport, StepReport, Trainer,
    FD_ABS_FLOOR, FD_SAMPLES_PER_TENSOR, FD_STEP,
};
