//! Experiment configuration and the end-to-end train/evaluate pipeline.

mod config;
mod run;
mod systems;

pub use config::{ExperimentConfig, SystemConfig, TrainingCondition, PRESETS};
pub use run::{manifest_hash, run_pipeline, stage_seed, training_set, ArtifactMeta, PipelineOutput};
pub use systems::{
    cochleograms, train_dictionary, train_mfcc_models, train_sparse_models, Features, SparseFrontEnd, System,
};
