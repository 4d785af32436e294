//! Datasets, experiment configs, training runs, the five-way comparison and
//! checkpoints.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod experiment;
pub mod idx;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use compare::{compare_on, compare_parameterizations, Comparison, ModeSummary};
pub use config::{named_model, DatasetConfig, ExperimentConfig, ModelConfig, Schedule};
pub use experiment::{
    evaluate, init_model, load_dataset, run_experiment, train_run, Dataset, EpochRow, RunRecord, CSV_HEADER,
};
pub use idx::load_idx;
pub use synth::{synth_dataset, SynthLayout, SynthSpec};
