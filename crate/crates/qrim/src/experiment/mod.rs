//! Reproducible experiment harness: dataset generation, training/evaluation
//! over model grids, bit-width sweeps, and CSV emission.

pub mod config;
pub mod dataset;
pub mod runner;

pub use config::{mix_seed, CfarSection, DatasetConfig, ExperimentConfig, ModelEntry, TrainingConfig};
pub use dataset::{
    dataset_from_bytes, dataset_to_bytes, generate_all, generate_split, read_all, read_dataset,
    split_path, write_all, write_dataset, Dataset, ExperimentData, SnapshotRecord, Split,
};
pub use runner::{
    build_patchset, evaluate_model, infer, run_experiment, score_raw_maps, AggregateRecord,
    ExperimentSummary, RunRecord, RunStatus,
};
