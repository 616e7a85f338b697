//! Training, evaluation and experiment runners.
//!
//! Every run draws its randomness from streams derived from one seed, so a
//! report is reproducible from its embedded configuration and the dataset.

pub mod config;
pub mod experiments;
pub mod export;
pub mod model;
pub mod report;
pub mod split;
pub mod train;

pub use config::{load_dataset, DataSource, Dataset, RunConfig, Variant};
pub use experiments::{
    embedding_table, expand_grid, export_embeddings, parse_axis, run_ablation, run_ablation_on,
    run_grid, run_noise_robustness, run_noise_robustness_on, AblationResult, RetentionRow,
    RetentionTable,
};
pub use export::{
    format_embeddings, parse_embeddings, read_embeddings, write_embeddings, ExportTable,
    ExportedTable,
};
pub use model::{side_types, ForwardPass, Model, ModelParams, Optimizer, SideMode};
pub use report::{
    reports_to_json, BucketReport, Checkpoint, EpochLog, EvalPoint, EvalReport, Timing,
};
pub use split::{leave_one_out, split_labels, LeaveOneOut};
pub use train::{
    evaluate, evaluate_checkpoint, evaluate_leave_one_out, fit, prepare, run, sample_triplets,
    train, Evaluation, Prepared, TaskData, TrainOutcome,
};
