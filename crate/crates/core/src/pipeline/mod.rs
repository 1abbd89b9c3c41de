//! Experiment orchestration: declarative configs, feature caching, training runs, threshold
//! tuning, scoring reports and single-file prediction.

mod config;
mod evaluate;
mod experiment;
mod features;
mod predict;
mod report;

pub use config::{DatasetFilter, ExperimentConfig, ExperimentKind, CACHE_DIR_ENV, DATA_ROOT_ENV};
pub use evaluate::{
    discover_annotated_audio, evaluate_items, predict_items, score_pairs, score_paths, tune_threshold, EvalFile,
    Evaluation, FileScores, SalienceItem,
};
pub use experiment::{plan_data, run_experiment, training_fingerprint, write_report, DataPlan, ReportBundle, RunReport};
pub use features::{FeatureStore, FEATURE_EXTENSION};
pub use predict::{
    predict_file, render_salience, write_salience_png, Prediction, PredictionSummary, ThresholdSource,
    FALLBACK_THRESHOLD,
};
pub use report::{evaluation_table, render_table};
