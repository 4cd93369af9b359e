//! Experiment plumbing: configuration, synthetic smart-meter data, household
//! clustering, supervised windowing, experiment orchestration and report files.

mod config;
mod experiment;
mod kmeans;
mod report;
mod synth;
mod tables;
mod window;

pub use config::{
    AttackSpec, DmsSpec, ExperimentConfig, ForecastSpec, LearningSpec, NoiseSpec, PoisonSpec,
    QuadraticLayout, QuadraticSpec, SecureSpec, TaskSpec, DEFAULT_FORECAST_GAMMA,
};
pub use experiment::{
    build_schedule, run_experiment, run_sweep, select_households, AttackRecord, ExperimentReport,
    ReportHeader, RunSummary, SweepPoint,
};
pub use kmeans::{kmeans, kmeans_profiles, select_from_largest, Clustering, MAX_LLOYD_ITERATIONS};
pub use report::{
    report_lines, write_meta, write_report, write_transcript, CONFIG_ECHO_FILE, META_FILE,
    REPORT_FILE, TRANSCRIPT_FILE,
};
pub use synth::{
    archetype_curve, expected_daily_curve, gen_synthetic_load, gen_synthetic_load_with,
    LoadProfile, SynthConfig, ARCHETYPES, SLOTS_PER_DAY,
};
pub use tables::{emit_tables, CommunicationRow, Grid, SummaryRow, Tables};
pub use window::{window_dataset, MinMax, WindowSplits, TRAIN_FRACTION, VALIDATION_FRACTION};
