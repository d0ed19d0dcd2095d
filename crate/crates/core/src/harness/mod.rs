//! Experiment configuration, seeded sweeps, CSV output and the command line.

pub mod cli;
mod config;
mod records;
mod sweeps;

pub use cli::cli_main;
pub use config::{
    ExperimentConfig, ExperimentKind, ImageSettings, MlpSettings, ModelKind, PgdSettings, ProbeSettings, SvmSettings,
};
pub use records::{
    bvd_csv, emit_csv, parse_bvd_csv, parse_sweep_csv, sweep_csv, BvdRecord, ImageMetrics, SweepRecord, SweepSchema,
};
pub use sweeps::{
    image_data_dir, run_and_write, run_bvd, run_gaussian_sweep, run_image_sweep, with_workers, RunOutput, WORKERS_ENV,
};
