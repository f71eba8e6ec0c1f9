//! Experiment orchestration: TOML configs, dataset resolution, seeded runs with
//! their clean counterparts, result bundles and κ / E sweeps.

mod config;
mod data;
mod defense;
mod run;
mod sweep;

pub use config::{
    AttackSpec, DataKind, DatasetSpec, DefenseKind, DefenseSpec, Deployment, ExperimentConfig,
    PartitionKind, PartitionSpec, ReportSpec, MNIST_DIR_ENV, MNIST_FILES,
};
pub use data::{load_data, LoadedData};
pub use defense::{DetectionLog, PeriodDetections};
pub use run::{
    fl_config, gan_poisoned, poisoned_clients, prepare, resolve_output_dir, run_experiment, simulate,
    summarize, write_bundle, Population, RunOutput, Simulation, Summary, CONVENTIONS, OUTPUT_ROOT_ENV,
};
pub use sweep::{sweep, write_sweep_csv, SweepRow};
