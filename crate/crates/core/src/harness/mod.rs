//! Experiment configuration, metrics, and the end-to-end runs behind the CLI.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{default_step_sizes, CostFamily, ExperimentConfig, ModelSpec};
pub use experiment::{
    compare_triplets, perturbation_grid, run_experiment, run_nonquadratic, sweep_perturbation, trace, RunOutput,
    RunSummary, Setup,
};
