//! Experiment runner behind the `mimo-cfo` binary: configuration, bound
//! sweeps, Monte-Carlo MSE sweeps and CSV output.
//!
//! Sweeps run on the ambient rayon pool. Each trial draws from its own
//! stream ([`crate::rng::trial_stream`]) and results are reduced in trial
//! order, so output is byte-identical for any worker count.

mod config;
mod output;
mod sweep;
pub mod validate;

pub use config::{ExperimentConfig, PriorSpec, SweepSpec, TruthMode};
pub use output::{write_csv, write_plot_data, CSV_HEADER};
pub use sweep::{
    run_bounds_vs_rho, run_bounds_vs_snr, run_mse_vs_snr, run_single, SingleOptions, SweepResult,
    SweepRow, TrialRecord,
};
