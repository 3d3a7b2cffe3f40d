//! Config-driven experiments, reports and artifact writers.

pub mod config;
pub mod io;
pub mod report;
pub mod rng;
pub mod scenarios;

pub use config::Config;
pub use report::Report;
pub use rng::{random_positive_field, seeded_rng, SeededRng};
pub use scenarios::{
    convergence_study, epsilon_sweep, run, run_text, ExperimentConfig, Scenario, SweepResult,
};
