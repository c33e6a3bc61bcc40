//! Experiment configuration, execution, metrics and result files.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod synthetic;

pub use config::{ExperimentConfig, InitialCondition};
pub use experiment::{run_experiment, write_results, ExperimentResult, TrajectoryReport, Workspace};
pub use metrics::{deviation, relative_energy_error, relative_l2_error, ErrorRecord};
pub use synthetic::{synthetic_permeability, SyntheticLayout};
