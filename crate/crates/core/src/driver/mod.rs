//! Run orchestration, presets, convergence studies and file formats.

pub mod config;
pub mod convergence;
pub mod io;
pub mod presets;
pub mod simulation;

pub use config::{parse_config_text, read_config_file, ModelParams, RunConfig};
pub use convergence::{convergence_study, halving_sequence, ConvergenceRow, ConvergenceTable};
pub use io::{
    read_snapshot, read_timeseries, write_snapshot, write_timeseries, Snapshot, TimeSeriesRow, SERIES_HEADER,
};
pub use presets::Preset;
pub use simulation::{diagnostics, run, Relaxation, RunSummary, Simulation, StepReport};
