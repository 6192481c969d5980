//! Configuration, job execution, property suites and report emission for
//! the `cyma` command line tool.

pub mod checks;
pub mod config;
pub mod run;

pub use checks::{
    run_checks, CheckOptions, CheckRecord, CheckReport, Provenance, Relation, Suite, CHECK_SEED,
};
pub use config::{FourierMode, FourierSeries, KltConfig, Mode, RunConfig};
pub use run::{run, RunOptions, RunOutcome, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, MONITOR_HEADER};
