//! Batch front end: reads a problem file, dispatches to a solver and writes
//! trajectories, spectra, certificates and normality verdicts as JSON.

pub mod builtin;
pub mod error;
pub mod file;
pub mod locate;
pub mod overrides;
pub mod result;
pub mod run;

pub use error::{CliError, FieldError};
pub use file::{ProblemFile, SolverKind};
pub use result::{spectrum_report, ResultFile, Status};
pub use run::{load, run, solve, Input, LoadedProblem, Outcome};
