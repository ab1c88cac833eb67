//! Scenario files and the `solve`, `simulate` and `check` workflows behind
//! the `wkelly` binary.
//!
//! Every run produces one JSON [`Report`] plus a plain-text table. Exit
//! statuses are fixed:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | file could not be read or written |
//! | 2 | bad command line |
//! | 3 | scenario is not valid JSON or does not fit the schema |
//! | 4 | scenario breaks a model invariant or an argument is out of range |
//! | 5 | the constraint set is empty |
//! | 6 | a numerical routine did not converge |
//! | 7 | the run finished and found a violation |

mod run;
mod scenario;

pub use run::{
    balance_holds, run_scenario, CheckReport, Command, ContinuousCheck, Feasibility, Report,
    RunOptions, SimulateReport, SolveReport,
};
pub use scenario::{
    parse_scenario, serialize_scenario, AssetSpec, Market, RunSpec, ScenarioConfig,
};

use thiserror::Error;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;
pub const EXIT_NO_CONVERGENCE: i32 = 6;
pub const EXIT_VIOLATION: i32 = 7;

/// Failures of a CLI run, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Lib(e) => match e {
                Error::Validation(_) | Error::InvalidInput(_) => EXIT_VALIDATION,
                Error::Infeasible(_) => EXIT_INFEASIBLE,
                Error::NoConvergence(_) => EXIT_NO_CONVERGENCE,
                Error::RuinViolation { .. } => EXIT_VIOLATION,
            },
        }
    }
}
