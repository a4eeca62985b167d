//! Experiment runner: configuration, built-in maps and forms, the
//! approximation, exterior-derivative and rigidity experiments, and CSV output.

pub mod approx;
pub mod config;
pub mod dcheck;
pub mod io;
pub mod maps;
pub mod report;
pub mod rigidity;

use std::path::PathBuf;

use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::barycenter::MeasureError;
use crate::exterior::FormError;
use crate::mollifier::{MapError, MollifyError};
use crate::pansu::PansuError;

pub use approx::{run_approximation_experiment, ApproxSetup, ConvergenceReport};
pub use config::ExperimentConfig;
pub use dcheck::{run_exterior_derivative_check, DcheckReport, DcheckSetup};
pub use report::{emit_csv, write_csv, Check, Report, ReportRow};
pub use rigidity::{run_rigidity_demo, RigidityReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: algebra rejected: {reason}", path.display())]
    InvalidAlgebra { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Mollify(#[from] MollifyError),
    #[error(transparent)]
    Pansu(#[from] PansuError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("csv output: {0}")]
    Csv(String),
}

impl HarnessError {
    /// 2 for input/output problems, 1 for failed hypotheses and preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. }
            | HarnessError::Parse { .. }
            | HarnessError::Config(_)
            | HarnessError::Csv(_) => 2,
            _ => 1,
        }
    }
}
