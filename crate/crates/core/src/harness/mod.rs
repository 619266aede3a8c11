//! Instance ingestion, generator families, the analysis pipeline with its certificate, and
//! the acceptance suite behind `pgc selftest`.

pub mod analyze;
pub mod generate;
pub mod instance;
pub mod selftest;

pub use analyze::{run_analyze, AnalyzeOptions, Certificate};
pub use generate::{generate, Family, FAMILIES};
pub use instance::{parse_instance, InstanceSpec, SchemaIssue};

use crate::algebra_core::AlgebraError;
use crate::channel::ChannelError;
use crate::qfa::QfaError;
use crate::spectral::SpectralError;
use crate::tower::TowerError;
use thiserror::Error;

/// Process exit classes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const SCHEMA: i32 = 2;
    pub const REJECTED: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
    pub const INTERNAL: i32 = 5;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("schema errors: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaIssue>),
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("bad generator parameters: {0}")]
    BadParams(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Qfa(#[from] QfaError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn tower_class(e: &TowerError) -> i32 {
    match e {
        TowerError::BasisConstructionFailed { .. } | TowerError::LevelMismatch => exit::INTERNAL,
        _ => exit::REJECTED,
    }
}

fn qfa_class(e: &QfaError) -> i32 {
    match e {
        // non-extremal inclusions are outside the supported class
        QfaError::CalibrationFailed { .. } => exit::REJECTED,
        QfaError::DecompositionFailed { .. } => exit::CHECK_FAILED,
        _ => exit::INTERNAL,
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema(_) | HarnessError::UnknownGenerator(_) | HarnessError::BadParams(_) | HarnessError::Io { .. } => {
                exit::SCHEMA
            }
            HarnessError::Algebra(_) => exit::REJECTED,
            HarnessError::Tower(e) => tower_class(e),
            HarnessError::Qfa(e) => qfa_class(e),
            HarnessError::Channel(e) => match e {
                ChannelError::NotBimodular { .. }
                | ChannelError::DoesNotPreserveM { .. }
                | ChannelError::SingularUnit { .. }
                | ChannelError::NotCP => exit::REJECTED,
                ChannelError::Tower(t) => tower_class(t),
                ChannelError::Qfa(q) => qfa_class(q),
                _ => exit::INTERNAL,
            },
            HarnessError::Spectral(e) => match e {
                SpectralError::RouteDisagreement { .. } => exit::INTERNAL,
                SpectralError::Channel(ChannelError::OracleDisagreement { .. }) => exit::INTERNAL,
                _ => exit::CHECK_FAILED,
            },
        }
    }
}

/// Reads and parses an instance file.
pub fn load_instance(path: &std::path::Path) -> Result<InstanceSpec, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_instance(&text)
}
