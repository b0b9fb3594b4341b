use std::path::PathBuf;

use diffeoflow::chain::ChainError;
use diffeoflow::field::FieldError;
use diffeoflow::fit::FitError;
use diffeoflow::integrate::IntegrateError;
use diffeoflow::mesh_io::MeshIoError;
use diffeoflow::metrics::MetricsError;
use diffeoflow::template::TemplateError;
use diffeoflow::MeshError;
use serde_json::json;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FRAME_MISMATCH: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
    pub const TOPOLOGY: i32 = 6;
    pub const CONTAINMENT: i32 = 7;
    pub const INVALID_INPUT: i32 = 8;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    MeshIo(#[from] MeshIoError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{0}")]
    Invalid(String),
}

fn mesh_io_kind(e: &MeshIoError) -> (&'static str, i32) {
    match e {
        MeshIoError::Io { .. } => ("io", exit::IO),
        _ => ("invalid_mesh", exit::INVALID_INPUT),
    }
}

fn field_kind(e: &FieldError) -> (&'static str, i32) {
    match e {
        FieldError::Io { .. } => ("io", exit::IO),
        FieldError::UnknownKind(_) | FieldError::InvalidParams { .. } => ("usage", exit::USAGE),
        _ => ("invalid_field", exit::INVALID_INPUT),
    }
}

fn chain_kind(e: &ChainError) -> (&'static str, i32) {
    match e {
        ChainError::FrameMismatch { .. } => ("frame_mismatch", exit::FRAME_MISMATCH),
        ChainError::Field(f) => field_kind(f),
        ChainError::MeshIo(m) => mesh_io_kind(m),
        _ => ("invalid_chain", exit::INVALID_INPUT),
    }
}

impl CliError {
    /// Machine-readable error kind and exit code.
    pub fn kind(&self) -> (&'static str, i32) {
        match self {
            CliError::Usage(_) => ("usage", exit::USAGE),
            CliError::Io { .. } => ("io", exit::IO),
            CliError::MeshIo(e) => mesh_io_kind(e),
            CliError::Field(e) => field_kind(e),
            CliError::Chain(e) => chain_kind(e),
            CliError::Template(e) => match e {
                TemplateError::TopologyFailure { .. } => ("topology_failure", exit::TOPOLOGY),
                TemplateError::ContainmentFailure { .. } => ("containment_failure", exit::CONTAINMENT),
                _ => ("invalid_input", exit::INVALID_INPUT),
            },
            CliError::Fit(e) => match e {
                FitError::DivergenceDetected { .. } => ("divergence_detected", exit::DIVERGENCE),
                FitError::Chain(c) => chain_kind(c),
                FitError::Field(f) => field_kind(f),
                _ => ("invalid_input", exit::INVALID_INPUT),
            },
            CliError::Metrics(_) | CliError::Integrate(_) | CliError::Mesh(_) | CliError::Invalid(_) => {
                ("invalid_input", exit::INVALID_INPUT)
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().1
    }

    /// One-line JSON diagnostic.
    pub fn to_json(&self) -> String {
        let (kind, code) = self.kind();
        json!({ "error": kind, "exit_code": code, "message": self.to_string() }).to_string()
    }
}

pub fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
