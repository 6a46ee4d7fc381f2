//! Error classification into process exit codes.

use std::path::Path;

use monoball::ballistic::BallisticError;
use monoball::data::DataError;
use monoball::estimation::EstimationError;
use monoball::geometry::GeometryError;
use monoball::imageproc::ImageProcError;
use monoball::pipeline::PipelineError;
use monoball_service::SessionError;

pub const INTERNAL: u8 = 1;
pub const USAGE: u8 = 2;
pub const VALIDATION: u8 = 3;
pub const NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(VALIDATION, message)
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(INTERNAL, e.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(io_code(&e), format!("{}: {e}", path.display()))
    }
}

fn io_code(e: &std::io::Error) -> u8 {
    match e.kind() {
        std::io::ErrorKind::NotFound => USAGE,
        _ => INTERNAL,
    }
}

fn geometry_code(_: &GeometryError) -> u8 {
    NUMERIC
}

fn imageproc_code(e: &ImageProcError) -> u8 {
    match e {
        ImageProcError::Io(e) => io_code(e),
        ImageProcError::Image(_) => INTERNAL,
        ImageProcError::Geometry(g) => geometry_code(g),
        _ => VALIDATION,
    }
}

fn data_code(e: &DataError) -> u8 {
    match e {
        DataError::Io { source, .. } => io_code(source),
        DataError::UnknownImage(_) | DataError::UnknownTrajectory(_) => USAGE,
        DataError::Geometry { source, .. } => geometry_code(source),
        DataError::ImageProc(e) => imageproc_code(e),
        DataError::Synthesis(_) => VALIDATION,
        e if e.is_validation() => VALIDATION,
        _ => INTERNAL,
    }
}

fn estimation_code(e: &EstimationError) -> u8 {
    match e {
        EstimationError::UnknownEstimator { .. } => USAGE,
        EstimationError::Io(e) => io_code(e),
        EstimationError::ImageProc(e) => imageproc_code(e),
        _ => VALIDATION,
    }
}

fn ballistic_code(e: &BallisticError) -> u8 {
    match e {
        BallisticError::InvalidGravity(_) | BallisticError::InvalidFrameRate(_) => USAGE,
        BallisticError::EmptyScene => VALIDATION,
        _ => NUMERIC,
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::new(data_code(&e), e.to_string())
    }
}

impl From<BallisticError> for CliError {
    fn from(e: BallisticError) -> Self {
        Self::new(ballistic_code(&e), e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Data(d) => data_code(d),
            PipelineError::Estimation { source, .. } => estimation_code(source),
            PipelineError::Heatmap { source, .. } => imageproc_code(source),
            PipelineError::Geometry { source, .. } => geometry_code(source),
            PipelineError::NoCandidates(_) => VALIDATION,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Data(d) => data_code(d),
            SessionError::Store(_) => INTERNAL,
        };
        Self::new(code, e.to_string())
    }
}
