use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use facefatigue::cohort::CohortError;
use facefatigue::fatigue_model::FatigueError;
use facefatigue::landmark_io::LandmarkError;

/// A failed command with its process exit status.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input or configuration.
    Input,
    /// The external face service failed.
    Service,
    /// Too few faces, or a model or calibration that cannot be used.
    Degenerate,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Input => 2,
            Kind::Service => 3,
            Kind::Degenerate => 4,
        })
    }
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Input,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::input(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FatigueError> for CliError {
    fn from(e: FatigueError) -> Self {
        let kind = match e {
            FatigueError::TooFewFaces { .. } | FatigueError::Version { .. } => Kind::Degenerate,
            _ => Kind::Input,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<LandmarkError> for CliError {
    fn from(e: LandmarkError) -> Self {
        let kind = if e.is_service_failure() {
            Kind::Service
        } else {
            Kind::Input
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        let kind = match e {
            CohortError::Degenerate(_) => Kind::Degenerate,
            _ => Kind::Input,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
