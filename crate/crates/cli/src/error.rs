use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The input file is unreadable, malformed or unusable for the analysis.
    #[error("input error: {0}")]
    Input(String),

    /// Flags or configuration values are invalid.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Analysis(_) | CliError::Output { .. } => 1,
        }
    }
}

/// Sorts a library error into the exit-code classes above.
pub fn classify(err: knockmed::Error) -> CliError {
    use knockmed::Error as E;
    match err {
        E::InvalidQ(_) | E::InvalidConfig(_) | E::InvalidP { .. } | E::NonBinaryExposure => {
            CliError::Config(err.to_string())
        }
        E::NonFiniteInput
        | E::DegenerateColumn { .. }
        | E::SingularDesign(_)
        | E::InsufficientRows { .. }
        | E::InsufficientColumns { .. }
        | E::LengthMismatch { .. } => CliError::Input(err.to_string()),
        E::NotPositiveSemidefinite { .. }
        | E::CholeskyFailure { .. }
        | E::IndexOutOfRange { .. }
        | E::NonPositiveThreshold(_) => CliError::Analysis(err.to_string()),
    }
}
