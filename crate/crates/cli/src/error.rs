//! CLI error layer with the documented exit codes.

use qweak_core::Error as CoreError;

/// Exit codes: 0 success, 1 I/O or internal, 2 config error, 3 numerical
/// failure, 4 postselection impossible.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Config(String),
    Core(CoreError),
    /// An internal invariant check failed; the run completed but exits
    /// nonzero (the manifest carries the details).
    ChecksFailed(usize),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::ChecksFailed(n) => write!(f, "{n} internal check(s) failed"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::ChecksFailed(_) => 3,
            CliError::Core(e) => match e {
                CoreError::PostselectionImpossible { .. }
                | CoreError::NearOrthogonal { .. }
                | CoreError::NoPostselectionEvents { .. }
                | CoreError::NoPhotonFlux { .. } => 4,
                CoreError::SpaceMismatch { .. }
                | CoreError::InvalidSpace(_)
                | CoreError::InvalidOperator(_)
                | CoreError::InvalidState(_)
                | CoreError::InvalidEffect(_)
                | CoreError::SubsystemOutOfRange { .. }
                | CoreError::InvalidModel(_)
                | CoreError::InvalidInput(_)
                | CoreError::DimensionGuard { .. } => 2,
                CoreError::IntegrationFailure { .. }
                | CoreError::DegenerateSteadyState { .. }
                | CoreError::DtTooCoarse { .. }
                | CoreError::StepSizeError { .. }
                | CoreError::UnsupportedRegime(_)
                | CoreError::FitFailure { .. }
                | CoreError::Numerical(_) => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
