use std::fmt;
use std::process::ExitCode;

use thiserror::Error;

/// A problem tied to one config field, e.g. `experiment.source.probs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Schema(Vec<Diagnostic>),
    #[error(transparent)]
    Core(#[from] distcomm_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    /// 0 ok, 1 internal, 2 schema, 3 infeasible, 4 resource.
    pub fn exit_code(&self) -> u8 {
        use distcomm_core::Error as E;
        match self {
            Self::Schema(_) | Self::Core(E::InvalidArgument(_)) => 2,
            Self::Core(E::Infeasible(_) | E::Precondition(_) | E::Certification(_)) => 3,
            Self::Core(E::Resource(_)) => 4,
            Self::Io(_) | Self::Csv(_) | Self::Plot(_) => 1,
        }
    }
}

impl From<&CliError> for ExitCode {
    fn from(e: &CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
