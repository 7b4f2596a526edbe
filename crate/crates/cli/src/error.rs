//! Error-to-exit-code mapping: 1 usage/config, 2 validation failure,
//! 3 runtime numeric or I/O error.

use qjump_core::ensemble::EnsembleError;
use qjump_core::jc::JcError;
use qjump_core::master::MasterError;
use qjump_core::pdp::PdpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<JcError> for CliError {
    fn from(e: JcError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<MasterError> for CliError {
    fn from(e: MasterError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<PdpError> for CliError {
    fn from(e: PdpError) -> Self {
        match e {
            // A negative rate in standard mode is a configuration problem:
            // the message tells the user to switch to the doubled scheme.
            PdpError::NegativeRate { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Pdp(inner) => inner.into(),
            EnsembleError::ZeroTrajectories
            | EnsembleError::ZeroChunk
            | EnsembleError::ModeMismatch { .. } => CliError::Usage(e.to_string()),
        }
    }
}
