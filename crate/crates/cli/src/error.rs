use std::process::ExitCode;

use mtsr::MtsrError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or missing inputs; nothing was computed.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] MtsrError),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for failures while running.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(MtsrError::Config(_) | MtsrError::Dimension(_) | MtsrError::Empty(_)) => 2,
            CliError::Run(_) => 1,
        }
    }
}
