use std::fmt;

use iaxrsw_core::relay::RelayError;
use iaxrsw_core::sim::SimError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Acceptance check failed, or a datagram did not decode.
    pub const NEGATIVE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const INTERNAL: i32 = 4;
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Decode(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::Decode(_) => exit::NEGATIVE,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Decode(m) => write!(f, "decode error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownCodec(_) | SimError::InvalidConfig(_) | SimError::Framing(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<RelayError> for CliError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::InvalidConfig(_) => CliError::Config(e.to_string()),
            RelayError::BindFailure { .. } | RelayError::Io(_) => CliError::Io(e.to_string()),
            RelayError::NotRunning => CliError::Internal(e.to_string()),
        }
    }
}

impl From<iaxrsw_core::metrics::MetricsError> for CliError {
    fn from(e: iaxrsw_core::metrics::MetricsError) -> Self {
        match e {
            iaxrsw_core::metrics::MetricsError::IoFailure(io) => CliError::Io(io.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}
