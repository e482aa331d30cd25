use std::path::PathBuf;

use reqwest::StatusCode;

pub const EXIT_USER: i32 = 1;
pub const EXIT_SYSTEM: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("wrong passphrase or corrupted key file")]
    BadPassphrase,
    #[error("{} already exists", .0.display())]
    ExistsAlready(PathBuf),
    #[error("no key file for {handle} at {}", path.display())]
    NoKeyFile { handle: String, path: PathBuf },
    #[error("server answered {status}: {code}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },
    #[error("crypto: {0}")]
    Crypto(#[from] fhirchain_core::crypto::CryptoError),
    #[error("config: {0}")]
    Config(String),
    #[error("ledger: {0}")]
    Ledger(String),
    #[error("network: {0}")]
    Network(#[from] reqwest::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    System(String),
}

impl CliError {
    /// Short machine-readable code for the error line.
    pub fn code(&self) -> &str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::BadPassphrase => "BadPassphrase",
            CliError::ExistsAlready(_) => "ExistsAlready",
            CliError::NoKeyFile { .. } => "NoKeyFile",
            CliError::Api { code, .. } => code,
            CliError::Crypto(_) => "Crypto",
            CliError::Config(_) => "Config",
            CliError::Ledger(_) => "Ledger",
            CliError::Network(_) => "Network",
            CliError::Io(_) => "Io",
            CliError::System(_) => "System",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Api { status, .. } if status.is_server_error() => EXIT_SYSTEM,
            CliError::Usage(_)
            | CliError::BadPassphrase
            | CliError::ExistsAlready(_)
            | CliError::NoKeyFile { .. }
            | CliError::Api { .. }
            | CliError::Crypto(_)
            | CliError::Config(_) => EXIT_USER,
            CliError::Ledger(_) | CliError::Network(_) | CliError::Io(_) | CliError::System(_) => EXIT_SYSTEM,
        }
    }
}
