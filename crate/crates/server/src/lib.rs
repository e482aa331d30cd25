//! HTTP/JSON API of a ledger node: registration and challenge-response
//! login, sharing and revocation of FHIR reference pointers, the data-access
//! path, event feed, audit views and an embedded mock FHIR endpoint.

mod app;
pub mod config;
pub mod error;
mod routes;
pub mod session;
pub mod wire;

pub use app::{AppState, Endpoint, Server};
pub use config::{Config, EndpointConfig, CONFIG_ENV};
pub use error::{ApiError, ErrorBody};
pub use routes::{default_token_name, ADMIN_TOKEN_HEADER, MAX_WAIT_MS};

/// Admin token file inside the data directory.
pub const ADMIN_TOKEN_FILE: &str = "admin.token";

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("config: {0}")]
    Config(String),
    #[error("startup: {0}")]
    Startup(String),
    #[error(transparent)]
    Node(#[from] fhirchain_core::NodeError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}
