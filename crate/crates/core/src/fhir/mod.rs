//! FHIR reference pointers: path grammar, integrity hashing, and the
//! connector that fetches off-chain resources.

mod connector;
mod path;
mod pointer;
mod store;

pub use connector::{FetchedResource, FhirConnector, DEFAULT_FHIR_TIMEOUT_MS};
pub use path::{
    r4_resource_types, validate_reference_path, Interaction, InvalidPath, ParsedPath, PathValidator,
    SearchParam,
};
pub use pointer::{check_base_url, make_reference_pointer, FhirResource, Integrity, ReferencePointer};
pub use store::MockStore;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchCause {
    #[error("resource not found")]
    NotFound,
    #[error("endpoint answered HTTP {0}")]
    Status(u16),
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("unusable response body: {0}")]
    BadBody(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FhirError {
    #[error(transparent)]
    InvalidPath(#[from] InvalidPath),
    #[error("fetch failed: {0}")]
    FetchFailed(FetchCause),
    #[error("reference pointer expired at {expires_at}")]
    Expired { expires_at: u64 },
    #[error("bad fixture: {0}")]
    BadFixture(String),
    #[error("malformed resource: {0}")]
    MalformedResource(String),
    #[error("invalid base URL: {0}")]
    InvalidBaseUrl(String),
    #[error("expiry must be later than creation time")]
    InvalidExpiry,
}
