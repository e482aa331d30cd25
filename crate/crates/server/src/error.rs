use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fhirchain_core::contracts::ContractError;
use fhirchain_core::crypto::CryptoError;
use fhirchain_core::fhir::FhirError;
use fhirchain_core::NodeError;
use serde::{Deserialize, Serialize};

/// Every non-2xx response carries this body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unauthorized(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, code, message)
    }

    pub fn forbidden(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, message = %self.message, "request failed");
        }
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<ContractError> for ApiError {
    fn from(e: ContractError) -> Self {
        use ContractError::*;
        let message = e.to_string();
        let (status, code) = match e {
            DuplicateHandle => (StatusCode::CONFLICT, "DuplicateHandle"),
            DuplicateKey => (StatusCode::CONFLICT, "DuplicateKey"),
            NotCertified => (StatusCode::FORBIDDEN, "NotCertified"),
            MalformedKey(_) => (StatusCode::BAD_REQUEST, "MalformedKey"),
            InvalidHandle => (StatusCode::BAD_REQUEST, "InvalidHandle"),
            NotFound => (StatusCode::NOT_FOUND, "UnknownHandle"),
            UnknownGrantor => (StatusCode::NOT_FOUND, "UnknownGrantor"),
            UnknownGrantee => (StatusCode::NOT_FOUND, "UnknownRecipient"),
            UnknownIdentity => (StatusCode::NOT_FOUND, "UnknownIdentity"),
            EmptyToken => (StatusCode::BAD_REQUEST, "EmptyToken"),
            InvalidTokenName => (StatusCode::BAD_REQUEST, "InvalidTokenName"),
            MismatchedToken(_) => (StatusCode::BAD_REQUEST, "MismatchedToken"),
            TokenNameTaken => (StatusCode::CONFLICT, "TokenNameTaken"),
            NoSuchGrant => (StatusCode::NOT_FOUND, "NoSuchGrant"),
            NotGrantor => (StatusCode::FORBIDDEN, "NotGrantor"),
            RevokedAccess => (StatusCode::FORBIDDEN, "RevokedAccess"),
            UnknownOperation(_) => (StatusCode::BAD_REQUEST, "UnknownOperation"),
            MalformedPayload(_) => (StatusCode::BAD_REQUEST, "MalformedPayload"),
        };
        ApiError::new(status, code, message)
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::Rejected { error, .. } => error.into(),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<CryptoError> for ApiError {
    fn from(e: CryptoError) -> Self {
        let message = e.to_string();
        match e {
            CryptoError::DecryptionFailed => ApiError::unauthorized("DecryptionFailed", message),
            CryptoError::SignatureInvalid => ApiError::new(StatusCode::CONFLICT, "SignatureInvalid", message),
            CryptoError::MalformedKey(_) => ApiError::bad_request("MalformedKey", message),
            CryptoError::MalformedToken(_) | CryptoError::UnsupportedScheme(_) => {
                ApiError::new(StatusCode::CONFLICT, "MalformedToken", message)
            }
            CryptoError::MalformedPointer(_) => ApiError::bad_request("InvalidPath", message),
            CryptoError::EntropyUnavailable => ApiError::internal(message),
        }
    }
}

impl From<FhirError> for ApiError {
    fn from(e: FhirError) -> Self {
        let message = e.to_string();
        match e {
            FhirError::InvalidPath(_) => ApiError::bad_request("InvalidPath", message),
            FhirError::FetchFailed(_) | FhirError::MalformedResource(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "FetchFailed", message)
            }
            FhirError::Expired { .. } => ApiError::new(StatusCode::GONE, "Expired", message),
            FhirError::InvalidExpiry => ApiError::bad_request("InvalidExpiry", message),
            FhirError::InvalidBaseUrl(_) | FhirError::BadFixture(_) => ApiError::internal(message),
        }
    }
}
