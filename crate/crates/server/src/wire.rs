//! Request and response bodies of the HTTP API.

use fhirchain_core::contracts::DigitalIdentity;
use fhirchain_core::crypto::{EncryptionPublicKey, SignedReferencePointer, SigningPublicKey};
use fhirchain_core::fhir::{Integrity, ReferencePointer};
use fhirchain_core::{AuditEntry, Event};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub handle: String,
    pub encryption_public_key: String,
    pub signing_public_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub registered: bool,
    pub sequence: u64,
    pub identity: DigitalIdentity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeQuery {
    pub handle: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeResponse {
    pub handle: String,
    /// base64url, no padding.
    pub nonce: String,
    pub issued_at: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub handle: String,
    pub nonce: String,
    /// Signature over the login domain prefix followed by the nonce bytes.
    pub signature: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub session_token: String,
    pub identity: EncryptionPublicKey,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdentityQuery {
    pub handle: Option<String>,
    pub key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareShareRequest {
    pub recipient_handle: String,
    pub fhir_path: String,
    /// Configured endpoint name; the first endpoint when absent.
    pub endpoint: Option<String>,
    pub token_name: Option<String>,
    pub expires_at: Option<u64>,
}

/// Everything a client needs to build the access token locally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareShareResponse {
    pub pointer: ReferencePointer,
    pub recipient: DigitalIdentity,
    pub token_name: String,
    pub now: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ShareRequest {
    pub recipient_handle: String,
    pub token_name: Option<String>,
    /// Client-built access token (base64url of its canonical bytes).
    pub token: Option<String>,
    pub fhir_path: Option<String>,
    pub endpoint: Option<String>,
    pub expires_at: Option<u64>,
    /// Key-upload fallback: the server signs on the caller's behalf.
    pub signing_private_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShareResponse {
    pub token_name: String,
    pub sequence: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub recipient_handle: String,
    pub token_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceResponse {
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantSummary {
    pub token_name: String,
    pub counterparty: EncryptionPublicKey,
    pub counterparty_handle: Option<String>,
    pub authorized: bool,
    pub updated_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenQuery {
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenResponse {
    pub token_name: String,
    pub token: String,
    pub grantor: EncryptionPublicKey,
    pub grantor_handle: String,
    pub grantor_signing_key: SigningPublicKey,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ViewRequest {
    pub token_name: String,
    /// Client-side mode: the signed pointer recovered by decrypting locally.
    pub signed_pointer: Option<SignedReferencePointer>,
    /// Key-upload fallback: the server decrypts with this key.
    pub encryption_private_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewResponse {
    pub token_name: String,
    pub resource: Value,
    pub integrity: Integrity,
    pub sender_handle: Option<String>,
    pub sequence: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventsQuery {
    /// Exclusive cursor.
    pub since_sequence: Option<u64>,
    /// Long-poll: wait up to this long for a new event when none is pending.
    pub wait_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventsResponse {
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditQuery {
    pub contract: Option<String>,
    pub operation: Option<String>,
    /// Inclusive lower bound.
    pub since_sequence: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditResponse {
    pub entries: Vec<AuditEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotateKeyRequest {
    pub handle: String,
    pub encryption_public_key: String,
    pub signing_public_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotateKeyResponse {
    pub sequence: u64,
    pub identity: DigitalIdentity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub height: u64,
    pub transactions: usize,
    pub node_key: SigningPublicKey,
}
