use std::time::Duration;

use axum::extract::{FromRequest, FromRequestParts, Path, RawQuery, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fhirchain_core::canonical::{b64, sha256};
use fhirchain_core::contracts::{check_token_name, ContractError, DigitalIdentity, GrantRecord, IdentityQuery};
use fhirchain_core::crypto::{
    create_access_token, open_access_token, verify_signed_pointer, AccessToken, EncryptionPublicKey,
    EncryptionSecretKey, Signature, SigningPublicKey, SigningSecretKey, NONCE_LEN,
};
use fhirchain_core::fhir::ReferencePointer;
use fhirchain_core::ledger::ContractKind;
use fhirchain_core::AuditEntry;
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::app::AppState;
use crate::error::ApiError;
use crate::session::{Session, SessionError};
use crate::wire::*;

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";
pub const MAX_WAIT_MS: u64 = 30_000;

/// JSON body extractor whose rejections use the API error body.
pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|rej| ApiError::new(rej.status(), "BadRequest", rej.body_text()))
    }
}

pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|rej| ApiError::bad_request("BadRequest", rej.body_text()))
    }
}

/// An authenticated caller whose identity is still registered.
pub struct Authed(pub Session);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::unauthorized("MissingSession", SessionError::Missing.to_string()))?;
        let session = app.inner.sessions.get(token.trim(), app.now()).map_err(|e| match e {
            SessionError::Expired => ApiError::unauthorized("ExpiredSession", e.to_string()),
            _ => ApiError::unauthorized("InvalidSession", e.to_string()),
        })?;
        if !app.node().state().registry.is_registered(&session.identity) {
            return Err(ApiError::unauthorized("InvalidSession", "identity no longer registered"));
        }
        Ok(Authed(session))
    }
}

/// Caller presented the node's admin token.
pub struct Admin;

impl FromRequestParts<AppState> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &AppState) -> Result<Self, ApiError> {
        let presented = parts
            .headers
            .get(ADMIN_TOKEN_HEADER)
            .ok_or_else(|| ApiError::unauthorized("MissingAdminToken", "admin token required"))?;
        let expected = app.admin_token().as_bytes();
        let given = presented.as_bytes();
        let equal = given.len() == expected.len()
            && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0;
        if !equal {
            return Err(ApiError::forbidden("BadAdminToken", "admin token rejected"));
        }
        Ok(Admin)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/register", post(register))
        .route("/challenge", get(challenge))
        .route("/login", post(login))
        .route("/identity", get(identity))
        .route("/share/prepare", post(prepare_share))
        .route("/share", post(share))
        .route("/revoke", post(revoke))
        .route("/my-shares", get(my_shares))
        .route("/shared-with-me", get(shared_with_me))
        .route("/token", get(token))
        .route("/view", post(view))
        .route("/events", get(events))
        .route("/audit", get(audit))
        .route("/admin/audit", get(admin_audit))
        .route("/admin/rotate-key", post(admin_rotate_key))
        .route("/fhir/{endpoint}/{*path}", get(fhir_read))
        .fallback(|| async { ApiError::not_found("NotFound", "no such route") })
        .with_state(state)
}

fn parse_encryption_key(s: &str) -> Result<EncryptionPublicKey, ApiError> {
    EncryptionPublicKey::parse(s).map_err(|e| ApiError::bad_request("MalformedKey", e.to_string()))
}

fn parse_signing_key(s: &str) -> Result<SigningPublicKey, ApiError> {
    SigningPublicKey::parse(s).map_err(|e| ApiError::bad_request("MalformedKey", e.to_string()))
}

fn unknown_recipient() -> ApiError {
    ApiError::not_found("UnknownRecipient", "recipient handle is not registered")
}

fn key_upload_disabled() -> ApiError {
    ApiError::forbidden("KeyUploadDisabled", "this node does not accept private keys in requests")
}

/// `<resource type in lower case>-<first 8 hex digits of the pointer digest>`.
pub fn default_token_name(rp: &ReferencePointer) -> String {
    let resource_type = rp.path.split(['/', '?']).next().unwrap_or("resource");
    let digest = sha256(&rp.canonical_bytes()).to_hex();
    format!("{}-{}", resource_type.to_ascii_lowercase(), &digest[..8])
}

async fn health(State(app): State<AppState>) -> Json<HealthResponse> {
    let node = app.node();
    Json(HealthResponse {
        status: "ok".into(),
        height: node.ledger().tip().height,
        transactions: node.ledger().transaction_count(),
        node_key: node.node_public_key(),
    })
}

async fn register(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<RegisterRequest>,
) -> Result<Json<RegisterResponse>, ApiError> {
    let enc = parse_encryption_key(&req.encryption_public_key)?;
    let sig = parse_signing_key(&req.signing_public_key)?;
    let mut node = app.node();
    let result = node.register(&req.handle, enc, sig);
    app.notify(&node);
    let committed = result?;
    tracing::info!(handle = %req.handle, sequence = committed.sequence, "registered");
    Ok(Json(RegisterResponse {
        registered: true,
        sequence: committed.sequence,
        identity: committed.value,
    }))
}

fn lookup_handle(app: &AppState, handle: &str) -> Result<DigitalIdentity, ApiError> {
    app.node()
        .state()
        .registry
        .by_handle(handle)
        .cloned()
        .ok_or_else(|| ApiError::not_found("UnknownHandle", format!("{handle} is not registered")))
}

async fn challenge(
    State(app): State<AppState>,
    ApiQuery(q): ApiQuery<ChallengeQuery>,
) -> Result<Json<ChallengeResponse>, ApiError> {
    lookup_handle(&app, &q.handle)?;
    let c = app.inner.challenges.issue(app.now())?;
    Ok(Json(ChallengeResponse {
        handle: q.handle,
        nonce: b64::encode(&c.nonce),
        issued_at: c.issued_at,
        expires_at: c.expires_at(),
    }))
}

async fn login(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<LoginRequest>,
) -> Result<Json<LoginResponse>, ApiError> {
    let identity = lookup_handle(&app, &req.handle)?;
    let nonce: [u8; NONCE_LEN] =
        b64::decode_array(&req.nonce).ok_or_else(|| ApiError::bad_request("BadRequest", "malformed nonce"))?;
    let signature =
        Signature::parse(&req.signature).ok_or_else(|| ApiError::unauthorized("BadSignature", "malformed signature"))?;
    let now = app.now();
    let challenge = app
        .inner
        .challenges
        .lookup(&nonce)
        .ok_or_else(|| ApiError::unauthorized("ExpiredChallenge", "unknown or already used challenge"))?;
    if challenge.is_expired(now) {
        // Verification pops the stale nonce.
        app.inner
            .challenges
            .verify_challenge_response(&challenge, &signature, &identity.signing_public_key, now);
        return Err(ApiError::unauthorized("ExpiredChallenge", "challenge expired"));
    }
    if !app
        .inner
        .challenges
        .verify_challenge_response(&challenge, &signature, &identity.signing_public_key, now)
    {
        return Err(ApiError::unauthorized(
            "BadSignature",
            "signature does not verify under the registered signing key",
        ));
    }
    let session = app
        .inner
        .sessions
        .issue(identity.encryption_public_key, &identity.directory_handle, now)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(LoginResponse {
        session_token: session.session_token,
        identity: session.identity,
        expires_at: session.expires_at,
    }))
}

async fn identity(
    State(app): State<AppState>,
    ApiQuery(q): ApiQuery<crate::wire::IdentityQuery>,
) -> Result<Json<DigitalIdentity>, ApiError> {
    let key = q.key.as_deref().map(parse_encryption_key).transpose()?;
    let node = app.node();
    let query = match (&q.handle, &key) {
        (Some(h), _) => IdentityQuery::Handle(h),
        (None, Some(k)) => IdentityQuery::Key(k),
        (None, None) => return Err(ApiError::bad_request("BadRequest", "handle or key required")),
    };
    Ok(Json(node.state().registry_lookup(query)?.clone()))
}

/// Validates the path, resolves the recipient, then fetches and hashes.
async fn build_pointer(
    app: &AppState,
    me: &Session,
    recipient_handle: &str,
    fhir_path: &str,
    endpoint: Option<&str>,
    expires_at: Option<u64>,
) -> Result<(DigitalIdentity, ReferencePointer), ApiError> {
    app.inner
        .connector
        .validator()
        .validate(fhir_path)
        .map_err(|e| ApiError::bad_request("InvalidPath", e.to_string()))?;
    let recipient = app
        .node()
        .state()
        .registry
        .by_handle(recipient_handle)
        .cloned()
        .ok_or_else(unknown_recipient)?;
    let endpoint = app
        .endpoint(endpoint)
        .ok_or_else(|| ApiError::not_found("UnknownEndpoint", "no such FHIR endpoint configured"))?;
    let rp = app
        .inner
        .connector
        .make_reference_pointer(&endpoint.base_url, fhir_path, expires_at, me.identity, app.now())
        .await?;
    Ok((recipient, rp))
}

fn choose_token_name(requested: Option<String>, rp: &ReferencePointer) -> Result<String, ApiError> {
    let name = requested.unwrap_or_else(|| default_token_name(rp));
    check_token_name(&name)?;
    Ok(name)
}

async fn prepare_share(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiJson(req): ApiJson<PrepareShareRequest>,
) -> Result<Json<PrepareShareResponse>, ApiError> {
    let (recipient, pointer) = build_pointer(
        &app,
        &me,
        &req.recipient_handle,
        &req.fhir_path,
        req.endpoint.as_deref(),
        req.expires_at,
    )
    .await?;
    let token_name = choose_token_name(req.token_name, &pointer)?;
    Ok(Json(PrepareShareResponse {
        pointer,
        recipient,
        token_name,
        now: app.now(),
    }))
}

async fn share(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiJson(req): ApiJson<ShareRequest>,
) -> Result<Json<ShareResponse>, ApiError> {
    let (recipient, token_name, token) = if let Some(encoded) = &req.token {
        let bytes = b64::decode(encoded).ok_or_else(|| ApiError::bad_request("MalformedToken", "token is not base64url"))?;
        let token =
            AccessToken::from_bytes(&bytes).map_err(|e| ApiError::bad_request("MalformedToken", e.to_string()))?;
        let recipient = app
            .node()
            .state()
            .registry
            .by_handle(&req.recipient_handle)
            .cloned()
            .ok_or_else(unknown_recipient)?;
        let name = req.token_name.clone().unwrap_or_else(|| token.header.token_name.clone());
        (recipient, name, bytes)
    } else if let Some(sk) = &req.signing_private_key {
        if !app.inner.allow_key_upload {
            return Err(key_upload_disabled());
        }
        let sk = SigningSecretKey::parse(sk).map_err(|e| ApiError::bad_request("MalformedKey", e.to_string()))?;
        let registered = app
            .node()
            .state()
            .registry
            .by_key(&me.identity)
            .map(|id| id.signing_public_key);
        if registered != Some(sk.public_key()) {
            return Err(ApiError::forbidden("KeyMismatch", "signing key is not the one registered for this session"));
        }
        let path = req
            .fhir_path
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("BadRequest", "fhir_path required"))?;
        let (recipient, rp) = build_pointer(
            &app,
            &me,
            &req.recipient_handle,
            path,
            req.endpoint.as_deref(),
            req.expires_at,
        )
        .await?;
        let name = choose_token_name(req.token_name.clone(), &rp)?;
        let token = create_access_token(&rp, &name, &sk, &recipient.encryption_public_key, app.now())?;
        (recipient, name, token.to_bytes())
    } else {
        return Err(ApiError::bad_request(
            "BadRequest",
            "either token or signing_private_key is required",
        ));
    };

    let mut node = app.node();
    let result = node.grant(me.identity, recipient.encryption_public_key, &token_name, token);
    app.notify(&node);
    let committed = result?;
    tracing::info!(sequence = committed.sequence, token_name = %token_name, "granted");
    Ok(Json(ShareResponse {
        token_name,
        sequence: committed.sequence,
    }))
}

async fn revoke(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiJson(req): ApiJson<RevokeRequest>,
) -> Result<Json<SequenceResponse>, ApiError> {
    let mut node = app.node();
    let recipient = node
        .state()
        .registry
        .by_handle(&req.recipient_handle)
        .map(|id| id.encryption_public_key)
        .ok_or_else(unknown_recipient)?;
    let result = node.revoke(me.identity, recipient, &req.token_name);
    app.notify(&node);
    Ok(Json(SequenceResponse { sequence: result? }))
}

fn summaries(app: &AppState, records: Vec<GrantRecord>, counterparty: fn(&GrantRecord) -> EncryptionPublicKey) -> Vec<GrantSummary> {
    let node = app.node();
    records
        .iter()
        .map(|r| {
            let key = counterparty(r);
            GrantSummary {
                token_name: r.token_name.clone(),
                counterparty: key,
                counterparty_handle: node.state().registry.by_key(&key).map(|i| i.directory_handle.clone()),
                authorized: r.authorized,
                updated_at: r.updated_at,
            }
        })
        .collect()
}

async fn my_shares(State(app): State<AppState>, Authed(me): Authed) -> Result<Json<Vec<GrantSummary>>, ApiError> {
    let lists = app.node().state().access_list_for(&me.identity)?;
    Ok(Json(summaries(&app, lists.granted_by_me, |r| r.grantee)))
}

async fn shared_with_me(State(app): State<AppState>, Authed(me): Authed) -> Result<Json<Vec<GrantSummary>>, ApiError> {
    let lists = app.node().state().access_list_for(&me.identity)?;
    Ok(Json(summaries(&app, lists.granted_to_me, |r| r.grantor)))
}

fn grantor_of(app: &AppState, record: &GrantRecord) -> Result<DigitalIdentity, ApiError> {
    app.node()
        .state()
        .registry
        .by_key(&record.grantor)
        .cloned()
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::CONFLICT,
                "SignatureInvalid",
                "grantor's key is no longer registered; the token cannot be verified",
            )
        })
}

async fn token(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiQuery(q): ApiQuery<TokenQuery>,
) -> Result<Json<TokenResponse>, ApiError> {
    let record = app.node().state().access_get_token(&me.identity, &q.name)?.clone();
    if !record.authorized {
        return Err(ContractError::RevokedAccess.into());
    }
    let grantor = grantor_of(&app, &record)?;
    Ok(Json(TokenResponse {
        token_name: record.token_name,
        token: b64::encode(&record.token),
        grantor: record.grantor,
        grantor_handle: grantor.directory_handle,
        grantor_signing_key: grantor.signing_public_key,
    }))
}

/// The data-access path. Authorization is re-checked on every call and each
/// successful read is logged as one consumption transaction.
async fn view(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiJson(req): ApiJson<ViewRequest>,
) -> Result<Json<ViewResponse>, ApiError> {
    let record = {
        let mut node = app.node();
        let record = node.state().access_get_token(&me.identity, &req.token_name)?.clone();
        if !record.authorized {
            // Logged as a failed consumption.
            let result = node.consume(me.identity, &req.token_name);
            app.notify(&node);
            return Err(match result {
                Err(e) => e.into(),
                Ok(_) => ApiError::internal("revoked grant was consumed"),
            });
        }
        record
    };
    let grantor = grantor_of(&app, &record)?;
    let token = AccessToken::from_bytes(&record.token)?;
    let now = app.now();
    let pointer = match (&req.encryption_private_key, &req.signed_pointer) {
        (Some(sk), _) => {
            if !app.inner.allow_key_upload {
                return Err(key_upload_disabled());
            }
            let sk = EncryptionSecretKey::parse(sk).map_err(|e| ApiError::bad_request("MalformedKey", e.to_string()))?;
            open_access_token(&token, &sk, &grantor.signing_public_key, now)?.pointer
        }
        (None, Some(signed)) => verify_signed_pointer(&token.header, signed, &grantor.signing_public_key)?,
        (None, None) => {
            return Err(ApiError::bad_request(
                "BadRequest",
                "either signed_pointer or encryption_private_key is required",
            ))
        }
    };
    let fetched = app.inner.connector.fetch_resource(&pointer, now).await?;

    let sequence = {
        let mut node = app.node();
        let result = node.consume(me.identity, &req.token_name);
        app.notify(&node);
        result?
    };
    tracing::info!(sequence, token_name = %req.token_name, "token consumed");
    Ok(Json(ViewResponse {
        token_name: req.token_name,
        resource: fetched.resource.body,
        integrity: fetched.integrity,
        sender_handle: Some(grantor.directory_handle),
        sequence,
    }))
}

async fn events(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiQuery(q): ApiQuery<EventsQuery>,
) -> Json<EventsResponse> {
    let wait = Duration::from_millis(q.wait_ms.unwrap_or(0).min(MAX_WAIT_MS));
    let deadline = tokio::time::Instant::now() + wait;
    let mut rx = app.inner.tx_count.subscribe();
    loop {
        rx.borrow_and_update();
        let events: Vec<_> = app
            .node()
            .events_since(q.since_sequence)
            .filter(|e| e.involves(&me.identity))
            .cloned()
            .collect();
        if !events.is_empty() {
            return Json(EventsResponse { events });
        }
        match tokio::time::timeout_at(deadline, rx.changed()).await {
            Ok(Ok(())) => continue,
            _ => return Json(EventsResponse { events }),
        }
    }
}

fn filter_audit(entries: Vec<AuditEntry>, q: &AuditQuery) -> Result<Vec<AuditEntry>, ApiError> {
    let contract = match q.contract.as_deref() {
        None => None,
        Some("registry") => Some(ContractKind::Registry),
        Some("access") => Some(ContractKind::Access),
        Some(other) => return Err(ApiError::bad_request("BadRequest", format!("unknown contract {other}"))),
    };
    Ok(entries
        .into_iter()
        .filter(|e| contract.is_none_or(|c| e.contract == c))
        .filter(|e| q.operation.as_deref().is_none_or(|op| e.operation == op))
        .filter(|e| q.since_sequence.is_none_or(|s| e.sequence >= s))
        .collect())
}

async fn audit(
    State(app): State<AppState>,
    Authed(me): Authed,
    ApiQuery(q): ApiQuery<AuditQuery>,
) -> Result<Json<AuditResponse>, ApiError> {
    let entries = app.node().audit_for(&me.identity);
    Ok(Json(AuditResponse {
        entries: filter_audit(entries, &q)?,
    }))
}

async fn admin_audit(
    State(app): State<AppState>,
    _admin: Admin,
    ApiQuery(q): ApiQuery<AuditQuery>,
) -> Result<Json<AuditResponse>, ApiError> {
    let entries = app.node().audit_log().to_vec();
    Ok(Json(AuditResponse {
        entries: filter_audit(entries, &q)?,
    }))
}

async fn admin_rotate_key(
    State(app): State<AppState>,
    _admin: Admin,
    ApiJson(req): ApiJson<RotateKeyRequest>,
) -> Result<Json<RotateKeyResponse>, ApiError> {
    let enc = parse_encryption_key(&req.encryption_public_key)?;
    let sig = parse_signing_key(&req.signing_public_key)?;
    let previous = lookup_handle(&app, &req.handle)?;
    let mut node = app.node();
    let result = node.rotate_key(&req.handle, enc, sig);
    app.notify(&node);
    let committed = result?;
    drop(node);
    let ended = app.inner.sessions.revoke_identity(&previous.encryption_public_key);
    tracing::info!(handle = %req.handle, sessions_ended = ended, "key rotated");
    Ok(Json(RotateKeyResponse {
        sequence: committed.sequence,
        identity: committed.value,
    }))
}

fn operation_outcome(status: StatusCode, code: &str, text: &str) -> Response {
    let body = json!({
        "resourceType": "OperationOutcome",
        "issue": [{"severity": "error", "code": code, "diagnostics": text}]
    });
    (status, [(CONTENT_TYPE, "application/fhir+json")], body.to_string()).into_response()
}

/// Read and search over an embedded fixture store.
async fn fhir_read(
    State(app): State<AppState>,
    Path((endpoint, path)): Path<(String, String)>,
    RawQuery(query): RawQuery,
) -> Response {
    let Some(store) = app.fhir_store(&endpoint) else {
        return operation_outcome(StatusCode::NOT_FOUND, "not-found", "no such FHIR endpoint");
    };
    let full = match query {
        Some(q) => format!("{path}?{q}"),
        None => path,
    };
    let parsed = match app.inner.connector.validator().validate(&full) {
        Ok(p) => p,
        Err(e) => return operation_outcome(StatusCode::BAD_REQUEST, "invalid", &e.to_string()),
    };
    match store.get(&parsed) {
        Some(resource) => (
            StatusCode::OK,
            [(CONTENT_TYPE, "application/fhir+json")],
            resource.body.to_string(),
        )
            .into_response(),
        None => operation_outcome(StatusCode::NOT_FOUND, "not-found", "resource not found"),
    }
}
