//! Blocking HTTP client for the node API with on-disk sessions.

use std::path::{Path, PathBuf};
use std::time::Duration;

use fhirchain_core::canonical::b64;
use fhirchain_core::crypto::{sign_challenge, KeyMaterial};
use fhirchain_core::node::write_private;
use fhirchain_server::wire::{ChallengeResponse, LoginRequest, LoginResponse};
use fhirchain_server::{ErrorBody, ADMIN_TOKEN_HEADER};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::keyfile::file_stem;

/// Long-polls can hold a request open for up to 30 s.
const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedSession {
    pub server: String,
    pub handle: String,
    pub session_token: String,
    pub expires_at: u64,
}

pub struct Api {
    base: String,
    http: Client,
}

impl Api {
    pub fn new(base: &str) -> Result<Api, CliError> {
        let http = Client::builder().timeout(REQUEST_TIMEOUT).build()?;
        Ok(Api {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, CliError> {
        let resp = req.send()?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let text = resp.text().unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => (body.code, body.message),
            Err(_) => (status.as_str().to_string(), text),
        };
        Err(CliError::Api { status, code, message })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)], bearer: Option<&str>) -> Result<T, CliError> {
        let mut req = self.http.get(self.url(path)).query(query);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        self.send(req)
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B, bearer: Option<&str>) -> Result<T, CliError> {
        let mut req = self.http.post(self.url(path)).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        self.send(req)
    }

    pub fn admin_get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)], admin_token: &str) -> Result<T, CliError> {
        self.send(self.http.get(self.url(path)).query(query).header(ADMIN_TOKEN_HEADER, admin_token))
    }

    pub fn admin_post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B, admin_token: &str) -> Result<T, CliError> {
        self.send(self.http.post(self.url(path)).json(body).header(ADMIN_TOKEN_HEADER, admin_token))
    }

    /// Challenge-response login. Only the signature leaves this process.
    pub fn login(&self, handle: &str, keys: &KeyMaterial) -> Result<LoginResponse, CliError> {
        let challenge: ChallengeResponse = self.get("/challenge", &[("handle", handle.to_string())], None)?;
        let nonce = b64::decode_array(&challenge.nonce)
            .ok_or_else(|| CliError::System("server sent a malformed nonce".into()))?;
        let signature = sign_challenge(&nonce, &keys.signing);
        self.post(
            "/login",
            &LoginRequest {
                handle: handle.to_string(),
                nonce: challenge.nonce,
                signature: signature.to_b64(),
            },
            None,
        )
    }
}

pub fn session_path(home: &Path, handle: &str) -> PathBuf {
    home.join("sessions").join(format!("{}.json", file_stem(handle)))
}

pub fn load_session(home: &Path, handle: &str, server: &str) -> Option<SavedSession> {
    let bytes = std::fs::read(session_path(home, handle)).ok()?;
    let saved: SavedSession = serde_json::from_slice(&bytes).ok()?;
    (saved.server == server && saved.handle == handle).then_some(saved)
}

pub fn save_session(home: &Path, session: &SavedSession) -> Result<(), CliError> {
    let path = session_path(home, &session.handle);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    forget_session(home, &session.handle);
    write_private(&path, &serde_json::to_vec(session).expect("session serializes"))?;
    Ok(())
}

pub fn forget_session(home: &Path, handle: &str) {
    let _ = std::fs::remove_file(session_path(home, handle));
}

pub fn is_unauthorized(e: &CliError) -> bool {
    matches!(e, CliError::Api { status, .. } if *status == StatusCode::UNAUTHORIZED)
}
