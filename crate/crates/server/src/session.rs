use std::collections::HashMap;

use fhirchain_core::canonical::b64;
use fhirchain_core::crypto::EncryptionPublicKey;
use parking_lot::Mutex;
use rand_core::{OsRng, RngCore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_token: String,
    pub identity: EncryptionPublicKey,
    pub handle: String,
    pub issued_at: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("no session token supplied")]
    Missing,
    #[error("unknown session token")]
    Unknown,
    #[error("session expired")]
    Expired,
    #[error("secure randomness source unavailable")]
    Entropy,
}

/// Bearer sessions issued after a successful challenge-response login.
pub struct SessionStore {
    ttl_secs: u64,
    sessions: Mutex<HashMap<String, Session>>,
}

impl SessionStore {
    pub fn new(ttl_secs: u64) -> Self {
        SessionStore {
            ttl_secs,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn issue(&self, identity: EncryptionPublicKey, handle: &str, now: u64) -> Result<Session, SessionError> {
        let mut raw = [0u8; 32];
        OsRng.try_fill_bytes(&mut raw).map_err(|_| SessionError::Entropy)?;
        let session = Session {
            session_token: b64::encode(&raw),
            identity,
            handle: handle.to_string(),
            issued_at: now,
            expires_at: now.saturating_add(self.ttl_secs),
        };
        let mut sessions = self.sessions.lock();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.session_token.clone(), session.clone());
        Ok(session)
    }

    pub fn get(&self, token: &str, now: u64) -> Result<Session, SessionError> {
        let mut sessions = self.sessions.lock();
        let session = sessions.get(token).ok_or(SessionError::Unknown)?;
        if now >= session.expires_at {
            sessions.remove(token);
            return Err(SessionError::Expired);
        }
        Ok(session.clone())
    }

    /// Ends every session bound to `identity`.
    pub fn revoke_identity(&self, identity: &EncryptionPublicKey) -> usize {
        let mut sessions = self.sessions.lock();
        let before = sessions.len();
        sessions.retain(|_, s| &s.identity != identity);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
