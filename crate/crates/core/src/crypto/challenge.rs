//! Challenge-response login: the server issues a nonce, the client signs it
//! with the signing key registered for their handle.

use std::num::NonZeroUsize;

use lru::LruCache;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::keys::{fill_random, Signature, SigningPublicKey, SigningSecretKey};
use super::CryptoError;
use crate::canonical::b64;

pub const DEFAULT_CHALLENGE_TTL_SECS: u64 = 120;
pub const DEFAULT_NONCE_CAPACITY: usize = 4096;
pub const NONCE_LEN: usize = 32;

const LOGIN_DOMAIN: &[u8] = b"fhirchain/login/v1\0";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    #[serde(with = "b64::array")]
    pub nonce: [u8; NONCE_LEN],
    pub issued_at: u64,
    pub ttl_secs: u64,
}

impl Challenge {
    /// Bytes the client signs.
    pub fn message(&self) -> Vec<u8> {
        challenge_message(&self.nonce)
    }

    pub fn expires_at(&self) -> u64 {
        self.issued_at.saturating_add(self.ttl_secs)
    }

    pub fn is_expired(&self, now: u64) -> bool {
        now >= self.expires_at()
    }
}

pub fn challenge_message(nonce: &[u8; NONCE_LEN]) -> Vec<u8> {
    let mut msg = LOGIN_DOMAIN.to_vec();
    msg.extend_from_slice(nonce);
    msg
}

pub fn make_challenge(now: u64, ttl_secs: u64) -> Result<Challenge, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    fill_random(&mut nonce)?;
    Ok(Challenge {
        nonce,
        issued_at: now,
        ttl_secs,
    })
}

pub fn sign_challenge(nonce: &[u8; NONCE_LEN], key: &SigningSecretKey) -> Signature {
    key.sign(&challenge_message(nonce))
}

/// Outstanding challenges, bounded LRU. A nonce leaves the book when it is
/// answered correctly or found expired, so it can never be answered twice.
pub struct ChallengeBook {
    ttl_secs: u64,
    outstanding: Mutex<LruCache<[u8; NONCE_LEN], Challenge>>,
}

impl ChallengeBook {
    pub fn new(ttl_secs: u64, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        ChallengeBook {
            ttl_secs,
            outstanding: Mutex::new(LruCache::new(capacity)),
        }
    }

    pub fn issue(&self, now: u64) -> Result<Challenge, CryptoError> {
        let challenge = make_challenge(now, self.ttl_secs)?;
        self.outstanding.lock().put(challenge.nonce, challenge.clone());
        Ok(challenge)
    }

    pub fn lookup(&self, nonce: &[u8; NONCE_LEN]) -> Option<Challenge> {
        self.outstanding.lock().peek(nonce).cloned()
    }

    /// True iff `challenge` is outstanding and unexpired and `signature`
    /// verifies under `signer`. Marks the nonce used on success.
    pub fn verify_challenge_response(
        &self,
        challenge: &Challenge,
        signature: &Signature,
        signer: &SigningPublicKey,
        now: u64,
    ) -> bool {
        let mut book = self.outstanding.lock();
        match book.peek(&challenge.nonce) {
            Some(issued) if issued == challenge => {}
            _ => return false,
        }
        if challenge.is_expired(now) {
            book.pop(&challenge.nonce);
            return false;
        }
        if !signer.verify(&challenge.message(), signature) {
            return false;
        }
        book.pop(&challenge.nonce);
        true
    }
}

impl Default for ChallengeBook {
    fn default() -> Self {
        ChallengeBook::new(DEFAULT_CHALLENGE_TTL_SECS, DEFAULT_NONCE_CAPACITY)
    }
}
