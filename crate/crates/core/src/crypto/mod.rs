//! Key material, the access-token envelope and login challenges.

mod challenge;
pub mod envelope;
mod keys;
mod token;

pub use challenge::{
    challenge_message, make_challenge, sign_challenge, Challenge, ChallengeBook,
    DEFAULT_CHALLENGE_TTL_SECS, DEFAULT_NONCE_CAPACITY, NONCE_LEN,
};
pub use keys::{
    generate_key_material, EncryptionPublicKey, EncryptionSecretKey, KeyMaterial, Signature,
    SigningPublicKey, SigningSecretKey, KEY_LEN, SIGNATURE_LEN,
};
pub use token::{
    create_access_token, open_access_token, verify_signed_pointer, AccessToken, Freshness,
    OpenedToken, SignedReferencePointer, TokenHeader, ENCRYPTION_SCHEME, SIGNATURE_SCHEME,
    TOKEN_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("secure randomness source unavailable")]
    EntropyUnavailable,
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("malformed reference pointer: {0}")]
    MalformedPointer(String),
    #[error("malformed access token: {0}")]
    MalformedToken(String),
    #[error("unsupported token scheme: {0}")]
    UnsupportedScheme(String),
    #[error("decryption failed")]
    DecryptionFailed,
    #[error("signature does not verify against the claimed sender")]
    SignatureInvalid,
}
