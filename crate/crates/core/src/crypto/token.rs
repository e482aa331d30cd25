//! Access tokens: a reference pointer signed by the sharer, then encrypted to
//! the recipient.
//!
//! The cleartext header (scheme ids, sender, recipient, token name, ephemeral
//! key, creation time) is both covered by the inner signature and used as AEAD
//! associated data. Binding sender and recipient inside the signature closes
//! the usual sign-then-encrypt forwarding gap: a recipient cannot re-encrypt a
//! signed pointer to a third party and pass it off as the signer's share.

use serde::{Deserialize, Serialize};

use super::envelope::{open_with, seal_with_ephemeral, NONCE_LEN};
use super::keys::{
    EncryptionPublicKey, EncryptionSecretKey, Signature, SigningPublicKey, SigningSecretKey, KEY_LEN,
};
use super::CryptoError;
use crate::canonical::{b64, to_canonical_vec};
use crate::fhir::{PathValidator, ReferencePointer};

pub const TOKEN_VERSION: u32 = 1;
pub const SIGNATURE_SCHEME: &str = "ed25519";
pub const ENCRYPTION_SCHEME: &str = "x25519-hkdf-sha256-chacha20poly1305";

const SIGNATURE_DOMAIN: &[u8] = b"fhirchain/reference-pointer/v1\0";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenHeader {
    pub version: u32,
    pub signature_scheme: String,
    pub encryption_scheme: String,
    /// Sender's encryption public key, used to look up their signing key.
    pub sender_hint: EncryptionPublicKey,
    pub recipient: EncryptionPublicKey,
    pub token_name: String,
    #[serde(with = "b64::array")]
    pub ephemeral_public: [u8; KEY_LEN],
    pub created_at: u64,
}

impl TokenHeader {
    fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("header serialization is infallible")
    }

    fn check_schemes(&self) -> Result<(), CryptoError> {
        if self.version != TOKEN_VERSION
            || self.signature_scheme != SIGNATURE_SCHEME
            || self.encryption_scheme != ENCRYPTION_SCHEME
        {
            return Err(CryptoError::UnsupportedScheme(format!(
                "v{} {}/{}",
                self.version, self.signature_scheme, self.encryption_scheme
            )));
        }
        Ok(())
    }

    fn signed_message(&self, payload: &[u8]) -> Vec<u8> {
        let header = self.canonical_bytes();
        let mut msg = Vec::with_capacity(SIGNATURE_DOMAIN.len() + 4 + header.len() + payload.len());
        msg.extend_from_slice(SIGNATURE_DOMAIN);
        msg.extend_from_slice(&(header.len() as u32).to_be_bytes());
        msg.extend_from_slice(&header);
        msg.extend_from_slice(payload);
        msg
    }
}

/// The encrypted, signed reference pointer stored in the Access contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessToken {
    pub header: TokenHeader,
    #[serde(with = "b64::array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
}

impl AccessToken {
    pub fn sender_hint(&self) -> &EncryptionPublicKey {
        &self.header.sender_hint
    }

    pub fn created_at(&self) -> u64 {
        self.header.created_at
    }

    /// Canonical bytes; this is what the ledger stores.
    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("token serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        serde_json::from_slice(bytes).map_err(|e| CryptoError::MalformedToken(e.to_string()))
    }
}

/// Decrypted token content: canonical pointer bytes plus the sender's
/// signature over them (and the header).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedReferencePointer {
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freshness {
    Fresh,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenedToken {
    pub pointer: ReferencePointer,
    pub signed: SignedReferencePointer,
    pub freshness: Freshness,
}

/// Signs `rp` with the sender's signing key, then encrypts the signed bytes to
/// `recipient`. The sender is `rp.created_by`.
pub fn create_access_token(
    rp: &ReferencePointer,
    token_name: &str,
    sender_signing: &SigningSecretKey,
    recipient: &EncryptionPublicKey,
    now: u64,
) -> Result<AccessToken, CryptoError> {
    rp.check_well_formed(PathValidator::r4())
        .map_err(|e| CryptoError::MalformedPointer(e.to_string()))?;
    let ephemeral = EncryptionSecretKey::generate()?;
    let header = TokenHeader {
        version: TOKEN_VERSION,
        signature_scheme: SIGNATURE_SCHEME.to_string(),
        encryption_scheme: ENCRYPTION_SCHEME.to_string(),
        sender_hint: rp.created_by,
        recipient: *recipient,
        token_name: token_name.to_string(),
        ephemeral_public: *ephemeral.public_key().as_bytes(),
        created_at: now,
    };
    let payload = rp.canonical_bytes();
    let signature = sender_signing.sign(&header.signed_message(&payload));
    let inner = to_canonical_vec(&SignedReferencePointer { payload, signature })
        .expect("signed pointer serialization is infallible");
    let (nonce, ciphertext) =
        seal_with_ephemeral(&ephemeral, recipient, &header.canonical_bytes(), &inner)?;
    Ok(AccessToken {
        header,
        nonce,
        ciphertext,
    })
}

/// Decrypts with the recipient's key and verifies the sender's signature.
/// Nothing is returned unless both succeed.
pub fn open_access_token(
    token: &AccessToken,
    recipient: &EncryptionSecretKey,
    sender_signing: &SigningPublicKey,
    now: u64,
) -> Result<OpenedToken, CryptoError> {
    token.header.check_schemes()?;
    let inner = open_with(
        recipient,
        &token.header.ephemeral_public,
        &token.nonce,
        &token.header.canonical_bytes(),
        &token.ciphertext,
    )?;
    let signed: SignedReferencePointer =
        serde_json::from_slice(&inner).map_err(|_| CryptoError::SignatureInvalid)?;
    let pointer = verify_signed_pointer(&token.header, &signed, sender_signing)?;
    let freshness = if pointer.is_expired(now) {
        Freshness::Expired
    } else {
        Freshness::Fresh
    };
    Ok(OpenedToken {
        pointer,
        signed,
        freshness,
    })
}

/// Verifies a signed pointer against the header of the token it came from.
/// Used directly by the server when the recipient decrypted client-side.
pub fn verify_signed_pointer(
    header: &TokenHeader,
    signed: &SignedReferencePointer,
    sender_signing: &SigningPublicKey,
) -> Result<ReferencePointer, CryptoError> {
    header.check_schemes()?;
    if !sender_signing.verify(&header.signed_message(&signed.payload), &signed.signature) {
        return Err(CryptoError::SignatureInvalid);
    }
    let pointer: ReferencePointer =
        serde_json::from_slice(&signed.payload).map_err(|e| CryptoError::MalformedPointer(e.to_string()))?;
    if pointer.canonical_bytes() != signed.payload || pointer.created_by != header.sender_hint {
        return Err(CryptoError::SignatureInvalid);
    }
    pointer
        .check_well_formed(PathValidator::r4())
        .map_err(|e| CryptoError::MalformedPointer(e.to_string()))?;
    Ok(pointer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::sha256;
    use crate::crypto::generate_key_material;

    fn pointer_from(sender: &EncryptionPublicKey, path: &str) -> ReferencePointer {
        ReferencePointer {
            base_url: "http://fhir.example/r4".into(),
            path: path.into(),
            data_hash: sha256(b"resource"),
            created_at: 1_000,
            expires_at: None,
            created_by: *sender,
        }
    }

    #[test]
    fn alice_to_bob_round_trip() {
        let alice = generate_key_material().unwrap();
        let bob = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/pt-1");
        let token = create_access_token(&rp, "pt1", &alice.signing, &bob.encryption_public(), 1_000).unwrap();
        let opened = open_access_token(&token, &bob.encryption, &alice.signing_public(), 1_001).unwrap();
        assert_eq!(opened.pointer, rp);
        assert_eq!(opened.freshness, Freshness::Fresh);
    }

    #[test]
    fn self_share_round_trips() {
        let alice = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Observation?patient=pt-1");
        let token = create_access_token(&rp, "self", &alice.signing, &alice.encryption_public(), 5).unwrap();
        let opened = open_access_token(&token, &alice.encryption, &alice.signing_public(), 5).unwrap();
        assert_eq!(opened.pointer, rp);
    }

    #[test]
    fn wrong_recipient_and_wrong_sender() {
        let alice = generate_key_material().unwrap();
        let bob = generate_key_material().unwrap();
        let carol = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/pt-1");
        let token = create_access_token(&rp, "n", &alice.signing, &bob.encryption_public(), 1).unwrap();
        assert!(matches!(
            open_access_token(&token, &carol.encryption, &alice.signing_public(), 1),
            Err(CryptoError::DecryptionFailed)
        ));
        assert!(matches!(
            open_access_token(&token, &bob.encryption, &carol.signing_public(), 1),
            Err(CryptoError::SignatureInvalid)
        ));
    }

    #[test]
    fn header_tampering_breaks_decryption() {
        let alice = generate_key_material().unwrap();
        let bob = generate_key_material().unwrap();
        let carol = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/pt-1");
        let token = create_access_token(&rp, "n", &alice.signing, &bob.encryption_public(), 1).unwrap();

        let mut renamed = token.clone();
        renamed.header.token_name = "other".into();
        assert!(matches!(
            open_access_token(&renamed, &bob.encryption, &alice.signing_public(), 1),
            Err(CryptoError::DecryptionFailed)
        ));

        let mut spoofed = token.clone();
        spoofed.header.sender_hint = carol.encryption_public();
        assert!(open_access_token(&spoofed, &bob.encryption, &alice.signing_public(), 1).is_err());
    }

    #[test]
    fn forwarded_signed_pointer_fails_verification() {
        // Bob decrypts Alice's token and tries to present the same signed
        // pointer under a header addressed to Carol.
        let alice = generate_key_material().unwrap();
        let bob = generate_key_material().unwrap();
        let carol = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/pt-1");
        let token = create_access_token(&rp, "n", &alice.signing, &bob.encryption_public(), 1).unwrap();
        let opened = open_access_token(&token, &bob.encryption, &alice.signing_public(), 1).unwrap();
        let mut header = token.header.clone();
        header.recipient = carol.encryption_public();
        assert!(matches!(
            verify_signed_pointer(&header, &opened.signed, &alice.signing_public()),
            Err(CryptoError::SignatureInvalid)
        ));
    }

    #[test]
    fn expired_pointer_is_marked() {
        let alice = generate_key_material().unwrap();
        let bob = generate_key_material().unwrap();
        let mut rp = pointer_from(&alice.encryption_public(), "Patient/pt-1");
        rp.expires_at = Some(2_000);
        let token = create_access_token(&rp, "n", &alice.signing, &bob.encryption_public(), 1_000).unwrap();
        let opened = open_access_token(&token, &bob.encryption, &alice.signing_public(), 2_000).unwrap();
        assert_eq!(opened.freshness, Freshness::Expired);
    }

    #[test]
    fn invalid_pointer_is_refused() {
        let alice = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "NotAType/5");
        assert!(matches!(
            create_access_token(&rp, "n", &alice.signing, &alice.encryption_public(), 1),
            Err(CryptoError::MalformedPointer(_))
        ));
    }

    #[test]
    fn unknown_scheme_is_refused() {
        let alice = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/1");
        let mut token = create_access_token(&rp, "n", &alice.signing, &alice.encryption_public(), 1).unwrap();
        token.header.version = 2;
        assert!(matches!(
            open_access_token(&token, &alice.encryption, &alice.signing_public(), 1),
            Err(CryptoError::UnsupportedScheme(_))
        ));
    }

    #[test]
    fn token_bytes_round_trip() {
        let alice = generate_key_material().unwrap();
        let rp = pointer_from(&alice.encryption_public(), "Patient/1");
        let token = create_access_token(&rp, "n", &alice.signing, &alice.encryption_public(), 1).unwrap();
        assert_eq!(AccessToken::from_bytes(&token.to_bytes()).unwrap(), token);
        assert!(AccessToken::from_bytes(b"{}").is_err());
    }
}
