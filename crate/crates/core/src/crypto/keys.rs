use std::fmt;

use ed25519_dalek::Signer;
use rand_core::{OsRng, RngCore};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CryptoError;
use crate::canonical::b64;

pub const KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Fills `buf` from the OS randomness source.
pub(crate) fn fill_random(buf: &mut [u8]) -> Result<(), CryptoError> {
    OsRng
        .try_fill_bytes(buf)
        .map_err(|_| CryptoError::EntropyUnavailable)
}

/// Public half of an X25519 key pair. This is a participant's digital health
/// identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncryptionPublicKey([u8; KEY_LEN]);

impl EncryptionPublicKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Result<Self, CryptoError> {
        if bytes == [0u8; KEY_LEN] {
            return Err(CryptoError::MalformedKey("all-zero encryption key".into()));
        }
        Ok(EncryptionPublicKey(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedKey(format!("expected {KEY_LEN} bytes, got {}", bytes.len())))?;
        Self::from_bytes(arr)
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        let bytes = b64::decode(s).ok_or_else(|| CryptoError::MalformedKey("invalid base64url".into()))?;
        Self::from_slice(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_b64(&self) -> String {
        b64::encode(&self.0)
    }
}

/// Public half of an Ed25519 key pair, registered next to the identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SigningPublicKey([u8; KEY_LEN]);

impl SigningPublicKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Result<Self, CryptoError> {
        ed25519_dalek::VerifyingKey::from_bytes(&bytes)
            .map_err(|_| CryptoError::MalformedKey("not a valid ed25519 point".into()))?;
        Ok(SigningPublicKey(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedKey(format!("expected {KEY_LEN} bytes, got {}", bytes.len())))?;
        Self::from_bytes(arr)
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        let bytes = b64::decode(s).ok_or_else(|| CryptoError::MalformedKey("invalid base64url".into()))?;
        Self::from_slice(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_b64(&self) -> String {
        b64::encode(&self.0)
    }

    /// Strict Ed25519 verification; any malformed signature is simply invalid.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify_strict(message, &sig).is_ok()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn parse(s: &str) -> Option<Signature> {
        b64::decode_array(s).map(Signature)
    }

    pub fn to_b64(&self) -> String {
        b64::encode(&self.0)
    }
}

pub struct EncryptionSecretKey(x25519_dalek::StaticSecret);

impl EncryptionSecretKey {
    pub fn generate() -> Result<Self, CryptoError> {
        let mut seed = [0u8; KEY_LEN];
        fill_random(&mut seed)?;
        Ok(Self::from_bytes(seed))
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        EncryptionSecretKey(x25519_dalek::StaticSecret::from(bytes))
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        b64::decode_array(s)
            .map(Self::from_bytes)
            .ok_or_else(|| CryptoError::MalformedKey("expected 32 base64url bytes".into()))
    }

    pub fn to_bytes(&self) -> [u8; KEY_LEN] {
        self.0.to_bytes()
    }

    pub fn public_key(&self) -> EncryptionPublicKey {
        EncryptionPublicKey(x25519_dalek::PublicKey::from(&self.0).to_bytes())
    }

    pub(crate) fn diffie_hellman(&self, peer: &EncryptionPublicKey) -> x25519_dalek::SharedSecret {
        self.0.diffie_hellman(&x25519_dalek::PublicKey::from(peer.0))
    }
}

pub struct SigningSecretKey(ed25519_dalek::SigningKey);

impl SigningSecretKey {
    pub fn generate() -> Result<Self, CryptoError> {
        let mut seed = [0u8; KEY_LEN];
        fill_random(&mut seed)?;
        Ok(Self::from_bytes(seed))
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SigningSecretKey(ed25519_dalek::SigningKey::from_bytes(&bytes))
    }

    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        b64::decode_array(s)
            .map(Self::from_bytes)
            .ok_or_else(|| CryptoError::MalformedKey("expected 32 base64url bytes".into()))
    }

    pub fn to_bytes(&self) -> [u8; KEY_LEN] {
        self.0.to_bytes()
    }

    pub fn public_key(&self) -> SigningPublicKey {
        SigningPublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.0.sign(message).to_bytes())
    }
}

impl fmt::Debug for EncryptionSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EncryptionSecretKey(..)")
    }
}

impl fmt::Debug for SigningSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningSecretKey(..)")
    }
}

/// A participant's two key pairs. Encryption and signing keys are separate
/// types so one can never be used in the other's role.
#[derive(Debug)]
pub struct KeyMaterial {
    pub encryption: EncryptionSecretKey,
    pub signing: SigningSecretKey,
}

impl KeyMaterial {
    pub fn generate() -> Result<Self, CryptoError> {
        Ok(KeyMaterial {
            encryption: EncryptionSecretKey::generate()?,
            signing: SigningSecretKey::generate()?,
        })
    }

    pub fn encryption_public(&self) -> EncryptionPublicKey {
        self.encryption.public_key()
    }

    pub fn signing_public(&self) -> SigningPublicKey {
        self.signing.public_key()
    }
}

pub fn generate_key_material() -> Result<KeyMaterial, CryptoError> {
    KeyMaterial::generate()
}

macro_rules! b64_key_impls {
    ($ty:ident) => {
        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($ty), "({})"), self.to_b64())
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_b64())
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_b64())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                $ty::parse(&s).map_err(D::Error::custom)
            }
        }
    };
}

b64_key_impls!(EncryptionPublicKey);
b64_key_impls!(SigningPublicKey);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_b64())
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_b64())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Signature::parse(&s).ok_or_else(|| D::Error::custom("expected 64 base64url bytes"))
    }
}
