//! Hybrid public-key encryption: ephemeral X25519 agreement, HKDF-SHA256 key
//! derivation and ChaCha20-Poly1305 for the payload.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use sha2::Sha256;

use super::keys::{fill_random, EncryptionPublicKey, EncryptionSecretKey, KEY_LEN};
use super::CryptoError;

pub const NONCE_LEN: usize = 12;
const KDF_INFO: &[u8] = b"fhirchain/envelope/v1";

/// Output of [`encrypt`] with no caller-bound header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBox {
    pub ephemeral_public: [u8; KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

fn derive_key(
    shared: &x25519_dalek::SharedSecret,
    ephemeral_public: &[u8; KEY_LEN],
    recipient: &EncryptionPublicKey,
) -> Result<[u8; 32], CryptoError> {
    if !shared.was_contributory() {
        return Err(CryptoError::MalformedKey("recipient key has small order".into()));
    }
    let mut salt = [0u8; 2 * KEY_LEN];
    salt[..KEY_LEN].copy_from_slice(ephemeral_public);
    salt[KEY_LEN..].copy_from_slice(recipient.as_bytes());
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared.as_bytes());
    let mut okm = [0u8; 32];
    hk.expand(KDF_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    Ok(okm)
}

/// Encrypts with an ephemeral secret chosen by the caller, so the caller can
/// commit to the ephemeral public key (in `aad`) before encrypting.
pub(crate) fn seal_with_ephemeral(
    ephemeral: &EncryptionSecretKey,
    recipient: &EncryptionPublicKey,
    aad: &[u8],
    plaintext: &[u8],
) -> Result<([u8; NONCE_LEN], Vec<u8>), CryptoError> {
    let epk = *ephemeral.public_key().as_bytes();
    let key = derive_key(&ephemeral.diffie_hellman(recipient), &epk, recipient)?;
    let mut nonce = [0u8; NONCE_LEN];
    fill_random(&mut nonce)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad })
        .map_err(|_| CryptoError::MalformedToken("encryption failed".into()))?;
    Ok((nonce, ciphertext))
}

pub(crate) fn open_with(
    recipient: &EncryptionSecretKey,
    ephemeral_public: &[u8; KEY_LEN],
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let epk = EncryptionPublicKey::from_bytes(*ephemeral_public)
        .map_err(|_| CryptoError::DecryptionFailed)?;
    let key = derive_key(&recipient.diffie_hellman(&epk), ephemeral_public, &recipient.public_key())
        .map_err(|_| CryptoError::DecryptionFailed)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    cipher
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| CryptoError::DecryptionFailed)
}

pub fn encrypt(recipient: &EncryptionPublicKey, plaintext: &[u8]) -> Result<SealedBox, CryptoError> {
    let ephemeral = EncryptionSecretKey::generate()?;
    let (nonce, ciphertext) = seal_with_ephemeral(&ephemeral, recipient, &[], plaintext)?;
    Ok(SealedBox {
        ephemeral_public: *ephemeral.public_key().as_bytes(),
        nonce,
        ciphertext,
    })
}

pub fn decrypt(recipient: &EncryptionSecretKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
    open_with(recipient, &sealed.ephemeral_public, &sealed.nonce, &[], &sealed.ciphertext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_key_material;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn encrypt_then_decrypt_round_trips(data in prop::collection::vec(any::<u8>(), 0..512)) {
            let km = generate_key_material().unwrap();
            let sealed = encrypt(&km.encryption_public(), &data).unwrap();
            prop_assert_eq!(decrypt(&km.encryption, &sealed).unwrap(), data);
        }
    }

    #[test]
    fn other_private_key_cannot_decrypt() {
        let bob = generate_key_material().unwrap();
        let carol = generate_key_material().unwrap();
        let sealed = encrypt(&bob.encryption_public(), b"pointer").unwrap();
        assert!(matches!(decrypt(&carol.encryption, &sealed), Err(CryptoError::DecryptionFailed)));
    }

    #[test]
    fn small_order_recipient_is_refused() {
        // u = 1 is a low-order point on curve25519.
        let mut low = [0u8; 32];
        low[0] = 1;
        let pk = EncryptionPublicKey::from_bytes(low).unwrap();
        assert!(matches!(encrypt(&pk, b"x"), Err(CryptoError::MalformedKey(_))));
    }
}
