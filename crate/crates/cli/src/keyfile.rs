//! Passphrase-protected key files.
//!
//! Private keys are sealed with ChaCha20-Poly1305 under a key derived from
//! the passphrase with Argon2id. Public keys stay in the clear so they can be
//! printed for registration without unlocking the file.

use std::path::{Path, PathBuf};

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use fhirchain_core::canonical::{b64, to_canonical_vec};
use fhirchain_core::crypto::{
    EncryptionPublicKey, EncryptionSecretKey, KeyMaterial, SigningPublicKey, SigningSecretKey, ENCRYPTION_SCHEME,
    SIGNATURE_SCHEME,
};
use fhirchain_core::node::write_private;
use rand_core::{OsRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const KEYFILE_VERSION: u32 = 1;
pub const KDF_SCHEME: &str = "argon2id-v19";
pub const CIPHER_SCHEME: &str = "chacha20poly1305";

const SALT_LEN: usize = 16;
const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdfParams {
    pub scheme: String,
    pub salt: String,
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl KdfParams {
    fn fresh() -> Result<Self, CliError> {
        let mut salt = [0u8; SALT_LEN];
        OsRng
            .try_fill_bytes(&mut salt)
            .map_err(|e| CliError::System(e.to_string()))?;
        Ok(KdfParams {
            scheme: KDF_SCHEME.into(),
            salt: b64::encode(&salt),
            m_cost_kib: Params::DEFAULT_M_COST,
            t_cost: Params::DEFAULT_T_COST,
            p_cost: Params::DEFAULT_P_COST,
        })
    }

    fn derive(&self, passphrase: &str) -> Result<Key, CliError> {
        if self.scheme != KDF_SCHEME {
            return Err(CliError::Usage(format!("unsupported kdf {}", self.scheme)));
        }
        let salt = b64::decode(&self.salt).ok_or(CliError::BadPassphrase)?;
        let params = Params::new(self.m_cost_kib, self.t_cost, self.p_cost, Some(32))
            .map_err(|e| CliError::Usage(format!("bad kdf parameters: {e}")))?;
        let mut key = Key::default();
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(passphrase.as_bytes(), &salt, &mut key)
            .map_err(|e| CliError::Usage(format!("kdf: {e}")))?;
        Ok(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub version: u32,
    pub handle: String,
    pub signature_scheme: String,
    pub encryption_scheme: String,
    pub encryption_public_key: EncryptionPublicKey,
    pub signing_public_key: SigningPublicKey,
    pub kdf: KdfParams,
    pub cipher: String,
    pub nonce: String,
    pub sealed: String,
}

#[derive(Serialize, Deserialize)]
struct Secrets {
    encryption: String,
    signing: String,
}

/// Associated data: everything in the clear that the secrets belong to.
#[derive(Serialize)]
struct Binding<'a> {
    version: u32,
    handle: &'a str,
    encryption_public_key: &'a EncryptionPublicKey,
    signing_public_key: &'a SigningPublicKey,
}

impl KeyFile {
    pub fn seal(handle: &str, keys: &KeyMaterial, passphrase: &str) -> Result<KeyFile, CliError> {
        if passphrase.is_empty() {
            return Err(CliError::Usage("passphrase must not be empty".into()));
        }
        let kdf = KdfParams::fresh()?;
        let cipher = ChaCha20Poly1305::new(&kdf.derive(passphrase)?);
        let mut nonce = [0u8; NONCE_LEN];
        OsRng
            .try_fill_bytes(&mut nonce)
            .map_err(|e| CliError::System(e.to_string()))?;
        let mut file = KeyFile {
            version: KEYFILE_VERSION,
            handle: handle.into(),
            signature_scheme: SIGNATURE_SCHEME.into(),
            encryption_scheme: ENCRYPTION_SCHEME.into(),
            encryption_public_key: keys.encryption_public(),
            signing_public_key: keys.signing_public(),
            kdf,
            cipher: CIPHER_SCHEME.into(),
            nonce: b64::encode(&nonce),
            sealed: String::new(),
        };
        let secrets = to_canonical_vec(&Secrets {
            encryption: b64::encode(&keys.encryption.to_bytes()),
            signing: b64::encode(&keys.signing.to_bytes()),
        })
        .expect("secrets serialize");
        let aad = file.binding();
        let sealed = cipher
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: &secrets, aad: &aad })
            .map_err(|_| CliError::System("key file encryption failed".into()))?;
        file.sealed = b64::encode(&sealed);
        Ok(file)
    }

    fn binding(&self) -> Vec<u8> {
        to_canonical_vec(&Binding {
            version: self.version,
            handle: &self.handle,
            encryption_public_key: &self.encryption_public_key,
            signing_public_key: &self.signing_public_key,
        })
        .expect("binding serializes")
    }

    /// Decrypts the private keys. Any failure, including tampering with the
    /// clear fields, reads as a bad passphrase.
    pub fn open(&self, passphrase: &str) -> Result<KeyMaterial, CliError> {
        if self.cipher != CIPHER_SCHEME {
            return Err(CliError::Usage(format!("unsupported cipher {}", self.cipher)));
        }
        let cipher = ChaCha20Poly1305::new(&self.kdf.derive(passphrase)?);
        let nonce: [u8; NONCE_LEN] = b64::decode_array(&self.nonce).ok_or(CliError::BadPassphrase)?;
        let sealed = b64::decode(&self.sealed).ok_or(CliError::BadPassphrase)?;
        let plain = cipher
            .decrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &sealed,
                    aad: &self.binding(),
                },
            )
            .map_err(|_| CliError::BadPassphrase)?;
        let secrets: Secrets = serde_json::from_slice(&plain).map_err(|_| CliError::BadPassphrase)?;
        let keys = KeyMaterial {
            encryption: EncryptionSecretKey::parse(&secrets.encryption)?,
            signing: SigningSecretKey::parse(&secrets.signing)?,
        };
        if keys.encryption_public() != self.encryption_public_key || keys.signing_public() != self.signing_public_key {
            return Err(CliError::BadPassphrase);
        }
        Ok(keys)
    }

    pub fn load(path: &Path) -> Result<KeyFile, CliError> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Writes a new file with owner-only permissions; never overwrites.
    pub fn save_new(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut bytes = serde_json::to_vec_pretty(self).expect("key file serializes");
        bytes.push(b'\n');
        write_private(path, &bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => CliError::ExistsAlready(path.to_path_buf()),
            _ => e.into(),
        })
    }
}

pub fn keyfile_path(home: &Path, handle: &str) -> PathBuf {
    home.join("keys").join(format!("{}.json", file_stem(handle)))
}

/// Handles are emails or phone numbers; keep the file name portable.
pub fn file_stem(handle: &str) -> String {
    handle
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "@.-_+".contains(c) { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fhirchain_core::crypto::generate_key_material;

    #[test]
    fn seal_open_round_trip() {
        let keys = generate_key_material().unwrap();
        let file = KeyFile::seal("alice@x.example", &keys, "correct horse").unwrap();
        let opened = file.open("correct horse").unwrap();
        assert_eq!(opened.encryption.to_bytes(), keys.encryption.to_bytes());
        assert_eq!(opened.signing.to_bytes(), keys.signing.to_bytes());
        assert!(matches!(file.open("wrong"), Err(CliError::BadPassphrase)));
    }

    #[test]
    fn clear_fields_are_bound() {
        let keys = generate_key_material().unwrap();
        let mut file = KeyFile::seal("alice@x.example", &keys, "pw").unwrap();
        file.handle = "mallory@x.example".into();
        assert!(matches!(file.open("pw"), Err(CliError::BadPassphrase)));
    }

    #[test]
    fn private_keys_are_not_in_the_file() {
        let keys = generate_key_material().unwrap();
        let text = serde_json::to_string(&KeyFile::seal("a@b.example", &keys, "pw").unwrap()).unwrap();
        assert!(!text.contains(&b64::encode(&keys.signing.to_bytes())));
        assert!(!text.contains(&b64::encode(&keys.encryption.to_bytes())));
    }
}
