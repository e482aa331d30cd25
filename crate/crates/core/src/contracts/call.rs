//! Contract invocations and their canonical payload encoding.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{b64, to_canonical_vec};
use crate::crypto::{EncryptionPublicKey, SigningPublicKey};
use crate::ledger::{ContractKind, Transaction, TransactionDraft};

pub const OP_REGISTER: &str = "register";
pub const OP_ROTATE_KEY: &str = "rotate_key";
pub const OP_GRANT: &str = "grant";
pub const OP_REVOKE: &str = "revoke";
pub const OP_CONSUME: &str = "consume";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterArgs {
    pub handle: String,
    pub encryption_public_key: EncryptionPublicKey,
    pub signing_public_key: SigningPublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrantArgs {
    pub grantor: EncryptionPublicKey,
    pub grantee: EncryptionPublicKey,
    pub token_name: String,
    #[serde(with = "b64")]
    pub token: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevokeArgs {
    pub grantor: EncryptionPublicKey,
    pub grantee: EncryptionPublicKey,
    pub token_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumeArgs {
    pub grantee: EncryptionPublicKey,
    pub token_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractCall {
    Register(RegisterArgs),
    /// Binds new keys to an existing handle (lost or stolen key recovery).
    RotateKey(RegisterArgs),
    Grant(GrantArgs),
    Revoke(RevokeArgs),
    Consume(ConsumeArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallDecodeError {
    #[error("unknown operation {contract}.{operation}")]
    UnknownOperation { contract: ContractKind, operation: String },
    #[error("payload does not decode: {0}")]
    Malformed(String),
}

fn decode<T: DeserializeOwned>(payload: &[u8]) -> Result<T, CallDecodeError> {
    serde_json::from_slice(payload).map_err(|e| CallDecodeError::Malformed(e.to_string()))
}

impl ContractCall {
    pub fn contract(&self) -> ContractKind {
        match self {
            ContractCall::Register(_) | ContractCall::RotateKey(_) => ContractKind::Registry,
            _ => ContractKind::Access,
        }
    }

    pub fn operation(&self) -> &'static str {
        match self {
            ContractCall::Register(_) => OP_REGISTER,
            ContractCall::RotateKey(_) => OP_ROTATE_KEY,
            ContractCall::Grant(_) => OP_GRANT,
            ContractCall::Revoke(_) => OP_REVOKE,
            ContractCall::Consume(_) => OP_CONSUME,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let bytes = match self {
            ContractCall::Register(a) | ContractCall::RotateKey(a) => to_canonical_vec(a),
            ContractCall::Grant(a) => to_canonical_vec(a),
            ContractCall::Revoke(a) => to_canonical_vec(a),
            ContractCall::Consume(a) => to_canonical_vec(a),
        };
        bytes.expect("call arguments serialize")
    }

    pub fn draft(&self, timestamp: u64) -> TransactionDraft {
        TransactionDraft::new(self.contract(), self.operation(), self.payload(), timestamp)
    }

    pub fn decode(contract: ContractKind, operation: &str, payload: &[u8]) -> Result<ContractCall, CallDecodeError> {
        match (contract, operation) {
            (ContractKind::Registry, OP_REGISTER) => decode(payload).map(ContractCall::Register),
            (ContractKind::Registry, OP_ROTATE_KEY) => decode(payload).map(ContractCall::RotateKey),
            (ContractKind::Access, OP_GRANT) => decode(payload).map(ContractCall::Grant),
            (ContractKind::Access, OP_REVOKE) => decode(payload).map(ContractCall::Revoke),
            (ContractKind::Access, OP_CONSUME) => decode(payload).map(ContractCall::Consume),
            _ => Err(CallDecodeError::UnknownOperation {
                contract,
                operation: operation.to_string(),
            }),
        }
    }

    pub fn from_transaction(tx: &Transaction) -> Result<ContractCall, CallDecodeError> {
        Self::decode(tx.contract, &tx.operation, &tx.payload)
    }

    /// Identities this call is about, actor first.
    pub fn participants(&self) -> Vec<EncryptionPublicKey> {
        match self {
            ContractCall::Register(a) | ContractCall::RotateKey(a) => vec![a.encryption_public_key],
            ContractCall::Grant(a) => vec![a.grantor, a.grantee],
            ContractCall::Revoke(a) => vec![a.grantor, a.grantee],
            ContractCall::Consume(a) => vec![a.grantee],
        }
    }

    /// Arguments as plain JSON, for audit views.
    pub fn args_json(&self) -> serde_json::Value {
        let v = match self {
            ContractCall::Register(a) | ContractCall::RotateKey(a) => serde_json::to_value(a),
            ContractCall::Grant(a) => serde_json::to_value(a),
            ContractCall::Revoke(a) => serde_json::to_value(a),
            ContractCall::Consume(a) => serde_json::to_value(a),
        };
        v.expect("call arguments serialize")
    }
}
