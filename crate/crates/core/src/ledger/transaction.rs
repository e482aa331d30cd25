use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{b64, sha256, to_canonical_vec, Digest};
use crate::crypto::{Signature, SigningPublicKey, SigningSecretKey};

const TX_SIGNATURE_DOMAIN: &[u8] = b"fhirchain/transaction/v1\0";
const TX_ID_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    Registry,
    Access,
}

impl fmt::Display for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractKind::Registry => "registry",
            ContractKind::Access => "access",
        })
    }
}

/// A signed contract invocation. `failure` is filled in by the ledger at
/// admission when contract execution rejected the call; it is covered by the
/// transaction digest but not by the submitter's signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub tx_id: String,
    pub contract: ContractKind,
    pub operation: String,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub sender: SigningPublicKey,
    pub signature: Signature,
    pub timestamp: u64,
    pub sequence: u64,
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct SignedBody<'a> {
    tx_id: &'a str,
    contract: ContractKind,
    operation: &'a str,
    #[serde(with = "b64")]
    payload: &'a [u8],
    sender: &'a SigningPublicKey,
    timestamp: u64,
    sequence: u64,
}

#[derive(Serialize)]
struct IdBody<'a> {
    contract: ContractKind,
    operation: &'a str,
    #[serde(with = "b64")]
    payload: &'a [u8],
    sender: &'a SigningPublicKey,
    timestamp: u64,
    sequence: u64,
}

fn compute_tx_id(
    contract: ContractKind,
    operation: &str,
    payload: &[u8],
    sender: &SigningPublicKey,
    timestamp: u64,
    sequence: u64,
) -> String {
    let body = IdBody {
        contract,
        operation,
        payload,
        sender,
        timestamp,
        sequence,
    };
    let digest = sha256(&to_canonical_vec(&body).expect("tx id body serializes"));
    hex::encode(&digest.as_bytes()[..TX_ID_LEN])
}

impl Transaction {
    fn signed_body(&self) -> SignedBody<'_> {
        SignedBody {
            tx_id: &self.tx_id,
            contract: self.contract,
            operation: &self.operation,
            payload: &self.payload,
            sender: &self.sender,
            timestamp: self.timestamp,
            sequence: self.sequence,
        }
    }

    /// Bytes covered by `signature`.
    pub fn signing_message(&self) -> Vec<u8> {
        let mut msg = TX_SIGNATURE_DOMAIN.to_vec();
        msg.extend(to_canonical_vec(&self.signed_body()).expect("signed body serializes"));
        msg
    }

    pub fn signature_valid(&self) -> bool {
        self.sender.verify(&self.signing_message(), &self.signature)
    }

    /// `tx_id` is a deterministic function of the signed fields.
    pub fn tx_id_valid(&self) -> bool {
        self.tx_id
            == compute_tx_id(
                self.contract,
                &self.operation,
                &self.payload,
                &self.sender,
                self.timestamp,
                self.sequence,
            )
    }

    /// Digest over every field, signature and failure marker included.
    pub fn digest(&self) -> Digest {
        sha256(&to_canonical_vec(self).expect("transaction serializes"))
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// An unsigned invocation waiting for a sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionDraft {
    pub contract: ContractKind,
    pub operation: String,
    pub payload: Vec<u8>,
    pub timestamp: u64,
}

impl TransactionDraft {
    pub fn new(contract: ContractKind, operation: impl Into<String>, payload: Vec<u8>, timestamp: u64) -> Self {
        TransactionDraft {
            contract,
            operation: operation.into(),
            payload,
            timestamp,
        }
    }

    pub fn sign(self, sequence: u64, key: &SigningSecretKey) -> Transaction {
        let sender = key.public_key();
        let tx_id = compute_tx_id(
            self.contract,
            &self.operation,
            &self.payload,
            &sender,
            self.timestamp,
            sequence,
        );
        let mut tx = Transaction {
            tx_id,
            contract: self.contract,
            operation: self.operation,
            payload: self.payload,
            sender,
            signature: Signature([0u8; 64]),
            timestamp: self.timestamp,
            sequence,
            failure: None,
        };
        tx.signature = key.sign(&tx.signing_message());
        tx
    }
}
