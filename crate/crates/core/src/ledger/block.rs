use serde::{Deserialize, Serialize};

use super::transaction::Transaction;
use crate::canonical::{sha256, to_canonical_vec, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub transactions: Vec<Transaction>,
    pub sealed_at: u64,
    pub block_hash: Digest,
}

#[derive(Serialize)]
struct HeaderBody<'a> {
    height: u64,
    prev_hash: &'a Digest,
    tx_root: &'a Digest,
    sealed_at: u64,
}

/// Digest of the concatenated per-transaction digests, in order.
pub fn compute_tx_root(transactions: &[Transaction]) -> Digest {
    let mut concat = Vec::with_capacity(transactions.len() * 32);
    for tx in transactions {
        concat.extend_from_slice(tx.digest().as_bytes());
    }
    sha256(&concat)
}

pub fn compute_block_hash(height: u64, prev_hash: &Digest, tx_root: &Digest, sealed_at: u64) -> Digest {
    let body = HeaderBody {
        height,
        prev_hash,
        tx_root,
        sealed_at,
    };
    sha256(&to_canonical_vec(&body).expect("block header serializes"))
}

impl Block {
    pub fn genesis(sealed_at: u64) -> Block {
        Self::seal(0, Digest::ZERO, Vec::new(), sealed_at)
    }

    pub fn seal(height: u64, prev_hash: Digest, transactions: Vec<Transaction>, sealed_at: u64) -> Block {
        let tx_root = compute_tx_root(&transactions);
        let block_hash = compute_block_hash(height, &prev_hash, &tx_root, sealed_at);
        Block {
            height,
            prev_hash,
            tx_root,
            transactions,
            sealed_at,
            block_hash,
        }
    }

    /// One line of the ledger file, without the trailing newline.
    pub fn to_line(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("block serializes")
    }
}
