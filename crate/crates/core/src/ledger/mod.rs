//! Append-only, hash-chained transaction log.
//!
//! A single writer admits signed transactions, runs them through a
//! [`TransactionExecutor`] (the contracts) and groups them into blocks. Each
//! sealed block is written as one canonical JSON line and fsynced before the
//! seal returns. Loading a ledger file re-derives every digest, so any change
//! to sealed content is reported by [`validate_ledger_file`].

mod block;
mod transaction;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use block::{compute_block_hash, compute_tx_root, Block};
pub use transaction::{ContractKind, Transaction, TransactionDraft};

use crate::canonical::Digest;
use crate::clock::Clock;
use crate::crypto::EncryptionPublicKey;

pub const DEFAULT_BLOCK_SIZE: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("transaction signature does not verify")]
    BadSignature,
    #[error("sender is not a registered identity")]
    UnknownSender,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("malformed transaction: {0}")]
    MalformedTransaction(String),
    #[error("expected sequence {expected}, got {got}")]
    SequenceMismatch { expected: u64, got: u64 },
    #[error("no pending transactions to seal")]
    NothingPending,
    #[error("ledger file already exists: {0}")]
    AlreadyExists(PathBuf),
    #[error("ledger is corrupt: {0}")]
    Corrupt(ValidationReport),
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub height: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn valid() -> Self {
        ValidationReport {
            ok: true,
            violation: None,
        }
    }

    pub fn invalid(height: u64, reason: impl Into<String>) -> Self {
        ValidationReport {
            ok: false,
            violation: Some(Violation {
                height,
                reason: reason.into(),
            }),
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.violation {
            None => f.write_str("ok"),
            Some(v) => write!(f, "violation at height {}: {}", v.height, v.reason),
        }
    }
}

/// The contract layer as seen by the ledger.
pub trait TransactionExecutor {
    type Delta;
    type Error;

    /// Rejects payloads that do not decode for their (contract, operation).
    fn check_payload(&self, tx: &Transaction) -> Result<(), String>;
    fn is_authorized_sender(&self, tx: &Transaction) -> bool;
    fn execute(&mut self, tx: &Transaction) -> Result<Self::Delta, Self::Error>;
    /// Marker recorded on-ledger for a failed execution.
    fn failure_marker(error: &Self::Error) -> String;
}

#[derive(Debug)]
pub struct Admission<D, E> {
    pub sequence: u64,
    pub outcome: Result<D, E>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFilter {
    pub contract: Option<ContractKind>,
    pub operation: Option<String>,
    pub identity: Option<EncryptionPublicKey>,
    /// Inclusive lower bound.
    pub since_sequence: Option<u64>,
}

struct LedgerFile {
    path: PathBuf,
    file: File,
}

impl LedgerFile {
    fn append(&mut self, block: &Block) -> std::io::Result<()> {
        let mut line = block.to_line();
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

pub struct Ledger {
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    next_sequence: u64,
    block_size: usize,
    clock: Arc<dyn Clock>,
    file: Option<LedgerFile>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("height", &self.blocks.len())
            .field("pending", &self.pending.len())
            .field("next_sequence", &self.next_sequence)
            .field("path", &self.file.as_ref().map(|f| &f.path))
            .finish()
    }
}

impl Ledger {
    pub fn in_memory(clock: Arc<dyn Clock>, block_size: usize) -> Ledger {
        let genesis = Block::genesis(clock.now());
        Ledger {
            blocks: vec![genesis],
            pending: Vec::new(),
            next_sequence: 0,
            block_size: block_size.max(1),
            clock,
            file: None,
        }
    }

    /// Creates a new ledger file holding only the genesis block.
    pub fn create(path: impl AsRef<Path>, clock: Arc<dyn Clock>, block_size: usize) -> Result<Ledger, LedgerError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => LedgerError::AlreadyExists(path.to_path_buf()),
                _ => LedgerError::Io(e),
            })?;
        let mut ledger = Ledger::in_memory(clock, block_size);
        let mut store = LedgerFile {
            path: path.to_path_buf(),
            file,
        };
        store.append(&ledger.blocks[0])?;
        ledger.file = Some(store);
        Ok(ledger)
    }

    /// Loads and fully validates an existing ledger file.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>, block_size: usize) -> Result<Ledger, LedgerError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        let blocks = parse_ledger_bytes(&bytes).map_err(LedgerError::Corrupt)?;
        let report = validate_blocks(&blocks, &[]);
        if !report.ok {
            return Err(LedgerError::Corrupt(report));
        }
        let next_sequence = blocks
            .iter()
            .flat_map(|b| &b.transactions)
            .last()
            .map_or(0, |tx| tx.sequence + 1);
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Ledger {
            blocks,
            pending: Vec::new(),
            next_sequence,
            block_size: block_size.max(1),
            clock,
            file: Some(LedgerFile {
                path: path.to_path_buf(),
                file,
            }),
        })
    }

    pub fn open_or_create(path: impl AsRef<Path>, clock: Arc<dyn Clock>, block_size: usize) -> Result<Ledger, LedgerError> {
        if path.as_ref().exists() {
            Self::open(path, clock, block_size)
        } else {
            Self::create(path, clock, block_size)
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|f| f.path.as_path())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always holds genesis")
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Every admitted transaction, sealed then pending, in sequence order.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter())
            .chain(self.pending.iter())
    }

    pub fn transaction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum::<usize>() + self.pending.len()
    }

    /// Admits `tx`, executes it, and appends it to pending with a failure
    /// marker if execution failed. Seals automatically once `block_size`
    /// transactions are pending.
    pub fn submit_transaction<E: TransactionExecutor>(
        &mut self,
        mut tx: Transaction,
        executor: &mut E,
    ) -> Result<Admission<E::Delta, E::Error>, LedgerError> {
        if tx.sequence != self.next_sequence {
            return Err(LedgerError::SequenceMismatch {
                expected: self.next_sequence,
                got: tx.sequence,
            });
        }
        if tx.failure.is_some() {
            return Err(LedgerError::MalformedTransaction("failure marker set by submitter".into()));
        }
        if !tx.signature_valid() {
            return Err(LedgerError::BadSignature);
        }
        if !tx.tx_id_valid() {
            return Err(LedgerError::MalformedTransaction("tx_id does not match contents".into()));
        }
        executor
            .check_payload(&tx)
            .map_err(LedgerError::MalformedPayload)?;
        if !executor.is_authorized_sender(&tx) {
            return Err(LedgerError::UnknownSender);
        }

        let outcome = executor.execute(&tx);
        if let Err(e) = &outcome {
            tx.failure = Some(E::failure_marker(e));
        }
        let sequence = tx.sequence;
        self.pending.push(tx);
        self.next_sequence += 1;
        if self.pending.len() >= self.block_size {
            self.seal_block()?;
        }
        Ok(Admission { sequence, outcome })
    }

    /// Seals all pending transactions into a new block and persists it.
    pub fn seal_block(&mut self) -> Result<&Block, LedgerError> {
        if self.pending.is_empty() {
            return Err(LedgerError::NothingPending);
        }
        let tip = self.tip();
        let block = Block::seal(
            tip.height + 1,
            tip.block_hash,
            self.pending.clone(),
            self.clock.now(),
        );
        if let Some(file) = self.file.as_mut() {
            file.append(&block)?;
        }
        self.pending.clear();
        self.blocks.push(block);
        Ok(self.tip())
    }

    pub fn validate_chain(&self) -> ValidationReport {
        validate_blocks(&self.blocks, &self.pending)
    }

    pub fn query_log<F>(&self, filter: &LogFilter, involves: F) -> Vec<Transaction>
    where
        F: Fn(&Transaction, &EncryptionPublicKey) -> bool,
    {
        self.transactions()
            .filter(|tx| filter.since_sequence.is_none_or(|s| tx.sequence >= s))
            .filter(|tx| filter.contract.is_none_or(|c| tx.contract == c))
            .filter(|tx| filter.operation.as_deref().is_none_or(|op| tx.operation == op))
            .filter(|tx| filter.identity.as_ref().is_none_or(|id| involves(tx, id)))
            .cloned()
            .collect()
    }
}

/// Checks every block and chain invariant; `pending` is checked for
/// signatures and sequence continuity and reported at height `blocks.len()`.
pub fn validate_blocks(blocks: &[Block], pending: &[Transaction]) -> ValidationReport {
    if blocks.is_empty() {
        return ValidationReport::invalid(0, "missing genesis block");
    }
    let mut expected_sequence = 0u64;
    let mut prev_hash = Digest::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let at = i as u64;
        if block.height != at {
            return ValidationReport::invalid(at, format!("height {} at position {at}", block.height));
        }
        if block.prev_hash != prev_hash {
            return ValidationReport::invalid(at, "prev_hash does not match predecessor");
        }
        if at > 0 && block.transactions.is_empty() {
            return ValidationReport::invalid(at, "non-genesis block without transactions");
        }
        if let Err(reason) = check_transactions(&block.transactions, &mut expected_sequence) {
            return ValidationReport::invalid(at, reason);
        }
        if compute_tx_root(&block.transactions) != block.tx_root {
            return ValidationReport::invalid(at, "tx_root does not match transactions");
        }
        if compute_block_hash(block.height, &block.prev_hash, &block.tx_root, block.sealed_at) != block.block_hash {
            return ValidationReport::invalid(at, "block_hash does not match header");
        }
        prev_hash = block.block_hash;
    }
    if let Err(reason) = check_transactions(pending, &mut expected_sequence) {
        return ValidationReport::invalid(blocks.len() as u64, format!("pending: {reason}"));
    }
    ValidationReport::valid()
}

fn check_transactions(txs: &[Transaction], expected_sequence: &mut u64) -> Result<(), String> {
    for tx in txs {
        if tx.sequence != *expected_sequence {
            return Err(format!("sequence {} where {} expected", tx.sequence, expected_sequence));
        }
        if !tx.tx_id_valid() {
            return Err(format!("tx {} id does not match contents", tx.sequence));
        }
        if !tx.signature_valid() {
            return Err(format!("tx {} signature does not verify", tx.sequence));
        }
        *expected_sequence += 1;
    }
    Ok(())
}

/// Parses a ledger file's bytes. Every line must be the exact canonical
/// serialization of the block it decodes to, and the file must end with a
/// newline.
pub fn parse_ledger_bytes(bytes: &[u8]) -> Result<Vec<Block>, ValidationReport> {
    if bytes.is_empty() {
        return Err(ValidationReport::invalid(0, "empty ledger file"));
    }
    let Some(body) = bytes.strip_suffix(b"\n") else {
        let height = bytes.iter().filter(|&&b| b == b'\n').count() as u64;
        return Err(ValidationReport::invalid(height, "truncated final line"));
    };
    let mut blocks = Vec::new();
    for (i, line) in body.split(|&b| b == b'\n').enumerate() {
        let at = i as u64;
        let block: Block = serde_json::from_slice(line)
            .map_err(|e| ValidationReport::invalid(at, format!("unparseable block: {e}")))?;
        if block.to_line() != line {
            return Err(ValidationReport::invalid(at, "block line is not in canonical form"));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn validate_ledger_bytes(bytes: &[u8]) -> ValidationReport {
    match parse_ledger_bytes(bytes) {
        Ok(blocks) => validate_blocks(&blocks, &[]),
        Err(report) => report,
    }
}

pub fn validate_ledger_file(path: impl AsRef<Path>) -> ValidationReport {
    match std::fs::read(path.as_ref()) {
        Ok(bytes) => validate_ledger_bytes(&bytes),
        Err(e) => ValidationReport::invalid(0, format!("unreadable ledger file: {e}")),
    }
}
