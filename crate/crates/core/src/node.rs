//! A single ledger node: owns the ledger file, the node signing key and the
//! materialized contract state, and derives the event and audit feeds.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::contracts::{
    ApplyError, ConsumeArgs, ContractCall, ContractError, ContractState, DigitalIdentity,
    GrantArgs, GrantRecord, LedgerExecutor, MembershipList, RegisterArgs, RevokeArgs, StateDelta,
};
use crate::crypto::{EncryptionPublicKey, SigningPublicKey, SigningSecretKey};
use crate::ledger::{ContractKind, Ledger, LedgerError, Transaction, TransactionExecutor};

pub const NODE_KEY_FILE: &str = "node.key";
pub const LEDGER_FILE: &str = "ledger.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    /// The contract refused the call. `sequence` is set when the attempt was
    /// logged on the ledger with a failure marker.
    #[error("{error}")]
    Rejected { sequence: Option<u64>, error: ContractError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("node key file: {0}")]
    KeyFile(String),
    #[error("replay diverged at sequence {sequence}: {reason}")]
    ReplayDiverged { sequence: u64, reason: String },
    #[error("membership list: {0}")]
    Membership(std::io::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl NodeError {
    pub fn contract_error(&self) -> Option<&ContractError> {
        match self {
            NodeError::Rejected { error, .. } => Some(error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Registered,
    Granted,
    Revoked,
    TokenConsumed,
}

/// A notification derived from a successful ledger transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sequence: u64,
    pub kind: EventKind,
    pub actor: EncryptionPublicKey,
    pub subject: Option<EncryptionPublicKey>,
    pub token_name: Option<String>,
    pub at: u64,
}

impl Event {
    pub fn involves(&self, key: &EncryptionPublicKey) -> bool {
        &self.actor == key || self.subject.as_ref() == Some(key)
    }
}

/// One ledger transaction as shown in audit views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sequence: u64,
    pub tx_id: String,
    pub timestamp: u64,
    pub contract: ContractKind,
    pub operation: String,
    pub args: serde_json::Value,
    /// `"ok"` or the failure marker.
    pub outcome: String,
    pub participants: Vec<EncryptionPublicKey>,
}

impl AuditEntry {
    pub fn involves(&self, key: &EncryptionPublicKey) -> bool {
        self.participants.contains(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committed<T> {
    pub sequence: u64,
    pub value: T,
}

#[derive(Clone)]
pub struct NodeOptions {
    pub data_dir: PathBuf,
    pub membership_file: Option<PathBuf>,
    pub require_membership: bool,
    pub block_size: usize,
    pub clock: Arc<dyn Clock>,
}

pub struct Node {
    ledger: Ledger,
    state: ContractState,
    key: SigningSecretKey,
    node_keys: Vec<SigningPublicKey>,
    events: Vec<Event>,
    audit: Vec<AuditEntry>,
    membership_file: Option<PathBuf>,
    require_membership: bool,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("ledger", &self.ledger)
            .field("node_key", &self.node_keys[0])
            .finish_non_exhaustive()
    }
}

fn load_or_create_key(path: &Path) -> Result<SigningSecretKey, NodeError> {
    match std::fs::read_to_string(path) {
        Ok(text) => SigningSecretKey::parse(text.trim()).map_err(|e| NodeError::KeyFile(e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let key = SigningSecretKey::generate().map_err(|e| NodeError::KeyFile(e.to_string()))?;
            let encoded = crate::canonical::b64::encode(&key.to_bytes());
            write_private(path, encoded.as_bytes())?;
            Ok(key)
        }
        Err(e) => Err(e.into()),
    }
}

/// Creates `path` readable only by the owner where the platform allows it.
pub fn write_private(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut f = options.open(path)?;
    f.write_all(contents)?;
    f.sync_all()
}

/// Participants of a call as seen by the state just before it executes.
/// Consumption also involves the grantor of the consumed token.
fn participants(state: &ContractState, call: &ContractCall) -> Vec<EncryptionPublicKey> {
    let mut keys = call.participants();
    if let ContractCall::Consume(a) = call {
        if let Some(record) = state.access.get(&a.grantee, &a.token_name) {
            keys.push(record.grantor);
        }
    }
    if let ContractCall::RotateKey(a) = call {
        if let Some(previous) = state.registry.by_handle(&a.handle) {
            keys.push(previous.encryption_public_key);
        }
    }
    keys
}

fn event_for(tx: &Transaction, delta: &StateDelta) -> Event {
    let (kind, actor, subject, token_name) = match delta {
        StateDelta::Registered(id) => (EventKind::Registered, id.encryption_public_key, None, None),
        StateDelta::KeyRotated { previous, current } => (
            EventKind::Registered,
            current.encryption_public_key,
            Some(previous.encryption_public_key),
            None,
        ),
        StateDelta::Granted(r) => (EventKind::Granted, r.grantor, Some(r.grantee), Some(r.token_name.clone())),
        StateDelta::Revoked { grantee, token_name } => {
            let grantor = match ContractCall::from_transaction(tx) {
                Ok(ContractCall::Revoke(a)) => a.grantor,
                _ => *grantee,
            };
            (EventKind::Revoked, grantor, Some(*grantee), Some(token_name.clone()))
        }
        StateDelta::Consumed { grantee, grantor, token_name } => {
            (EventKind::TokenConsumed, *grantee, Some(*grantor), Some(token_name.clone()))
        }
    };
    Event {
        sequence: tx.sequence,
        kind,
        actor,
        subject,
        token_name,
        at: tx.timestamp,
    }
}

fn audit_entry(tx: &Transaction, participants: Vec<EncryptionPublicKey>) -> AuditEntry {
    let args = ContractCall::from_transaction(tx)
        .map(|c| c.args_json())
        .unwrap_or(serde_json::Value::Null);
    AuditEntry {
        sequence: tx.sequence,
        tx_id: tx.tx_id.clone(),
        timestamp: tx.timestamp,
        contract: tx.contract,
        operation: tx.operation.clone(),
        args,
        outcome: tx.failure.clone().unwrap_or_else(|| "ok".to_string()),
        participants,
    }
}

impl Node {
    /// Opens (or initializes) the node in `data_dir`, validating the ledger
    /// and rebuilding contract state by replaying every transaction.
    pub fn open(options: NodeOptions) -> Result<Node, NodeError> {
        std::fs::create_dir_all(&options.data_dir)?;
        let key = load_or_create_key(&options.data_dir.join(NODE_KEY_FILE))?;
        let ledger = Ledger::open_or_create(
            options.data_dir.join(LEDGER_FILE),
            options.clock.clone(),
            options.block_size,
        )?;
        let mut node = Node {
            node_keys: vec![key.public_key()],
            key,
            ledger,
            state: ContractState::new(),
            events: Vec::new(),
            audit: Vec::new(),
            membership_file: options.membership_file,
            require_membership: options.require_membership,
            clock: options.clock,
        };
        node.replay()?;
        Ok(node)
    }

    fn replay(&mut self) -> Result<(), NodeError> {
        let txs: Vec<Transaction> = self.ledger.transactions().cloned().collect();
        for tx in &txs {
            let people = ContractCall::from_transaction(tx)
                .map(|c| participants(&self.state, &c))
                .unwrap_or_default();
            let outcome = self.state.apply_transaction(tx);
            let expected = outcome.as_ref().err().map(LedgerExecutor::failure_marker);
            if expected != tx.failure {
                return Err(NodeError::ReplayDiverged {
                    sequence: tx.sequence,
                    reason: format!("recorded outcome {:?}, replay gives {:?}", tx.failure, expected),
                });
            }
            if let Ok(delta) = &outcome {
                self.events.push(event_for(tx, delta));
            }
            self.audit.push(audit_entry(tx, people));
        }
        Ok(())
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn node_public_key(&self) -> SigningPublicKey {
        self.node_keys[0]
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn events_since(&self, after_sequence: Option<u64>) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(move |e| after_sequence.is_none_or(|s| e.sequence > s))
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn audit_for(&self, key: &EncryptionPublicKey) -> Vec<AuditEntry> {
        self.audit.iter().filter(|e| e.involves(key)).cloned().collect()
    }

    pub fn membership(&self) -> Result<MembershipList, NodeError> {
        match &self.membership_file {
            Some(path) => MembershipList::load(path).map_err(NodeError::Membership),
            None => Ok(MembershipList::default()),
        }
    }

    /// Signs `call` with the node key and submits it.
    pub fn submit(&mut self, call: ContractCall) -> Result<Committed<StateDelta>, NodeError> {
        let sequence = self.ledger.next_sequence();
        let tx = call.draft(self.clock.now()).sign(sequence, &self.key);
        self.submit_transaction(tx)
    }

    /// Submits an already signed transaction.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Committed<StateDelta>, NodeError> {
        let people = ContractCall::from_transaction(&tx)
            .map(|c| participants(&self.state, &c))
            .unwrap_or_default();
        let mut executor = LedgerExecutor {
            state: &mut self.state,
            node_keys: &self.node_keys,
        };
        let admission = self.ledger.submit_transaction(tx, &mut executor)?;
        let sequence = admission.sequence;
        let tx = self
            .ledger
            .transactions()
            .last()
            .filter(|t| t.sequence == sequence)
            .cloned()
            .expect("admitted transaction is on the ledger");
        self.audit.push(audit_entry(&tx, people));
        match admission.outcome {
            Ok(delta) => {
                tracing::debug!(sequence, operation = %tx.operation, "transaction applied");
                self.events.push(event_for(&tx, &delta));
                Ok(Committed { sequence, value: delta })
            }
            Err(ApplyError::Contract(error)) => {
                tracing::debug!(sequence, operation = %tx.operation, failure = error.code(), "transaction failure-marked");
                Err(NodeError::Rejected {
                    sequence: Some(sequence),
                    error,
                })
            }
            Err(e @ ApplyError::OutOfOrder { .. }) => Err(NodeError::ReplayDiverged {
                sequence,
                reason: e.to_string(),
            }),
        }
    }

    /// Registers a handle. When membership is required, handles missing
    /// from the list are refused before anything reaches the ledger.
    pub fn register(
        &mut self,
        handle: &str,
        encryption_public_key: EncryptionPublicKey,
        signing_public_key: SigningPublicKey,
    ) -> Result<Committed<DigitalIdentity>, NodeError> {
        if self.require_membership && !self.membership()?.contains(handle) {
            return Err(NodeError::Rejected {
                sequence: None,
                error: ContractError::NotCertified,
            });
        }
        let committed = self.submit(ContractCall::Register(RegisterArgs {
            handle: handle.to_string(),
            encryption_public_key,
            signing_public_key,
        }))?;
        match committed.value {
            StateDelta::Registered(id) => Ok(Committed {
                sequence: committed.sequence,
                value: id,
            }),
            other => unreachable!("register produced {other:?}"),
        }
    }

    /// Binds fresh keys to an existing handle.
    pub fn rotate_key(
        &mut self,
        handle: &str,
        encryption_public_key: EncryptionPublicKey,
        signing_public_key: SigningPublicKey,
    ) -> Result<Committed<DigitalIdentity>, NodeError> {
        let committed = self.submit(ContractCall::RotateKey(RegisterArgs {
            handle: handle.to_string(),
            encryption_public_key,
            signing_public_key,
        }))?;
        match committed.value {
            StateDelta::KeyRotated { current, .. } => Ok(Committed {
                sequence: committed.sequence,
                value: current,
            }),
            other => unreachable!("rotate_key produced {other:?}"),
        }
    }

    pub fn grant(
        &mut self,
        grantor: EncryptionPublicKey,
        grantee: EncryptionPublicKey,
        token_name: &str,
        token: Vec<u8>,
    ) -> Result<Committed<GrantRecord>, NodeError> {
        let committed = self.submit(ContractCall::Grant(GrantArgs {
            grantor,
            grantee,
            token_name: token_name.to_string(),
            token,
        }))?;
        match committed.value {
            StateDelta::Granted(record) => Ok(Committed {
                sequence: committed.sequence,
                value: record,
            }),
            other => unreachable!("grant produced {other:?}"),
        }
    }

    pub fn revoke(
        &mut self,
        grantor: EncryptionPublicKey,
        grantee: EncryptionPublicKey,
        token_name: &str,
    ) -> Result<u64, NodeError> {
        self.submit(ContractCall::Revoke(RevokeArgs {
            grantor,
            grantee,
            token_name: token_name.to_string(),
        }))
        .map(|c| c.sequence)
    }

    /// Records a view attempt. Fails with `RevokedAccess` once revoked.
    pub fn consume(&mut self, grantee: EncryptionPublicKey, token_name: &str) -> Result<u64, NodeError> {
        self.submit(ContractCall::Consume(ConsumeArgs {
            grantee,
            token_name: token_name.to_string(),
        }))
        .map(|c| c.sequence)
    }

    /// Seals any pending transactions.
    pub fn flush(&mut self) -> Result<(), NodeError> {
        if !self.ledger.pending().is_empty() {
            self.ledger.seal_block()?;
        }
        Ok(())
    }
}
