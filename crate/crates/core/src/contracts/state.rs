use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::call::{CallDecodeError, ConsumeArgs, ContractCall, GrantArgs, RegisterArgs, RevokeArgs, OP_REGISTER};
use crate::canonical::b64;
use crate::crypto::{AccessToken, EncryptionPublicKey, SigningPublicKey};
use crate::ledger::{ContractKind, Transaction, TransactionExecutor};

pub const MAX_TOKEN_NAME_BYTES: usize = 128;
pub const MAX_HANDLE_BYTES: usize = 254;

static EMAIL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[^@\s]+@[^@\s]+\.[^@\s]+$").unwrap());
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\+?[0-9][0-9 \-]{6,19}$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("handle is already registered")]
    DuplicateHandle,
    #[error("encryption key is already registered to another handle")]
    DuplicateKey,
    #[error("handle is not on the membership list")]
    NotCertified,
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("handle must be an email address or phone number")]
    InvalidHandle,
    #[error("no identity registered for that handle or key")]
    NotFound,
    #[error("grantor is not a registered identity")]
    UnknownGrantor,
    #[error("grantee is not a registered identity")]
    UnknownGrantee,
    #[error("identity is not registered")]
    UnknownIdentity,
    #[error("access token is empty")]
    EmptyToken,
    #[error("token name must be 1..={MAX_TOKEN_NAME_BYTES} bytes without control characters")]
    InvalidTokenName,
    #[error("token does not match the grant: {0}")]
    MismatchedToken(String),
    #[error("token name is already used by another grantor for this grantee")]
    TokenNameTaken,
    #[error("no such grant")]
    NoSuchGrant,
    #[error("only the original grantor may revoke")]
    NotGrantor,
    #[error("access has been revoked")]
    RevokedAccess,
    #[error("unknown operation {0}")]
    UnknownOperation(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

impl ContractError {
    /// Stable code recorded as the on-ledger failure marker.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::DuplicateHandle => "DuplicateHandle",
            ContractError::DuplicateKey => "DuplicateKey",
            ContractError::NotCertified => "NotCertified",
            ContractError::MalformedKey(_) => "MalformedKey",
            ContractError::InvalidHandle => "InvalidHandle",
            ContractError::NotFound => "NotFound",
            ContractError::UnknownGrantor => "UnknownGrantor",
            ContractError::UnknownGrantee => "UnknownGrantee",
            ContractError::UnknownIdentity => "UnknownIdentity",
            ContractError::EmptyToken => "EmptyToken",
            ContractError::InvalidTokenName => "InvalidTokenName",
            ContractError::MismatchedToken(_) => "MismatchedToken",
            ContractError::TokenNameTaken => "TokenNameTaken",
            ContractError::NoSuchGrant => "NoSuchGrant",
            ContractError::NotGrantor => "NotGrantor",
            ContractError::RevokedAccess => "RevokedAccess",
            ContractError::UnknownOperation(_) => "UnknownOperation",
            ContractError::MalformedPayload(_) => "MalformedPayload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("transaction {sequence} out of order (expected {expected})")]
    OutOfOrder { sequence: u64, expected: u64 },
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// A provider's on-ledger identity. Only the directory handle is stored
/// alongside the keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitalIdentity {
    pub directory_handle: String,
    pub encryption_public_key: EncryptionPublicKey,
    pub signing_public_key: SigningPublicKey,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantRecord {
    pub grantee: EncryptionPublicKey,
    pub token_name: String,
    pub authorized: bool,
    #[serde(with = "b64")]
    pub token: Vec<u8>,
    pub grantor: EncryptionPublicKey,
    pub updated_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantLists {
    pub granted_to_me: Vec<GrantRecord>,
    pub granted_by_me: Vec<GrantRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentityQuery<'a> {
    Handle(&'a str),
    Key(&'a EncryptionPublicKey),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateDelta {
    Registered(DigitalIdentity),
    KeyRotated {
        previous: DigitalIdentity,
        current: DigitalIdentity,
    },
    Granted(GrantRecord),
    Revoked {
        grantee: EncryptionPublicKey,
        token_name: String,
    },
    Consumed {
        grantee: EncryptionPublicKey,
        grantor: EncryptionPublicKey,
        token_name: String,
    },
}

/// Registry contract state: handle → identity, with a reverse index by
/// encryption key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    identities: BTreeMap<String, DigitalIdentity>,
    by_key: BTreeMap<EncryptionPublicKey, String>,
}

impl Registry {
    pub fn lookup(&self, query: IdentityQuery<'_>) -> Result<&DigitalIdentity, ContractError> {
        let handle = match query {
            IdentityQuery::Handle(h) => h,
            IdentityQuery::Key(k) => self.by_key.get(k).ok_or(ContractError::NotFound)?,
        };
        self.identities.get(handle).ok_or(ContractError::NotFound)
    }

    pub fn by_handle(&self, handle: &str) -> Option<&DigitalIdentity> {
        self.identities.get(handle)
    }

    pub fn by_key(&self, key: &EncryptionPublicKey) -> Option<&DigitalIdentity> {
        self.lookup(IdentityQuery::Key(key)).ok()
    }

    pub fn is_registered(&self, key: &EncryptionPublicKey) -> bool {
        self.by_key.contains_key(key)
    }

    pub fn has_signing_key(&self, key: &SigningPublicKey) -> bool {
        self.identities.values().any(|i| &i.signing_public_key == key)
    }

    pub fn identities(&self) -> impl Iterator<Item = &DigitalIdentity> {
        self.identities.values()
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    fn register(&mut self, args: RegisterArgs, at: u64) -> Result<StateDelta, ContractError> {
        check_handle(&args.handle)?;
        if self.identities.contains_key(&args.handle) {
            return Err(ContractError::DuplicateHandle);
        }
        if self.by_key.contains_key(&args.encryption_public_key) {
            return Err(ContractError::DuplicateKey);
        }
        let identity = DigitalIdentity {
            directory_handle: args.handle.clone(),
            encryption_public_key: args.encryption_public_key,
            signing_public_key: args.signing_public_key,
            registered_at: at,
        };
        self.by_key.insert(identity.encryption_public_key, args.handle.clone());
        self.identities.insert(args.handle, identity.clone());
        Ok(StateDelta::Registered(identity))
    }

    fn rotate(&mut self, args: RegisterArgs, at: u64) -> Result<StateDelta, ContractError> {
        let previous = self
            .identities
            .get(&args.handle)
            .cloned()
            .ok_or(ContractError::NotFound)?;
        if let Some(owner) = self.by_key.get(&args.encryption_public_key) {
            if owner != &args.handle || previous.encryption_public_key == args.encryption_public_key {
                return Err(ContractError::DuplicateKey);
            }
        }
        let current = DigitalIdentity {
            directory_handle: args.handle.clone(),
            encryption_public_key: args.encryption_public_key,
            signing_public_key: args.signing_public_key,
            registered_at: at,
        };
        self.by_key.remove(&previous.encryption_public_key);
        self.by_key.insert(current.encryption_public_key, args.handle.clone());
        self.identities.insert(args.handle, current.clone());
        Ok(StateDelta::KeyRotated { previous, current })
    }
}

/// Access contract state: grantee → token name → grant record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessContract {
    grants: BTreeMap<EncryptionPublicKey, BTreeMap<String, GrantRecord>>,
}

impl AccessContract {
    pub fn get(&self, grantee: &EncryptionPublicKey, token_name: &str) -> Option<&GrantRecord> {
        self.grants.get(grantee)?.get(token_name)
    }

    pub fn records(&self) -> impl Iterator<Item = &GrantRecord> {
        self.grants.values().flat_map(|m| m.values())
    }

    fn grant(&mut self, registry: &Registry, args: GrantArgs, at: u64) -> Result<StateDelta, ContractError> {
        if !registry.is_registered(&args.grantor) {
            return Err(ContractError::UnknownGrantor);
        }
        if !registry.is_registered(&args.grantee) {
            return Err(ContractError::UnknownGrantee);
        }
        check_token_name(&args.token_name)?;
        if args.token.is_empty() {
            return Err(ContractError::EmptyToken);
        }
        let token = AccessToken::from_bytes(&args.token)
            .map_err(|e| ContractError::MismatchedToken(e.to_string()))?;
        let header = &token.header;
        if header.sender_hint != args.grantor {
            return Err(ContractError::MismatchedToken("sender is not the grantor".into()));
        }
        if header.recipient != args.grantee {
            return Err(ContractError::MismatchedToken("recipient is not the grantee".into()));
        }
        if header.token_name != args.token_name {
            return Err(ContractError::MismatchedToken("token name differs".into()));
        }
        if let Some(existing) = self.get(&args.grantee, &args.token_name) {
            if existing.grantor != args.grantor {
                return Err(ContractError::TokenNameTaken);
            }
        }
        let record = GrantRecord {
            grantee: args.grantee,
            token_name: args.token_name.clone(),
            authorized: true,
            token: args.token,
            grantor: args.grantor,
            updated_at: at,
        };
        self.grants
            .entry(args.grantee)
            .or_default()
            .insert(args.token_name, record.clone());
        Ok(StateDelta::Granted(record))
    }

    fn revoke(&mut self, args: RevokeArgs, at: u64) -> Result<StateDelta, ContractError> {
        let record = self
            .grants
            .get_mut(&args.grantee)
            .and_then(|m| m.get_mut(&args.token_name))
            .ok_or(ContractError::NoSuchGrant)?;
        if record.grantor != args.grantor {
            return Err(ContractError::NotGrantor);
        }
        if !record.authorized {
            return Err(ContractError::NoSuchGrant);
        }
        record.authorized = false;
        record.token.clear();
        record.updated_at = at;
        Ok(StateDelta::Revoked {
            grantee: args.grantee,
            token_name: args.token_name,
        })
    }

    fn consume(&self, args: ConsumeArgs) -> Result<StateDelta, ContractError> {
        let record = self
            .get(&args.grantee, &args.token_name)
            .ok_or(ContractError::NoSuchGrant)?;
        if !record.authorized {
            return Err(ContractError::RevokedAccess);
        }
        Ok(StateDelta::Consumed {
            grantee: args.grantee,
            grantor: record.grantor,
            token_name: args.token_name,
        })
    }
}

/// Materialized state of both contracts: the left fold of
/// [`ContractState::apply_transaction`] over the ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub registry: Registry,
    pub access: AccessContract,
    pub last_applied: Option<u64>,
}

impl ContractState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one admitted transaction. Contract failures leave state
    /// unchanged apart from the applied-sequence cursor.
    pub fn apply_transaction(&mut self, tx: &Transaction) -> Result<StateDelta, ApplyError> {
        let expected = self.last_applied.map_or(0, |s| s + 1);
        if tx.sequence != expected {
            return Err(ApplyError::OutOfOrder {
                sequence: tx.sequence,
                expected,
            });
        }
        self.last_applied = Some(tx.sequence);
        let call = ContractCall::from_transaction(tx).map_err(|e| match e {
            CallDecodeError::UnknownOperation { contract, operation } => {
                ContractError::UnknownOperation(format!("{contract}.{operation}"))
            }
            CallDecodeError::Malformed(m) => ContractError::MalformedPayload(m),
        })?;
        Ok(self.execute(call, tx.timestamp)?)
    }

    fn execute(&mut self, call: ContractCall, at: u64) -> Result<StateDelta, ContractError> {
        match call {
            ContractCall::Register(a) => self.registry.register(a, at),
            ContractCall::RotateKey(a) => self.registry.rotate(a, at),
            ContractCall::Grant(a) => self.access.grant(&self.registry, a, at),
            ContractCall::Revoke(a) => self.access.revoke(a, at),
            ContractCall::Consume(a) => self.access.consume(a),
        }
    }

    pub fn registry_lookup(&self, query: IdentityQuery<'_>) -> Result<&DigitalIdentity, ContractError> {
        self.registry.lookup(query)
    }

    pub fn access_get_token(&self, grantee: &EncryptionPublicKey, token_name: &str) -> Result<&GrantRecord, ContractError> {
        self.access.get(grantee, token_name).ok_or(ContractError::NoSuchGrant)
    }

    pub fn access_list_for(&self, identity: &EncryptionPublicKey) -> Result<GrantLists, ContractError> {
        if !self.registry.is_registered(identity) {
            return Err(ContractError::UnknownIdentity);
        }
        let mut lists = GrantLists::default();
        for record in self.access.records() {
            if &record.grantee == identity {
                lists.granted_to_me.push(record.clone());
            }
            if &record.grantor == identity {
                lists.granted_by_me.push(record.clone());
            }
        }
        Ok(lists)
    }
}

pub fn check_handle(handle: &str) -> Result<(), ContractError> {
    if handle.len() > MAX_HANDLE_BYTES || !(EMAIL_RE.is_match(handle) || PHONE_RE.is_match(handle)) {
        return Err(ContractError::InvalidHandle);
    }
    Ok(())
}

pub fn check_token_name(name: &str) -> Result<(), ContractError> {
    if name.is_empty() || name.len() > MAX_TOKEN_NAME_BYTES || name.chars().any(char::is_control) {
        return Err(ContractError::InvalidTokenName);
    }
    Ok(())
}

/// Binds [`ContractState`] to the ledger's admission hooks. `node_keys` are
/// signing keys allowed to submit on behalf of participants.
pub struct LedgerExecutor<'a> {
    pub state: &'a mut ContractState,
    pub node_keys: &'a [SigningPublicKey],
}

impl TransactionExecutor for LedgerExecutor<'_> {
    type Delta = StateDelta;
    type Error = ApplyError;

    fn check_payload(&self, tx: &Transaction) -> Result<(), String> {
        match ContractCall::from_transaction(tx) {
            Ok(_) | Err(CallDecodeError::UnknownOperation { .. }) => Ok(()),
            Err(CallDecodeError::Malformed(m)) => Err(m),
        }
    }

    fn is_authorized_sender(&self, tx: &Transaction) -> bool {
        self.node_keys.contains(&tx.sender)
            || self.state.registry.has_signing_key(&tx.sender)
            || (tx.contract == ContractKind::Registry && tx.operation == OP_REGISTER)
    }

    fn execute(&mut self, tx: &Transaction) -> Result<StateDelta, ApplyError> {
        self.state.apply_transaction(tx)
    }

    fn failure_marker(error: &ApplyError) -> String {
        match error {
            ApplyError::Contract(e) => e.code().to_string(),
            ApplyError::OutOfOrder { .. } => "OutOfOrder".to_string(),
        }
    }
}
