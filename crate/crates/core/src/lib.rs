//! Core of a permissioned clinical data-sharing node.
//!
//! Providers register an identity, share FHIR resources as encrypted
//! reference pointers recorded on a hash-chained ledger, and revoke access at
//! will. Only pointers and digests are stored on the ledger; resources stay
//! at their FHIR endpoints.

pub mod canonical;
pub mod clock;
pub mod contracts;
pub mod crypto;
pub mod fhir;
pub mod ledger;
pub mod node;

pub use clock::{Clock, ManualClock, SystemClock};
pub use node::{AuditEntry, Committed, Event, EventKind, Node, NodeError, NodeOptions};
