//! The registry and access contracts, executed by the ledger on admission.

mod call;
mod membership;
mod state;

pub use call::{
    CallDecodeError, ConsumeArgs, ContractCall, GrantArgs, RegisterArgs, RevokeArgs, OP_CONSUME,
    OP_GRANT, OP_REGISTER, OP_REVOKE, OP_ROTATE_KEY,
};
pub use membership::MembershipList;
pub use state::{
    check_handle, check_token_name, AccessContract, ApplyError, ContractError, ContractState,
    DigitalIdentity, GrantLists, GrantRecord, IdentityQuery, LedgerExecutor, Registry, StateDelta,
    MAX_HANDLE_BYTES, MAX_TOKEN_NAME_BYTES,
};
