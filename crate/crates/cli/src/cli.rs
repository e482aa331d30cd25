use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fhirchain", version, about = "Share FHIR records through a permissioned ledger node")]
pub struct Cli {
    /// Node API base URL. Defaults to the configured bind address, then
    /// http://127.0.0.1:8080.
    #[arg(long, env = "FHIRCHAIN_SERVER", global = true)]
    pub server: Option<String>,
    /// Directory holding key files and saved sessions.
    #[arg(long, env = "FHIRCHAIN_HOME", global = true)]
    pub home: Option<PathBuf>,
    /// Unlocks key files.
    #[arg(long, env = "FHIRCHAIN_PASSPHRASE", global = true, hide_env_values = true)]
    pub passphrase: Option<String>,
    /// Node configuration (TOML).
    #[arg(long, env = "FHIRCHAIN_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run or check a node.
    Node {
        #[command(subcommand)]
        cmd: NodeCmd,
    },
    /// Manage local key files.
    Keys {
        #[command(subcommand)]
        cmd: KeysCmd,
    },
    /// Register the key file's public keys under its handle.
    Register(Who),
    /// Sign in and save a session.
    Login(Who),
    /// Grant a recipient access to a FHIR resource.
    Share(ShareArgs),
    /// Withdraw a grant.
    Revoke(RevokeArgs),
    /// Fetch a resource shared with you.
    View(ViewArgs),
    /// List grants you made, or with --received, grants made to you.
    Shares(SharesArgs),
    /// Sharing events involving you.
    Events(EventsArgs),
    /// Ledger entries involving you, or every entry with --admin.
    Audit(AuditArgs),
    /// Operator commands; trust comes from access to the node's files.
    Admin {
        #[command(subcommand)]
        cmd: AdminCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum NodeCmd {
    /// Serve the HTTP API until interrupted.
    Serve,
    /// Validate a ledger file without starting the node.
    Verify {
        /// Ledger file; defaults to the configured data directory's.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum KeysCmd {
    /// Generate keys and write a new passphrase-protected key file.
    New(Who),
    /// Unlock a key file and print its public keys.
    Show(Who),
}

#[derive(Debug, Clone, Args)]
pub struct Who {
    /// Directory handle (email or phone number).
    #[arg(long, env = "FHIRCHAIN_HANDLE")]
    pub handle: String,
}

#[derive(Debug, Args)]
pub struct ShareArgs {
    #[command(flatten)]
    pub who: Who,
    /// Recipient handle.
    #[arg(long)]
    pub to: String,
    /// FHIR path, e.g. Patient/123 or Observation?patient=123.
    #[arg(long)]
    pub path: String,
    /// Configured FHIR endpoint name.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Token name; derived from the pointer when omitted.
    #[arg(long)]
    pub name: Option<String>,
    /// Unix time after which the pointer stops resolving.
    #[arg(long)]
    pub expires_at: Option<u64>,
    /// Let the server sign with an uploaded private key.
    #[arg(long)]
    pub upload_key: bool,
}

#[derive(Debug, Args)]
pub struct RevokeArgs {
    #[command(flatten)]
    pub who: Who,
    #[arg(long)]
    pub to: String,
    #[arg(long)]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    #[command(flatten)]
    pub who: Who,
    #[arg(long)]
    pub name: String,
    /// Let the server decrypt with an uploaded private key.
    #[arg(long)]
    pub upload_key: bool,
}

#[derive(Debug, Args)]
pub struct SharesArgs {
    #[command(flatten)]
    pub who: Who,
    #[arg(long)]
    pub received: bool,
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    #[command(flatten)]
    pub who: Who,
    /// Only events after this sequence number.
    #[arg(long)]
    pub since: Option<u64>,
    /// Wait up to this many milliseconds for a new event.
    #[arg(long)]
    pub wait_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, env = "FHIRCHAIN_HANDLE", required_unless_present = "admin")]
    pub handle: Option<String>,
    /// Full log, authenticated with the node's admin token.
    #[arg(long)]
    pub admin: bool,
    /// registry or access.
    #[arg(long)]
    pub contract: Option<String>,
    #[arg(long)]
    pub operation: Option<String>,
    /// Entries at or after this sequence number.
    #[arg(long)]
    pub since: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum AdminCmd {
    /// Edit the certified-member list.
    Membership {
        #[command(subcommand)]
        cmd: MembershipCmd,
    },
    /// Issue fresh keys for a handle and bind them on the ledger.
    RotateKey {
        handle: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum MembershipCmd {
    Add { handle: String },
    Remove { handle: String },
    List,
}
