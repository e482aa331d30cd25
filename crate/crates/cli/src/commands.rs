use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fhirchain_core::canonical::b64;
use fhirchain_core::contracts::MembershipList;
use fhirchain_core::crypto::{create_access_token, generate_key_material, open_access_token, AccessToken, KeyMaterial};
use fhirchain_core::ledger::validate_ledger_file;
use fhirchain_core::node::LEDGER_FILE;
use fhirchain_core::NodeError;
use fhirchain_server::wire::*;
use fhirchain_server::{Config, Server, ServerError};
use serde::Serialize;
use serde_json::json;

use crate::cli::*;
use crate::client::{forget_session, is_unauthorized, load_session, save_session, Api, SavedSession};
use crate::error::CliError;
use crate::keyfile::{keyfile_path, KeyFile};

const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

pub struct Context<'a> {
    pub server: Option<String>,
    pub home: PathBuf,
    pub passphrase: Option<String>,
    pub config: Option<PathBuf>,
    pub out: &'a mut dyn Write,
}

impl Context<'_> {
    fn emit<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let line = serde_json::to_string(value).expect("output serializes");
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }

    fn config(&self) -> Result<Config, CliError> {
        let path = Config::locate(self.config.as_deref())
            .ok_or_else(|| CliError::Usage("no config: pass --config or set FHIRCHAIN_CONFIG".into()))?;
        Config::load(&path).map_err(|e| CliError::Config(e.to_string()))
    }

    fn server_url(&self) -> String {
        if let Some(s) = &self.server {
            return s.clone();
        }
        match self.config() {
            Ok(c) => {
                let host = if c.bind == "0.0.0.0" { "127.0.0.1" } else { c.bind.as_str() };
                format!("http://{host}:{}", c.port)
            }
            Err(_) => DEFAULT_SERVER.to_string(),
        }
    }

    fn api(&self) -> Result<Api, CliError> {
        Api::new(&self.server_url())
    }

    fn passphrase(&self) -> Result<&str, CliError> {
        self.passphrase
            .as_deref()
            .ok_or_else(|| CliError::Usage("passphrase required: pass --passphrase or set FHIRCHAIN_PASSPHRASE".into()))
    }

    fn keyfile(&self, handle: &str) -> Result<KeyFile, CliError> {
        let path = keyfile_path(&self.home, handle);
        if !path.exists() {
            return Err(CliError::NoKeyFile {
                handle: handle.to_string(),
                path,
            });
        }
        KeyFile::load(&path)
    }

    fn keys(&self, handle: &str) -> Result<KeyMaterial, CliError> {
        self.keyfile(handle)?.open(self.passphrase()?)
    }

    fn login(&self, api: &Api, handle: &str) -> Result<SavedSession, CliError> {
        let keys = self.keys(handle)?;
        let resp = api.login(handle, &keys)?;
        let saved = SavedSession {
            server: api.base().to_string(),
            handle: handle.to_string(),
            session_token: resp.session_token,
            expires_at: resp.expires_at,
        };
        save_session(&self.home, &saved)?;
        Ok(saved)
    }

    /// Runs `call` with a saved session, logging in again once if the server
    /// no longer accepts it.
    fn authed<T>(&self, api: &Api, handle: &str, call: impl Fn(&str) -> Result<T, CliError>) -> Result<T, CliError> {
        if let Some(saved) = load_session(&self.home, handle, api.base()) {
            match call(&saved.session_token) {
                Err(e) if is_unauthorized(&e) => forget_session(&self.home, handle),
                other => return other,
            }
        }
        let saved = self.login(api, handle)?;
        call(&saved.session_token)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn public_summary(file: &KeyFile, path: &Path) -> serde_json::Value {
    json!({
        "handle": file.handle,
        "encryption_public_key": file.encryption_public_key,
        "signing_public_key": file.signing_public_key,
        "path": path,
    })
}

pub fn execute(cli: Cli, ctx: &mut Context<'_>) -> Result<(), CliError> {
    match cli.command {
        Command::Node { cmd } => node(cmd, ctx),
        Command::Keys { cmd } => keys(cmd, ctx),
        Command::Register(who) => register(&who, ctx),
        Command::Login(who) => {
            let api = ctx.api()?;
            let saved = ctx.login(&api, &who.handle)?;
            ctx.emit(&json!({
                "handle": saved.handle,
                "server": saved.server,
                "expires_at": saved.expires_at,
            }))
        }
        Command::Share(args) => share(&args, ctx),
        Command::Revoke(args) => {
            let api = ctx.api()?;
            let body = RevokeRequest {
                recipient_handle: args.to.clone(),
                token_name: args.name.clone(),
            };
            let resp: SequenceResponse = ctx.authed(&api, &args.who.handle, |s| api.post("/revoke", &body, Some(s)))?;
            ctx.emit(&json!({"revoked": args.name, "recipient": args.to, "sequence": resp.sequence}))
        }
        Command::View(args) => view(&args, ctx),
        Command::Shares(args) => {
            let api = ctx.api()?;
            let path = if args.received { "/shared-with-me" } else { "/my-shares" };
            let grants: Vec<GrantSummary> = ctx.authed(&api, &args.who.handle, |s| api.get(path, &[], Some(s)))?;
            for g in &grants {
                ctx.emit(g)?;
            }
            Ok(())
        }
        Command::Events(args) => {
            let api = ctx.api()?;
            let mut query = Vec::new();
            if let Some(s) = args.since {
                query.push(("since_sequence", s.to_string()));
            }
            if let Some(w) = args.wait_ms {
                query.push(("wait_ms", w.to_string()));
            }
            let resp: EventsResponse = ctx.authed(&api, &args.who.handle, |s| api.get("/events", &query, Some(s)))?;
            for e in &resp.events {
                ctx.emit(e)?;
            }
            Ok(())
        }
        Command::Audit(args) => audit(&args, ctx),
        Command::Admin { cmd } => admin(cmd, ctx),
    }
}

fn node(cmd: NodeCmd, ctx: &mut Context<'_>) -> Result<(), CliError> {
    match cmd {
        NodeCmd::Serve => serve(ctx),
        NodeCmd::Verify { ledger } => {
            let path = match ledger {
                Some(p) => p,
                None => ctx.config()?.data_dir.join(LEDGER_FILE),
            };
            let report = validate_ledger_file(&path);
            ctx.emit(&json!({"ledger": path, "report": report}))?;
            match report.violation {
                None => Ok(()),
                Some(v) => Err(CliError::Ledger(format!("block {}: {}", v.height, v.reason))),
            }
        }
    }
}

fn startup_error(e: ServerError) -> CliError {
    match e {
        ServerError::Config(msg) => CliError::Config(msg),
        ServerError::Node(NodeError::Ledger(e)) => CliError::Ledger(e.to_string()),
        ServerError::Node(e @ NodeError::ReplayDiverged { .. }) => CliError::Ledger(e.to_string()),
        other => CliError::System(other.to_string()),
    }
}

fn serve(ctx: &mut Context<'_>) -> Result<(), CliError> {
    let config = ctx.config()?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = Server::bind(&config).await.map_err(startup_error)?;
        ctx.emit(&json!({
            "listening": format!("http://{}", server.local_addr()),
            "data_dir": config.data_dir,
        }))?;
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(startup_error)
    })
}

fn keys(cmd: KeysCmd, ctx: &mut Context<'_>) -> Result<(), CliError> {
    match cmd {
        KeysCmd::New(who) => {
            let path = keyfile_path(&ctx.home, &who.handle);
            if path.exists() {
                return Err(CliError::ExistsAlready(path));
            }
            let file = KeyFile::seal(&who.handle, &generate_key_material()?, ctx.passphrase()?)?;
            file.save_new(&path)?;
            ctx.emit(&public_summary(&file, &path))
        }
        KeysCmd::Show(who) => {
            let file = ctx.keyfile(&who.handle)?;
            file.open(ctx.passphrase()?)?;
            let path = keyfile_path(&ctx.home, &who.handle);
            ctx.emit(&public_summary(&file, &path))
        }
    }
}

fn register(who: &Who, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let file = ctx.keyfile(&who.handle)?;
    let resp: RegisterResponse = ctx.api()?.post(
        "/register",
        &RegisterRequest {
            handle: who.handle.clone(),
            encryption_public_key: file.encryption_public_key.to_b64(),
            signing_public_key: file.signing_public_key.to_b64(),
        },
        None,
    )?;
    ctx.emit(&resp)
}

fn share(args: &ShareArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let api = ctx.api()?;
    let keys = ctx.keys(&args.who.handle)?;
    let handle = &args.who.handle;
    let resp: ShareResponse = if args.upload_key {
        let body = ShareRequest {
            recipient_handle: args.to.clone(),
            token_name: args.name.clone(),
            fhir_path: Some(args.path.clone()),
            endpoint: args.endpoint.clone(),
            expires_at: args.expires_at,
            signing_private_key: Some(b64::encode(&keys.signing.to_bytes())),
            token: None,
        };
        ctx.authed(&api, handle, |s| api.post("/share", &body, Some(s)))?
    } else {
        let prepare = PrepareShareRequest {
            recipient_handle: args.to.clone(),
            fhir_path: args.path.clone(),
            endpoint: args.endpoint.clone(),
            token_name: args.name.clone(),
            expires_at: args.expires_at,
        };
        let prep: PrepareShareResponse = ctx.authed(&api, handle, |s| api.post("/share/prepare", &prepare, Some(s)))?;
        if prep.pointer.created_by != keys.encryption_public() || prep.recipient.directory_handle != args.to {
            return Err(CliError::System("server prepared a pointer for a different sender or recipient".into()));
        }
        let token = create_access_token(
            &prep.pointer,
            &prep.token_name,
            &keys.signing,
            &prep.recipient.encryption_public_key,
            prep.now,
        )?;
        let body = ShareRequest {
            recipient_handle: args.to.clone(),
            token_name: Some(prep.token_name.clone()),
            token: Some(b64::encode(&token.to_bytes())),
            ..ShareRequest::default()
        };
        ctx.authed(&api, handle, |s| api.post("/share", &body, Some(s)))?
    };
    ctx.emit(&json!({
        "token_name": resp.token_name,
        "recipient": args.to,
        "path": args.path,
        "sequence": resp.sequence,
    }))
}

fn view(args: &ViewArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let api = ctx.api()?;
    let keys = ctx.keys(&args.who.handle)?;
    let handle = &args.who.handle;
    let body = if args.upload_key {
        ViewRequest {
            token_name: args.name.clone(),
            signed_pointer: None,
            encryption_private_key: Some(b64::encode(&keys.encryption.to_bytes())),
        }
    } else {
        let query = [("name", args.name.clone())];
        let t: TokenResponse = ctx.authed(&api, handle, |s| api.get("/token", &query, Some(s)))?;
        let bytes = b64::decode(&t.token).ok_or_else(|| CliError::System("server sent a malformed token".into()))?;
        let token = AccessToken::from_bytes(&bytes)?;
        let opened = open_access_token(&token, &keys.encryption, &t.grantor_signing_key, unix_now())?;
        ViewRequest {
            token_name: args.name.clone(),
            signed_pointer: Some(opened.signed),
            encryption_private_key: None,
        }
    };
    let resp: ViewResponse = ctx.authed(&api, handle, |s| api.post("/view", &body, Some(s)))?;
    ctx.emit(&resp)
}

fn audit(args: &AuditArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let api = ctx.api()?;
    let mut query = Vec::new();
    if let Some(c) = &args.contract {
        query.push(("contract", c.clone()));
    }
    if let Some(o) = &args.operation {
        query.push(("operation", o.clone()));
    }
    if let Some(s) = args.since {
        query.push(("since_sequence", s.to_string()));
    }
    let resp: AuditResponse = if args.admin {
        let token = admin_token(&ctx.config()?)?;
        api.admin_get("/admin/audit", &query, &token)?
    } else {
        let handle = args.handle.as_deref().expect("clap requires a handle without --admin");
        ctx.authed(&api, handle, |s| api.get("/audit", &query, Some(s)))?
    };
    for entry in &resp.entries {
        ctx.emit(entry)?;
    }
    Ok(())
}

fn admin_token(config: &Config) -> Result<String, CliError> {
    let path = config.admin_token_path();
    std::fs::read_to_string(&path)
        .map(|t| t.trim().to_string())
        .map_err(|e| CliError::Usage(format!("cannot read admin token {}: {e}", path.display())))
}

fn admin(cmd: AdminCmd, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let config = ctx.config()?;
    match cmd {
        AdminCmd::Membership { cmd } => {
            let path = config
                .membership_file
                .clone()
                .ok_or_else(|| CliError::Usage("config has no membership_file".into()))?;
            let mut list = MembershipList::load(&path)?;
            let (handle, changed) = match cmd {
                MembershipCmd::List => {
                    let handles: Vec<String> = list.iter().map(str::to_string).collect();
                    for h in handles {
                        ctx.emit(&json!({"handle": h}))?;
                    }
                    return Ok(());
                }
                MembershipCmd::Add { handle } => {
                    let changed = list.add(handle.clone());
                    (handle, changed)
                }
                MembershipCmd::Remove { handle } => {
                    let changed = list.remove(&handle);
                    (handle, changed)
                }
            };
            if changed {
                list.save(&path)?;
            }
            let member = list.contains(&handle);
            ctx.emit(&json!({"handle": handle, "member": member, "changed": changed}))
        }
        AdminCmd::RotateKey { handle } => rotate_key(&config, &handle, ctx),
    }
}

/// Writes the new key file beside the old one first, so a failed request
/// leaves the existing keys in place.
fn rotate_key(config: &Config, handle: &str, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let token = admin_token(config)?;
    let api = ctx.api()?;
    let path = keyfile_path(&ctx.home, handle);
    let staged = path.with_extension("json.new");
    let _ = std::fs::remove_file(&staged);
    let keys = generate_key_material()?;
    let file = KeyFile::seal(handle, &keys, ctx.passphrase()?)?;
    file.save_new(&staged)?;

    let result: Result<RotateKeyResponse, CliError> = api.admin_post(
        "/admin/rotate-key",
        &RotateKeyRequest {
            handle: handle.to_string(),
            encryption_public_key: keys.encryption_public().to_b64(),
            signing_public_key: keys.signing_public().to_b64(),
        },
        &token,
    );
    let resp = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::remove_file(&staged);
            return Err(e);
        }
    };
    if path.exists() {
        std::fs::rename(&path, path.with_extension(format!("json.replaced-{}", resp.sequence)))?;
    }
    std::fs::rename(&staged, &path)?;
    forget_session(&ctx.home, handle);
    ctx.emit(&json!({
        "handle": handle,
        "sequence": resp.sequence,
        "identity": resp.identity,
        "keyfile": path,
    }))
}
