use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use fhirchain_core::canonical::b64;
use fhirchain_core::crypto::{ChallengeBook, DEFAULT_NONCE_CAPACITY};
use fhirchain_core::fhir::{FhirConnector, MockStore};
use fhirchain_core::node::write_private;
use fhirchain_core::{Clock, Node, NodeOptions, SystemClock};
use parking_lot::{Mutex, MutexGuard};
use rand_core::{OsRng, RngCore};
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::config::Config;
use crate::session::SessionStore;
use crate::{routes, ServerError};

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub name: String,
    pub base_url: String,
    pub store: Option<Arc<MockStore>>,
}

pub(crate) struct Inner {
    pub node: Mutex<Node>,
    pub sessions: SessionStore,
    pub challenges: ChallengeBook,
    pub connector: FhirConnector,
    pub endpoints: Vec<Endpoint>,
    pub admin_token: String,
    pub allow_key_upload: bool,
    pub clock: Arc<dyn Clock>,
    /// Number of ledger transactions, bumped after every submission.
    pub tx_count: watch::Sender<usize>,
}

/// Shared handle to the node and its request-scoped services.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

fn load_or_create_admin_token(config: &Config) -> Result<String, ServerError> {
    let path = config.admin_token_path();
    match std::fs::read_to_string(&path) {
        Ok(token) => Ok(token.trim().to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let mut raw = [0u8; 32];
            OsRng
                .try_fill_bytes(&mut raw)
                .map_err(|e| ServerError::Startup(e.to_string()))?;
            let token = b64::encode(&raw);
            write_private(&path, token.as_bytes())?;
            Ok(token)
        }
        Err(e) => Err(e.into()),
    }
}

impl AppState {
    pub fn from_config(config: &Config, clock: Arc<dyn Clock>) -> Result<AppState, ServerError> {
        config.validate()?;
        let node = Node::open(NodeOptions {
            data_dir: config.data_dir.clone(),
            membership_file: config.membership_file.clone(),
            require_membership: config.require_membership,
            block_size: config.block_size,
            clock: clock.clone(),
        })?;
        let admin_token = load_or_create_admin_token(config)?;

        let mut connector = FhirConnector::new(config.path_validator()?, config.fhir_timeout_ms)
            .map_err(|e| ServerError::Startup(e.to_string()))?;
        let mut endpoints = Vec::new();
        for e in &config.fhir_endpoints {
            let base_url = e.resolved_base_url()?;
            let store = match &e.fixture {
                Some(path) => {
                    let store = Arc::new(
                        MockStore::load(path)
                            .map_err(|err| ServerError::Config(format!("{}: {err}", path.display())))?,
                    );
                    connector = connector
                        .with_embedded(&base_url, store.clone())
                        .map_err(|err| ServerError::Config(err.to_string()))?;
                    Some(store)
                }
                None => None,
            };
            endpoints.push(Endpoint {
                name: e.name.clone(),
                base_url,
                store,
            });
        }

        let tx_count = node.ledger().transaction_count();
        tracing::info!(
            height = node.ledger().tip().height,
            transactions = tx_count,
            "ledger loaded"
        );
        Ok(AppState {
            inner: Arc::new(Inner {
                node: Mutex::new(node),
                sessions: SessionStore::new(config.session_ttl_secs),
                challenges: ChallengeBook::new(config.challenge_ttl_secs, DEFAULT_NONCE_CAPACITY),
                connector,
                endpoints,
                admin_token,
                allow_key_upload: config.allow_key_upload,
                clock,
                tx_count: watch::channel(tx_count).0,
            }),
        })
    }

    pub fn now(&self) -> u64 {
        self.inner.clock.now()
    }

    /// Locks the node. Never hold the guard across an `.await`.
    pub fn node(&self) -> MutexGuard<'_, Node> {
        self.inner.node.lock()
    }

    pub fn admin_token(&self) -> &str {
        &self.inner.admin_token
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.inner.endpoints
    }

    pub fn endpoint(&self, name: Option<&str>) -> Option<&Endpoint> {
        match name {
            Some(n) => self.inner.endpoints.iter().find(|e| e.name == n),
            None => self.inner.endpoints.first(),
        }
    }

    /// Embedded store by endpoint name, for tests and fixtures.
    pub fn fhir_store(&self, name: &str) -> Option<Arc<MockStore>> {
        self.endpoint(Some(name)).and_then(|e| e.store.clone())
    }

    pub(crate) fn notify(&self, node: &Node) {
        self.inner.tx_count.send_replace(node.ledger().transaction_count());
    }

    pub fn router(&self) -> axum::Router {
        routes::router(self.clone())
    }
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: &Config) -> Result<Server, ServerError> {
        Self::bind_with_clock(config, Arc::new(SystemClock)).await
    }

    pub async fn bind_with_clock(config: &Config, clock: Arc<dyn Clock>) -> Result<Server, ServerError> {
        let state = AppState::from_config(config, clock)?;
        let listener = TcpListener::bind((config.bind.as_str(), config.port)).await?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    pub async fn run(self) -> Result<(), ServerError> {
        self.run_until(std::future::pending()).await
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServerError> {
        let router = self.state.router();
        tracing::info!(addr = %self.local_addr(), "serving");
        axum::serve(self.listener, router)
            .with_graceful_shutdown(shutdown)
            .await?;
        let mut node = self.state.node();
        node.flush()?;
        Ok(())
    }
}
