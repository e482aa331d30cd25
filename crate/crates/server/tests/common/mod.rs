#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fhirchain_core::canonical::b64;
use fhirchain_core::contracts::MembershipList;
use fhirchain_core::crypto::{
    create_access_token, generate_key_material, open_access_token, sign_challenge, AccessToken, KeyMaterial,
};
use fhirchain_core::ManualClock;
use fhirchain_server::wire::*;
use fhirchain_server::{AppState, Config, EndpointConfig, ErrorBody, Server};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::TempDir;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub const T0: u64 = 1_700_000_000;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

pub fn config_for(dir: &Path) -> Config {
    Config {
        port: 0,
        data_dir: dir.join("data"),
        membership_file: Some(dir.join("members.txt")),
        require_membership: true,
        allow_key_upload: true,
        fhir_endpoints: vec![
            EndpointConfig {
                name: "oncology-a".into(),
                base_url: None,
                fixture: Some(fixture("oncology-a.json")),
            },
            EndpointConfig {
                name: "oncology-b".into(),
                base_url: None,
                fixture: Some(fixture("oncology-b.json")),
            },
        ],
        ..Config::default()
    }
}

pub struct TestNode {
    pub base: String,
    pub state: AppState,
    pub clock: Arc<ManualClock>,
    pub config: Config,
    pub http: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
    // Dropped last.
    pub dir: Arc<TempDir>,
}

impl TestNode {
    pub async fn start() -> TestNode {
        let dir = Arc::new(tempfile::tempdir().unwrap());
        let config = config_for(dir.path());
        Self::start_with(dir, config, Arc::new(ManualClock::new(T0))).await
    }

    pub async fn start_with(dir: Arc<TempDir>, config: Config, clock: Arc<ManualClock>) -> TestNode {
        let server = Server::bind_with_clock(&config, clock.clone()).await.unwrap();
        let base = format!("http://{}", server.local_addr());
        let state = server.state();
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            server
                .run_until(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
        TestNode {
            base,
            state,
            clock,
            config,
            http: reqwest::Client::new(),
            stop: Some(tx),
            task: Some(task),
            dir,
        }
    }

    pub async fn stop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            task.await.unwrap();
        }
    }

    /// Stops the server and starts a fresh one over the same data directory.
    pub async fn restart(mut self) -> TestNode {
        self.stop().await;
        let dir = self.dir.clone();
        let config = self.config.clone();
        let clock = self.clock.clone();
        drop(self);
        Self::start_with(dir, config, clock).await
    }

    pub fn certify(&self, handles: &[&str]) {
        let path = self.config.membership_file.as_ref().unwrap();
        let mut list = MembershipList::load(path).unwrap();
        for h in handles {
            list.add(*h);
        }
        list.save(path).unwrap();
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, path: &str, session: Option<&str>) -> (StatusCode, serde_json::Value) {
        let mut req = self.http.get(self.url(path));
        if let Some(s) = session {
            req = req.bearer_auth(s);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(serde_json::Value::Null))
    }

    pub async fn post<B: Serialize>(&self, path: &str, session: Option<&str>, body: &B) -> (StatusCode, serde_json::Value) {
        let mut req = self.http.post(self.url(path)).json(body);
        if let Some(s) = session {
            req = req.bearer_auth(s);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(serde_json::Value::Null))
    }

    pub async fn admin_get(&self, path: &str) -> (StatusCode, serde_json::Value) {
        let resp = self
            .http
            .get(self.url(path))
            .header("x-admin-token", self.state.admin_token())
            .send()
            .await
            .unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap())
    }
}

impl Drop for TestNode {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

pub fn parse<T: DeserializeOwned>(v: serde_json::Value) -> T {
    serde_json::from_value(v).unwrap()
}

pub fn code(v: &serde_json::Value) -> String {
    parse::<ErrorBody>(v.clone()).code
}

pub struct User {
    pub handle: String,
    pub keys: KeyMaterial,
    pub session: Option<String>,
}

impl User {
    pub fn new(handle: &str) -> User {
        User {
            handle: handle.into(),
            keys: generate_key_material().unwrap(),
            session: None,
        }
    }

    pub fn session(&self) -> Option<&str> {
        self.session.as_deref()
    }

    pub async fn register(&self, node: &TestNode) -> (StatusCode, serde_json::Value) {
        node.post(
            "/register",
            None,
            &RegisterRequest {
                handle: self.handle.clone(),
                encryption_public_key: self.keys.encryption_public().to_b64(),
                signing_public_key: self.keys.signing_public().to_b64(),
            },
        )
        .await
    }

    pub async fn try_login(&self, node: &TestNode, keys: &KeyMaterial) -> (StatusCode, serde_json::Value) {
        let (status, body) = node.get(&format!("/challenge?handle={}", self.handle), None).await;
        if status != StatusCode::OK {
            return (status, body);
        }
        let c: ChallengeResponse = parse(body);
        let nonce = b64::decode_array(&c.nonce).unwrap();
        let sig = sign_challenge(&nonce, &keys.signing);
        node.post(
            "/login",
            None,
            &LoginRequest {
                handle: self.handle.clone(),
                nonce: c.nonce,
                signature: sig.to_b64(),
            },
        )
        .await
    }

    pub async fn login(&mut self, node: &TestNode) {
        let (status, body) = self.try_login(node, &self.keys).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        self.session = Some(parse::<LoginResponse>(body).session_token);
    }

    /// Registers (certifying first) and logs in.
    pub async fn join(handle: &str, node: &TestNode) -> User {
        node.certify(&[handle]);
        let mut u = User::new(handle);
        let (status, body) = u.register(node).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        u.login(node).await;
        u
    }

    /// Client-side share: the server builds the pointer, the token is made
    /// here.
    pub async fn share(&self, node: &TestNode, to: &str, path: &str, name: Option<&str>) -> (StatusCode, serde_json::Value) {
        self.share_from(node, to, path, name, None, None).await
    }

    pub async fn share_from(
        &self,
        node: &TestNode,
        to: &str,
        path: &str,
        name: Option<&str>,
        endpoint: Option<&str>,
        expires_at: Option<u64>,
    ) -> (StatusCode, serde_json::Value) {
        let (status, body) = node
            .post(
                "/share/prepare",
                self.session(),
                &PrepareShareRequest {
                    recipient_handle: to.into(),
                    fhir_path: path.into(),
                    endpoint: endpoint.map(str::to_string),
                    token_name: name.map(str::to_string),
                    expires_at,
                },
            )
            .await;
        if status != StatusCode::OK {
            return (status, body);
        }
        let prep: PrepareShareResponse = parse(body);
        let token = create_access_token(
            &prep.pointer,
            &prep.token_name,
            &self.keys.signing,
            &prep.recipient.encryption_public_key,
            prep.now,
        )
        .unwrap();
        node.post(
            "/share",
            self.session(),
            &ShareRequest {
                recipient_handle: to.into(),
                token_name: Some(prep.token_name),
                token: Some(b64::encode(&token.to_bytes())),
                ..ShareRequest::default()
            },
        )
        .await
    }

    pub async fn revoke(&self, node: &TestNode, to: &str, name: &str) -> (StatusCode, serde_json::Value) {
        node.post(
            "/revoke",
            self.session(),
            &RevokeRequest {
                recipient_handle: to.into(),
                token_name: name.into(),
            },
        )
        .await
    }

    /// Client-side view: decrypt locally, post the signed pointer.
    pub async fn view(&self, node: &TestNode, name: &str) -> (StatusCode, serde_json::Value) {
        let (status, body) = node.get(&format!("/token?name={name}"), self.session()).await;
        if status != StatusCode::OK {
            return (status, body);
        }
        let t: TokenResponse = parse(body);
        let token = AccessToken::from_bytes(&b64::decode(&t.token).unwrap()).unwrap();
        let opened = open_access_token(&token, &self.keys.encryption, &t.grantor_signing_key, node.clock_now()).unwrap();
        node.post(
            "/view",
            self.session(),
            &ViewRequest {
                token_name: name.into(),
                signed_pointer: Some(opened.signed),
                encryption_private_key: None,
            },
        )
        .await
    }

    /// Key-upload view with an arbitrary encryption key.
    pub async fn view_with_key(&self, node: &TestNode, name: &str, keys: &KeyMaterial) -> (StatusCode, serde_json::Value) {
        node.post(
            "/view",
            self.session(),
            &ViewRequest {
                token_name: name.into(),
                signed_pointer: None,
                encryption_private_key: Some(b64::encode(&keys.encryption.to_bytes())),
            },
        )
        .await
    }

    pub async fn events(&self, node: &TestNode, since: Option<u64>) -> Vec<fhirchain_core::Event> {
        let path = match since {
            Some(s) => format!("/events?since_sequence={s}"),
            None => "/events".to_string(),
        };
        let (status, body) = node.get(&path, self.session()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        parse::<EventsResponse>(body).events
    }

    pub async fn audit(&self, node: &TestNode, query: &str) -> Vec<fhirchain_core::AuditEntry> {
        let (status, body) = node.get(&format!("/audit{query}"), self.session()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        parse::<AuditResponse>(body).entries
    }
}

impl TestNode {
    pub fn clock_now(&self) -> u64 {
        use fhirchain_core::Clock;
        self.clock.now()
    }
}
