mod common;

use std::time::Duration;

use common::*;
use fhirchain_core::canonical::to_canonical_vec;
use fhirchain_core::crypto::generate_key_material;
use fhirchain_core::fhir::{FhirResource, Integrity};
use fhirchain_core::EventKind;
use fhirchain_server::wire::*;
use reqwest::StatusCode;
use serde_json::json;

const ALICE: &str = "alice@oncology-a.test";
const BOB: &str = "bob@oncology-b.test";
const CAROL: &str = "carol@oncology-b.test";

async fn pair(node: &TestNode) -> (User, User) {
    (User::join(ALICE, node).await, User::join(BOB, node).await)
}

#[tokio::test]
async fn register_admits_only_certified_unique_identities() {
    let node = TestNode::start().await;
    node.certify(&[ALICE]);
    let alice = User::new(ALICE);
    let (status, body) = alice.register(&node).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let reg: RegisterResponse = parse(body);
    assert!(reg.registered);
    assert_eq!(reg.identity.encryption_public_key, alice.keys.encryption_public());

    let (status, body) = node.get(&format!("/identity?handle={ALICE}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["encryption_public_key"], json!(alice.keys.encryption_public().to_b64()));

    let (status, body) = alice.register(&node).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(code(&body), "DuplicateHandle");

    let before = node.state.node().ledger().transaction_count();
    let (status, body) = User::new("mallory@elsewhere.test").register(&node).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "NotCertified");
    assert_eq!(node.state.node().ledger().transaction_count(), before);

    node.certify(&["dave@oncology-a.test"]);
    let (status, body) = node
        .post(
            "/register",
            None,
            &json!({"handle": "dave@oncology-a.test", "encryption_public_key": "AAAA", "signing_public_key": "AAAA"}),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "MalformedKey");

    let (status, body) = node.get("/identity?handle=nobody@x.test", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownHandle");
}

#[tokio::test]
async fn login_requires_a_fresh_signed_nonce() {
    let node = TestNode::start().await;
    node.certify(&[ALICE]);
    let mut alice = User::new(ALICE);
    alice.register(&node).await;

    let (status, body) = alice.try_login(&node, &generate_key_material().unwrap()).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(code(&body), "BadSignature");

    alice.login(&node).await;
    let session = alice.session.clone().unwrap();
    let (status, _) = node.get("/my-shares", Some(&session)).await;
    assert_eq!(status, StatusCode::OK);

    // Replay of a consumed nonce.
    let (_, body) = node.get(&format!("/challenge?handle={ALICE}"), None).await;
    let c: ChallengeResponse = parse(body);
    let nonce = fhirchain_core::canonical::b64::decode_array(&c.nonce).unwrap();
    let login = LoginRequest {
        handle: ALICE.into(),
        nonce: c.nonce.clone(),
        signature: fhirchain_core::crypto::sign_challenge(&nonce, &alice.keys.signing).to_b64(),
    };
    assert_eq!(node.post("/login", None, &login).await.0, StatusCode::OK);
    let (status, body) = node.post("/login", None, &login).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(code(&body), "ExpiredChallenge");

    // Expired challenge.
    let (_, body) = node.get(&format!("/challenge?handle={ALICE}"), None).await;
    let c: ChallengeResponse = parse(body);
    let nonce = fhirchain_core::canonical::b64::decode_array(&c.nonce).unwrap();
    node.clock.advance(c.expires_at - c.issued_at);
    let (status, body) = node
        .post(
            "/login",
            None,
            &LoginRequest {
                handle: ALICE.into(),
                nonce: c.nonce,
                signature: fhirchain_core::crypto::sign_challenge(&nonce, &alice.keys.signing).to_b64(),
            },
        )
        .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(code(&body), "ExpiredChallenge");

    let (status, body) = node.get("/challenge?handle=nobody@x.test", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownHandle");

    let (status, _) = node.get("/my-shares", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = node.get("/my-shares", Some("bogus")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn share_lists_and_view_round_trip() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;

    let (status, body) = alice.share(&node, BOB, "Patient/pt-1", Some("onc-history")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(parse::<ShareResponse>(body).token_name, "onc-history");

    let mine: Vec<GrantSummary> = parse(node.get("/my-shares", alice.session()).await.1);
    assert_eq!(mine.len(), 1);
    assert_eq!(mine[0].counterparty, bob.keys.encryption_public());
    assert_eq!(mine[0].counterparty_handle.as_deref(), Some(BOB));
    assert!(mine[0].authorized);
    let theirs: Vec<GrantSummary> = parse(node.get("/shared-with-me", bob.session()).await.1);
    assert_eq!(theirs.len(), 1);
    assert_eq!(theirs[0].counterparty, alice.keys.encryption_public());
    assert!(parse::<Vec<GrantSummary>>(node.get("/shared-with-me", alice.session()).await.1).is_empty());

    let (status, body) = bob.view(&node, "onc-history").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let view: ViewResponse = parse(body);
    assert_eq!(view.integrity, Integrity::Verified);
    assert_eq!(view.sender_handle.as_deref(), Some(ALICE));
    let source = node.state.fhir_store("oncology-a").unwrap().read("Patient", "pt-1").unwrap();
    assert_eq!(to_canonical_vec(&view.resource).unwrap(), source.canonical_bytes());

    // The response never echoes the pointer or key material.
    let raw = serde_json::to_string(&view).unwrap();
    assert!(!raw.contains("data_hash"));
    assert!(!raw.contains("base_url"));

    // Key-upload fallback with the right key also works.
    let (status, body) = bob.view_with_key(&node, "onc-history", &bob.keys).await;
    assert_eq!(status, StatusCode::OK, "{body}");
}

#[tokio::test]
async fn share_rejects_bad_requests() {
    let node = TestNode::start().await;
    let (alice, _bob) = pair(&node).await;

    let (status, body) = alice.share(&node, "nobody@x.test", "Patient/pt-1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownRecipient");

    let (status, body) = alice.share(&node, BOB, "Pateint/pt-1", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "InvalidPath");

    let (status, body) = alice.share(&node, BOB, "Patient/does-not-exist", None).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(code(&body), "FetchFailed");

    let (status, body) = alice
        .share_from(&node, BOB, "Patient/pt-1", None, Some("no-such-endpoint"), None)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");

    let (status, body) = alice
        .share_from(&node, BOB, "Patient/pt-1", None, None, Some(T0 - 1))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "InvalidExpiry");

    // A token whose header names someone else.
    let (_, prep) = node
        .post(
            "/share/prepare",
            alice.session(),
            &json!({"recipient_handle": BOB, "fhir_path": "Patient/pt-1"}),
        )
        .await;
    let prep: PrepareShareResponse = parse(prep);
    let other = generate_key_material().unwrap();
    let token = fhirchain_core::crypto::create_access_token(
        &prep.pointer,
        &prep.token_name,
        &alice.keys.signing,
        &other.encryption_public(),
        prep.now,
    )
    .unwrap();
    let (status, body) = node
        .post(
            "/share",
            alice.session(),
            &ShareRequest {
                recipient_handle: BOB.into(),
                token_name: Some(prep.token_name),
                token: Some(fhirchain_core::canonical::b64::encode(&token.to_bytes())),
                ..ShareRequest::default()
            },
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "MismatchedToken");
}

#[tokio::test]
async fn default_token_names_are_derived_from_the_pointer() {
    let node = TestNode::start().await;
    let (alice, _bob) = pair(&node).await;
    let (status, body) = alice.share(&node, BOB, "Condition/cond-1", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let name = parse::<ShareResponse>(body).token_name;
    assert!(name.starts_with("condition-"), "{name}");
    assert_eq!(name.len(), "condition-".len() + 8);
}

#[tokio::test]
async fn revocation_rules() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let carol = User::join(CAROL, &node).await;
    alice.share(&node, BOB, "Patient/pt-1", Some("t1")).await;

    let (status, body) = carol.revoke(&node, BOB, "t1").await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "NotGrantor");

    let (status, _) = alice.revoke(&node, BOB, "t1").await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = alice.revoke(&node, BOB, "t1").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "NoSuchGrant");
    let (status, body) = alice.revoke(&node, BOB, "never-granted").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "NoSuchGrant");

    let theirs: Vec<GrantSummary> = parse(node.get("/shared-with-me", bob.session()).await.1);
    assert_eq!(theirs.len(), 1);
    assert!(!theirs[0].authorized);

    let (status, body) = node.get("/token?name=t1", bob.session()).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "RevokedAccess");
    let (status, body) = bob.view_with_key(&node, "t1", &bob.keys).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "RevokedAccess");

    // Re-granting under the same name restores access.
    let (status, body) = alice.share(&node, BOB, "Patient/pt-1", Some("t1")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(bob.view(&node, "t1").await.0, StatusCode::OK);
}

#[tokio::test]
async fn view_failures() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let carol = User::join(CAROL, &node).await;
    alice.share(&node, BOB, "Patient/pt-2", Some("t")).await;

    let (status, body) = bob.view_with_key(&node, "t", &generate_key_material().unwrap()).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(code(&body), "DecryptionFailed");

    let (status, body) = carol.view(&node, "t").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "NoSuchGrant");

    let (status, _) = node.post("/view", None, &json!({"token_name": "t"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    // Source changed after the share.
    let store = node.state.fhir_store("oncology-a").unwrap();
    let mut changed = store.read("Patient", "pt-2").unwrap().body.clone();
    changed["birthDate"] = json!("1955-10-01");
    store.upsert(changed).unwrap();
    let (status, body) = bob.view(&node, "t").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(parse::<ViewResponse>(body).integrity, Integrity::HashMismatch);

    // Source deleted.
    store.remove("Patient", "pt-2");
    let (status, body) = bob.view(&node, "t").await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(code(&body), "FetchFailed");
}

#[tokio::test]
async fn expired_pointer_is_gone() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let (status, body) = alice
        .share_from(&node, BOB, "Patient/pt-1", Some("short"), None, Some(T0 + 60))
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(bob.view_with_key(&node, "short", &bob.keys).await.0, StatusCode::OK);
    node.clock.advance(61);
    let (status, body) = bob.view_with_key(&node, "short", &bob.keys).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(code(&body), "Expired");
}

#[tokio::test]
async fn search_pointers_hash_the_bundle() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let (status, body) = alice.share(&node, BOB, "Condition?patient=Patient/pt-1", Some("conds")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, body) = bob.view(&node, "conds").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let view: ViewResponse = parse(body);
    assert_eq!(view.integrity, Integrity::Verified);
    assert_eq!(view.resource["resourceType"], "Bundle");
    let resource = FhirResource::from_body(view.resource).unwrap();
    assert_eq!(resource.resource_type, "Bundle");
}

#[tokio::test]
async fn key_upload_can_be_disabled() {
    let dir = std::sync::Arc::new(tempfile::tempdir().unwrap());
    let mut config = config_for(dir.path());
    config.allow_key_upload = false;
    let node = TestNode::start_with(dir, config, std::sync::Arc::new(fhirchain_core::ManualClock::new(T0))).await;
    let (alice, bob) = pair(&node).await;

    let (status, body) = node
        .post(
            "/share",
            alice.session(),
            &ShareRequest {
                recipient_handle: BOB.into(),
                fhir_path: Some("Patient/pt-1".into()),
                signing_private_key: Some(fhirchain_core::canonical::b64::encode(&alice.keys.signing.to_bytes())),
                ..ShareRequest::default()
            },
        )
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "KeyUploadDisabled");

    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;
    let (status, body) = bob.view_with_key(&node, "t", &bob.keys).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "KeyUploadDisabled");
    assert_eq!(bob.view(&node, "t").await.0, StatusCode::OK);
}

#[tokio::test]
async fn key_upload_share_checks_the_key() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let share = |key: &fhirchain_core::crypto::SigningSecretKey| ShareRequest {
        recipient_handle: BOB.into(),
        token_name: Some("uploaded".into()),
        fhir_path: Some("Patient/pt-1".into()),
        signing_private_key: Some(fhirchain_core::canonical::b64::encode(&key.to_bytes())),
        ..ShareRequest::default()
    };
    let (status, body) = node
        .post("/share", alice.session(), &share(&generate_key_material().unwrap().signing))
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(code(&body), "KeyMismatch");

    let (status, body) = node.post("/share", alice.session(), &share(&alice.keys.signing)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, body) = bob.view(&node, "uploaded").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(parse::<ViewResponse>(body).integrity, Integrity::Verified);
}

#[tokio::test]
async fn events_are_scoped_and_ordered() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let carol = User::join(CAROL, &node).await;

    let baseline = bob.events(&node, None).await;
    let cursor = baseline.last().map(|e| e.sequence);

    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;
    assert_eq!(bob.view(&node, "t").await.0, StatusCode::OK);
    alice.revoke(&node, BOB, "t").await;

    let feed = bob.events(&node, cursor).await;
    let kinds: Vec<EventKind> = feed.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![EventKind::Granted, EventKind::TokenConsumed, EventKind::Revoked]);
    assert!(feed.windows(2).all(|w| w[0].sequence < w[1].sequence));
    assert_eq!(feed[0].token_name.as_deref(), Some("t"));

    let last = feed.last().unwrap().sequence;
    assert!(bob.events(&node, Some(last)).await.is_empty());

    let carols = carol.events(&node, None).await;
    assert!(carols.iter().all(|e| e.kind == EventKind::Registered));
}

#[tokio::test]
async fn events_long_poll_wakes_on_grant() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let cursor = bob.events(&node, None).await.last().map(|e| e.sequence).unwrap();

    let url = node.url(&format!("/events?since_sequence={cursor}&wait_ms=10000"));
    let req = node.http.get(url).bearer_auth(bob.session().unwrap()).send();
    let poll = tokio::spawn(req);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let started = std::time::Instant::now();
    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;

    let resp = poll.await.unwrap().unwrap();
    assert!(started.elapsed() < Duration::from_secs(5));
    let events: EventsResponse = resp.json().await.unwrap();
    assert_eq!(events.events.len(), 1);
    assert_eq!(events.events[0].kind, EventKind::Granted);

    // Nothing new: returns empty after the wait.
    let last = events.events[0].sequence;
    let (status, body) = node
        .get(&format!("/events?since_sequence={last}&wait_ms=100"), bob.session())
        .await;
    assert_eq!(status, StatusCode::OK);
    assert!(parse::<EventsResponse>(body).events.is_empty());
}

#[tokio::test]
async fn audit_is_scoped_filterable_and_complete_for_admins() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    let carol = User::join(CAROL, &node).await;
    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;
    alice.share(&node, CAROL, "Patient/pt-2", Some("u")).await;
    bob.view(&node, "t").await;
    alice.revoke(&node, BOB, "t").await;
    bob.view_with_key(&node, "t", &bob.keys).await;

    let bobs = bob.audit(&node, "").await;
    assert!(bobs.iter().all(|e| e.participants.contains(&bob.keys.encryption_public())));
    assert!(bobs.iter().any(|e| e.outcome == "RevokedAccess"));
    let carols = carol.audit(&node, "").await;
    assert!(carols.iter().all(|e| e.args.to_string().find("\"t\"").is_none()));

    let grants = alice.audit(&node, "?contract=access&operation=grant").await;
    assert_eq!(grants.len(), 2);
    let since = grants[1].sequence;
    assert!(alice.audit(&node, &format!("?since_sequence={since}")).await.iter().all(|e| e.sequence >= since));

    let (status, _) = node.get("/admin/audit", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let resp = node
        .http
        .get(node.url("/admin/audit"))
        .header("x-admin-token", "wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::FORBIDDEN);

    let (status, body) = node.admin_get("/admin/audit").await;
    assert_eq!(status, StatusCode::OK);
    let all: AuditResponse = parse(body);
    assert_eq!(all.entries.len(), node.state.node().ledger().transaction_count());
}

#[tokio::test]
async fn admin_rotation_ends_old_sessions() {
    let node = TestNode::start().await;
    let (alice, mut bob) = pair(&node).await;
    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;

    let fresh = generate_key_material().unwrap();
    let req = RotateKeyRequest {
        handle: BOB.into(),
        encryption_public_key: fresh.encryption_public().to_b64(),
        signing_public_key: fresh.signing_public().to_b64(),
    };
    let (status, _) = node.post("/admin/rotate-key", None, &req).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let resp = node
        .http
        .post(node.url("/admin/rotate-key"))
        .header("x-admin-token", node.state.admin_token())
        .json(&req)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let rotated: RotateKeyResponse = resp.json().await.unwrap();
    assert_eq!(rotated.identity.encryption_public_key, fresh.encryption_public());

    assert_eq!(node.get("/shared-with-me", bob.session()).await.0, StatusCode::UNAUTHORIZED);
    let (status, body) = bob.try_login(&node, &bob.keys).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(code(&body), "BadSignature");

    bob.keys = fresh;
    bob.login(&node).await;
    // Grants were addressed to the old identity.
    assert!(parse::<Vec<GrantSummary>>(node.get("/shared-with-me", bob.session()).await.1).is_empty());
    let (status, body) = alice.share(&node, BOB, "Patient/pt-1", Some("t2")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(bob.view(&node, "t2").await.0, StatusCode::OK);
}

#[tokio::test]
async fn state_survives_restart() {
    let node = TestNode::start().await;
    let (alice, bob) = pair(&node).await;
    alice.share(&node, BOB, "Patient/pt-1", Some("t")).await;
    bob.view(&node, "t").await;
    let (_, before) = node.admin_get("/admin/audit").await;
    let admin = node.state.admin_token().to_string();

    let node = node.restart().await;
    assert_eq!(node.state.admin_token(), admin);
    let (_, after) = node.admin_get("/admin/audit").await;
    assert_eq!(before, after);

    let mut bob = bob;
    bob.login(&node).await;
    assert_eq!(bob.view(&node, "t").await.0, StatusCode::OK);
    let (status, body) = node.get("/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn embedded_fhir_endpoint_serves_fixtures() {
    let node = TestNode::start().await;
    let (status, body) = node.get("/fhir/oncology-a/Patient/pt-1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["id"], "pt-1");
    let (status, body) = node.get("/fhir/oncology-a/Condition?patient=Patient/pt-1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["resourceType"], "Bundle");
    let (status, body) = node.get("/fhir/oncology-a/Patient/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["resourceType"], "OperationOutcome");
    let (status, _) = node.get("/fhir/nowhere/Patient/pt-1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
