use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use scftwin_core::ids::{ActorId, ReceivableId};
use scftwin_core::ledger::{Payload, PayloadKind, Role, TokenOp};
use scftwin_core::platform::{Platform, PlatformSpec};
use scftwin_service::{app, open_platform, permits, Capability, ENDPOINTS};

fn id(s: &str) -> ActorId {
    ActorId::new(s)
}

fn members() -> Vec<(ActorId, Role)> {
    vec![
        (id("S01"), Role::StakeholderValidator),
        (id("S02"), Role::StakeholderValidator),
        (id("S03"), Role::StakeholderValidator),
        (id("I1"), Role::ExternalInvestor),
        (id("I2"), Role::ExternalInvestor),
        (id("O1"), Role::ExternalObserver),
    ]
}

fn tokens() -> BTreeMap<String, ActorId> {
    ["S01", "S02", "I1", "I2", "O1"].into_iter().map(|m| (format!("tok-{m}"), id(m))).collect()
}

fn mint(to: &str, amount: u64) -> Payload {
    Payload::TokenTransfer { token: TokenOp::Mint { to: id(to), amount } }
}

/// S01 holds two open receivables on S02 (10 000 each, due at tick 20); investors are funded.
fn seeded() -> Platform {
    let mut p = Platform::new(PlatformSpec::new("service-tests", members()));
    for (who, amount) in [("I1", 50_000), ("I2", 50_000), ("S02", 30_000)] {
        p.submit(&id(who), mint(who, amount), 1).unwrap();
    }
    for r in ["R1", "R2"] {
        let trade = Payload::TradeCreditCreated {
            receivable_id: ReceivableId::new(r),
            creditor: id("S01"),
            debtor: id("S02"),
            face_value: 10_000,
            due_tick: 20,
        };
        p.submit(&id("S01"), trade, 1).unwrap();
    }
    p.commit().unwrap();
    p
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn initiate(app: &Router) -> (StatusCode, Value) {
    let body = json!({ "deal_id": "D1", "pool": ["R1", "R2"], "spv": "I2", "abs_units": 10, "timestamp": 2 });
    call(app, "POST", "/deals", Some("tok-S01"), Some(body)).await
}

#[tokio::test]
async fn investor_purchase_updates_holders() {
    let app = app(seeded(), tokens()).unwrap();
    let (status, committed) = initiate(&app).await;
    assert_eq!(status, StatusCode::OK, "{committed}");
    assert_eq!(committed["status"], "committed");
    assert_eq!(committed["height"], 2);

    let (status, body) = call(&app, "POST", "/deals/D1/purchase", Some("tok-I1"), Some(json!({ "units": 4 }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["height"], 3);
    assert_eq!(body["tx_id"].as_str().unwrap().len(), 64);

    let (status, deal) = call(&app, "GET", "/deals/D1", Some("tok-O1"), None).await;
    assert_eq!(status, StatusCode::OK);
    let deal = &deal["deal"];
    assert_eq!(deal["units_sold"], 4);
    assert_eq!(deal["units_unsold"], 6);
    assert_eq!(deal["holders"], json!([{ "start": 0, "end": 4, "owner": "I1" }]));

    // 4 units at par (2 000 each) left the investor's account.
    let (_, st) = call(&app, "GET", "/stakeholders", Some("tok-I1"), None).await;
    let i1 = st["members"].as_array().unwrap().iter().find(|m| m["id"] == "I1").unwrap();
    assert_eq!(i1["balance"], 50_000 - 8_000);
    assert_eq!(st["height"], 3);
}

#[tokio::test]
async fn oversubscription_is_a_conflict() {
    let app = app(seeded(), tokens()).unwrap();
    assert_eq!(initiate(&app).await.0, StatusCode::OK);
    let (status, body) = call(&app, "POST", "/deals/D1/purchase", Some("tok-I1"), Some(json!({ "units": 11 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "Oversubscribed");
    let (_, deal) = call(&app, "GET", "/deals/D1", Some("tok-I1"), None).await;
    assert_eq!(deal["deal"]["units_sold"], 0);
    assert_eq!(deal["height"], 2);
}

#[tokio::test]
async fn observer_cannot_submit() {
    let app = app(seeded(), tokens()).unwrap();
    let body = json!({ "payload": { "kind": "token_transfer", "token": { "op": "mint", "to": "O1", "amount": 5 } } });
    let (status, err) = call(&app, "POST", "/transactions", Some("tok-O1"), Some(body)).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(err["error"], "PermissionDenied");
    let (status, _) = call(&app, "GET", "/ledger/blocks", Some("tok-O1"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn authentication_and_malformed_input() {
    let app = app(seeded(), tokens()).unwrap();
    assert_eq!(call(&app, "GET", "/deals", None, None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/deals", Some("nope"), None).await.0, StatusCode::UNAUTHORIZED);
    let bad = Some(json!({ "units": "four" }));
    assert_eq!(call(&app, "POST", "/deals/D1/purchase", Some("tok-I1"), bad).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        call(&app, "GET", "/ledger/blocks?from=abc", Some("tok-I1"), None).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(&app, "GET", "/graph/exposure?from=S01", Some("tok-I1"), None).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(call(&app, "GET", "/risk/NOBODY", Some("tok-I1"), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/deals/D9", Some("tok-I1"), None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reads_reflect_commits() {
    let app = app(seeded(), tokens()).unwrap();
    let (_, before) = call(&app, "GET", "/ledger/blocks?from=1", Some("tok-S01"), None).await;
    assert_eq!(before["blocks"].as_array().unwrap().len(), 1);

    let (status, _) = call(&app, "POST", "/receivables/R1/pay", Some("tok-S02"), Some(json!({ "timestamp": 5 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, after) = call(&app, "GET", "/ledger/blocks?from=2&to=2", Some("tok-S01"), None).await;
    let blocks = after["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0]["tick"], 5);
    assert_eq!(blocks[0]["txs"][0]["payload"]["kind"], "payment_made");

    let (_, exp) = call(&app, "GET", "/graph/exposure?from=S01&to=S02", Some("tok-S01"), None).await;
    assert_eq!(exp["exposure"], "10000");
    assert_eq!(exp["contagion_watch"], false);

    // Replaying the same payment is a contract conflict, not a silent success.
    let (status, body) =
        call(&app, "POST", "/receivables/R1/pay", Some("tok-S02"), Some(json!({ "timestamp": 5 }))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    for path in ["/indices/S01", "/risk/S01", "/recommendations/S01", "/alerts?active=true", "/alerts?stakeholder=S02"]
    {
        let (status, body) = call(&app, "GET", path, Some("tok-I2"), None).await;
        assert_eq!(status, StatusCode::OK, "{path}");
        assert_eq!(body["height"], 2, "{path}");
    }
}

#[tokio::test]
async fn discount_offer_round_trip() {
    let app = app(seeded(), tokens()).unwrap();
    let offer = json!({ "offer_id": "F1", "receivable_id": "R2", "discount_rate": "0.02", "timestamp": 3 });
    // The debtor offers early payment; only the creditor may answer, once.
    let (status, body) = call(&app, "POST", "/offers", Some("tok-S02"), Some(offer)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let accept = || Some(json!({ "accept": true }));
    let (status, body) = call(&app, "POST", "/offers/F1/respond", Some("tok-S02"), accept()).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("WrongParty")));
    let (status, body) = call(&app, "POST", "/offers/F1/respond", Some("tok-S01"), accept()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    // An identical request is the same signed transaction.
    let (status, body) = call(&app, "POST", "/offers/F1/respond", Some("tok-S01"), accept()).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("DuplicateTx")));
    let later = Some(json!({ "accept": true, "timestamp": 4 }));
    let (status, body) = call(&app, "POST", "/offers/F1/respond", Some("tok-S01"), later).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("InvalidState")));
}

/// A request exercising `capability`, for the endpoint at `path`.
fn sample(path: &str, kind: Option<PayloadKind>, who: &str) -> (String, Value) {
    let uri = path.replace(
        "{id}",
        if path.contains("deals") {
            "D1"
        } else if path.contains("receivables") {
            "R1"
        } else if path.contains("offers") {
            "F1"
        } else {
            "S01"
        },
    );
    let body = match (path, kind) {
        ("/transactions", Some(k)) => {
            let payload = match k {
                PayloadKind::TradeCreditCreated => {
                    json!({ "kind": "trade_credit_created", "receivable_id": "R9", "creditor": who, "debtor": "S02", "face_value": 100, "due_tick": 30 })
                }
                PayloadKind::PaymentMade => json!({ "kind": "payment_made", "receivable_id": "R1", "payer": who }),
                PayloadKind::SnapshotPublished => {
                    json!({ "kind": "snapshot_published", "record": { "snapshot": { "stakeholder_id": who, "period_tick": 2, "cash": 10 } } })
                }
                PayloadKind::ContractInvocation => {
                    json!({ "kind": "contract_invocation", "call": { "call": "settle_securitization", "deal_id": "D1" } })
                }
                PayloadKind::TokenTransfer => {
                    json!({ "kind": "token_transfer", "token": { "op": "mint", "to": who, "amount": 1 } })
                }
            };
            json!({ "payload": payload })
        }
        ("/deals", _) => json!({ "deal_id": "D2", "pool": ["R2"], "spv": "I2", "abs_units": 5 }),
        ("/deals/{id}/purchase", _) => json!({ "units": 1 }),
        ("/offers", _) => json!({ "offer_id": "F2", "receivable_id": "R2", "discount_rate": "1/50" }),
        ("/offers/{id}/respond", _) => json!({ "accept": false }),
        _ => json!({}),
    };
    (uri.replace("/graph/exposure", "/graph/exposure?from=S01&to=S02"), body)
}

#[tokio::test]
async fn capabilities_never_exceed_ledger_permissions() {
    let mut checked = 0;
    for (token, who) in tokens() {
        let role = members().into_iter().find(|(m, _)| *m == who).unwrap().1;
        for ep in ENDPOINTS {
            let kinds: Vec<Option<PayloadKind>> = match ep.capability {
                Capability::Read => vec![None],
                Capability::Submit(k) => vec![Some(k)],
                Capability::SubmitAny => PayloadKind::ALL.into_iter().map(Some).collect(),
            };
            for kind in kinds {
                let app = app(seeded(), tokens()).unwrap();
                assert_eq!(initiate(&app).await.0, StatusCode::OK);
                let (uri, body) = sample(ep.path, kind, who.as_str());
                let body = (ep.method == "POST").then_some(body);
                let (status, resp) = call(&app, ep.method, &uri, Some(&token), body).await;
                let allowed = permits(role, kind);
                let label = format!("{} {} {:?} as {role:?}: {status} {resp}", ep.method, uri, kind);
                if allowed {
                    assert_ne!(status, StatusCode::FORBIDDEN, "{label}");
                    assert_ne!(status, StatusCode::UNPROCESSABLE_ENTITY, "{label}");
                    assert_ne!(status, StatusCode::UNAUTHORIZED, "{label}");
                } else {
                    assert_eq!(status, StatusCode::FORBIDDEN, "{label}");
                    let (_, blocks) = call(&app, "GET", "/ledger/blocks", Some(&token), None).await;
                    assert_eq!(blocks["height"], 2, "{label}");
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 5 * (ENDPOINTS.len() + PayloadKind::ALL.len() - 1));
}

#[tokio::test]
async fn platform_survives_restart_in_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        r#"
data_dir = "{}"
[platform]
network_seed = "svc"
members = [["S01", "stakeholder-validator"], ["I1", "external-investor"]]
[tokens]
"t" = "S01"
"#,
        dir.path().join("data").display()
    );
    let cfg = scftwin_core::config::ServiceConfig::from_toml(&toml).unwrap();
    let first = app(open_platform(&cfg).unwrap(), cfg.tokens.clone()).unwrap();
    let body = json!({ "payload": { "kind": "token_transfer", "token": { "op": "mint", "to": "S01", "amount": 7 } }, "timestamp": 1 });
    assert_eq!(call(&first, "POST", "/transactions", Some("t"), Some(body)).await.0, StatusCode::OK);
    let (_, before) = call(&first, "GET", "/ledger/blocks", Some("t"), None).await;
    drop(first);

    let second = app(open_platform(&cfg).unwrap(), cfg.tokens.clone()).unwrap();
    let (_, after) = call(&second, "GET", "/ledger/blocks", Some("t"), None).await;
    assert_eq!(before["blocks"], after["blocks"]);
    let (_, st) = call(&second, "GET", "/stakeholders", Some("t"), None).await;
    assert_eq!(st["stakeholders"][0]["balance"], 7);
}
