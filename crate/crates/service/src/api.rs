//! Routes and handlers.

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use scftwin_core::contracts::{ContractCall, SecuritizationDeal};
use scftwin_core::health::score_risk;
use scftwin_core::ids::{ActorId, Amount, DealId, OfferId, ReceivableId, Tick};
use scftwin_core::indices::IndexName;
use scftwin_core::knowledge::{Entity, Predicate, Triple};
use scftwin_core::ledger::{required_permission, Payload, PayloadKind, Permission, Role};
use scftwin_core::rational::{to_decimal, Rational};

use crate::auth::Principal;
use crate::error::ApiError;
use crate::writer::{Command, Committed, View};
use crate::AppState;

/// What an endpoint needs from the caller's role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Read,
    /// Submits a payload of this kind.
    Submit(PayloadKind),
    /// Submits the payload kind given in the request body.
    SubmitAny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub capability: Capability,
}

const fn ep(method: &'static str, path: &'static str, capability: Capability) -> Endpoint {
    Endpoint { method, path, capability }
}

pub const ENDPOINTS: &[Endpoint] = &[
    ep("GET", "/stakeholders", Capability::Read),
    ep("GET", "/ledger/blocks", Capability::Read),
    ep("GET", "/indices/{id}", Capability::Read),
    ep("GET", "/alerts", Capability::Read),
    ep("GET", "/risk/{id}", Capability::Read),
    ep("GET", "/recommendations/{id}", Capability::Read),
    ep("GET", "/deals", Capability::Read),
    ep("GET", "/deals/{id}", Capability::Read),
    ep("GET", "/graph/exposure", Capability::Read),
    ep("POST", "/transactions", Capability::SubmitAny),
    ep("POST", "/deals", Capability::Submit(PayloadKind::ContractInvocation)),
    ep("POST", "/deals/{id}/purchase", Capability::Submit(PayloadKind::ContractInvocation)),
    ep("POST", "/receivables/{id}/pay", Capability::Submit(PayloadKind::PaymentMade)),
    ep("POST", "/offers", Capability::Submit(PayloadKind::ContractInvocation)),
    ep("POST", "/offers/{id}/respond", Capability::Submit(PayloadKind::ContractInvocation)),
];

/// Whether `role` may read (`None`) or submit a payload of `kind`.
pub fn permits(role: Role, kind: Option<PayloadKind>) -> bool {
    let needed = kind.map_or(Permission::Read, required_permission);
    role.permissions().contains(&needed)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/stakeholders", get(stakeholders))
        .route("/ledger/blocks", get(blocks))
        .route("/indices/{id}", get(indices))
        .route("/alerts", get(alerts))
        .route("/risk/{id}", get(risk))
        .route("/recommendations/{id}", get(recommendations))
        .route("/deals", get(deals).post(initiate))
        .route("/deals/{id}", get(deal))
        .route("/deals/{id}/purchase", post(purchase))
        .route("/receivables/{id}/pay", post(pay))
        .route("/offers", post(offer))
        .route("/offers/{id}/respond", post(respond))
        .route("/transactions", post(transaction))
        .route("/graph/exposure", get(exposure))
        .with_state(state)
}

/// JSON body; an empty body reads as `{}`. Any decoding failure is a 422.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::malformed(e.to_string()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(Body).map_err(|e| ApiError::malformed(e.to_string()))
    }
}

/// Query string; decoding failures are a 422.
pub struct Query<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for Query<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| Query(q.0))
            .map_err(|e| ApiError::malformed(e.body_text()))
    }
}

fn stakeholder(view: &View, id: &str) -> Result<ActorId, ApiError> {
    let id = ActorId::new(id);
    if view.engine.is_stakeholder(&id) {
        Ok(id)
    } else {
        Err(ApiError::not_found(format!("no stakeholder {id}")))
    }
}

fn head(view: &View) -> Value {
    json!({ "height": view.height(), "tick": view.engine.tick() })
}

fn with_head(view: &View, mut body: Value) -> Json<Value> {
    if let (Value::Object(b), Value::Object(h)) = (&mut body, head(view)) {
        b.extend(h);
    }
    Json(body)
}

fn risk_json(view: &View, s: &ActorId) -> Value {
    let e = &view.engine;
    match score_risk(e, s, e.tick(), &e.params().risk_weights) {
        Ok(r) => {
            let decimal = to_decimal(&r.value, 6);
            let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
            v["decimal"] = json!(decimal);
            v
        }
        Err(_) => Value::Null,
    }
}

async fn stakeholders(State(st): State<AppState>, _: Principal) -> Json<Value> {
    let view = st.view();
    let list: Vec<Value> = view
        .engine
        .stakeholders()
        .map(|s| {
            let classes = view.derived.latest_report(s).map(|r| {
                IndexName::ALL
                    .iter()
                    .map(|n| (n.as_str().to_string(), json!(r.class(*n))))
                    .collect::<serde_json::Map<_, _>>()
            });
            json!({
                "id": s,
                "balance": view.engine.balance(s),
                "risk": risk_json(&view, s),
                "classes": classes,
                "active_alerts": view.derived.active_alerts(s).len(),
            })
        })
        .collect();
    let members: Vec<Value> = view
        .network
        .nodes()
        .map(|n| json!({ "id": n.node_id, "role": n.role, "balance": view.engine.balance(&n.node_id) }))
        .collect();
    with_head(&view, json!({ "stakeholders": list, "members": members }))
}

#[derive(Deserialize)]
struct Range {
    from: Option<u64>,
    to: Option<u64>,
}

async fn blocks(State(st): State<AppState>, _: Principal, Query(q): Query<Range>) -> Json<Value> {
    let view = st.view();
    let from = q.from.unwrap_or(0);
    let to = q.to.unwrap_or(u64::MAX);
    let blocks: Vec<Value> = view
        .blocks
        .iter()
        .filter(|b| b.height >= from && b.height <= to)
        .map(|b| {
            let mut v = serde_json::to_value(b).unwrap_or(Value::Null);
            v["tick"] = json!(b.tick());
            v
        })
        .collect();
    with_head(&view, json!({ "blocks": blocks }))
}

async fn indices(State(st): State<AppState>, _: Principal, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let s = stakeholder(&view, &id)?;
    let history: Vec<Value> = view.derived.history(&s).iter().map(|r| r.to_json()).collect();
    let latest = view.derived.latest_report(&s).map(|r| r.to_json());
    Ok(with_head(&view, json!({ "stakeholder_id": s, "latest": latest, "history": history })))
}

#[derive(Deserialize)]
struct AlertQuery {
    stakeholder: Option<String>,
    #[serde(default)]
    active: bool,
}

async fn alerts(
    State(st): State<AppState>,
    _: Principal,
    Query(q): Query<AlertQuery>,
) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let only = q.stakeholder.as_deref().map(|s| stakeholder(&view, s)).transpose()?;
    let keep = |s: &ActorId| only.as_ref().is_none_or(|o| o == s);
    let alerts: Vec<Value> = if q.active {
        view.engine
            .stakeholders()
            .filter(|s| keep(s))
            .flat_map(|s| view.derived.active_alerts(s))
            .map(|a| json!(a))
            .collect()
    } else {
        view.derived.alert_log().iter().filter(|a| keep(&a.stakeholder_id)).map(|a| json!(a)).collect()
    };
    Ok(with_head(&view, json!({ "alerts": alerts })))
}

async fn risk(State(st): State<AppState>, _: Principal, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let s = stakeholder(&view, &id)?;
    Ok(with_head(&view, json!({ "risk": risk_json(&view, &s) })))
}

async fn recommendations(
    State(st): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let s = stakeholder(&view, &id)?;
    Ok(with_head(
        &view,
        json!({
            "stakeholder_id": s,
            "recommendations": view.derived.recommendations(&s),
            "declining": view.derived.declining(&s),
        }),
    ))
}

fn deal_json(d: &SecuritizationDeal) -> Value {
    let mut v = serde_json::to_value(d).unwrap_or(Value::Null);
    v["units_sold"] = json!(d.units_sold());
    v["units_unsold"] = json!(d.units_unsold());
    v
}

async fn deals(State(st): State<AppState>, _: Principal) -> Json<Value> {
    let view = st.view();
    let list: Vec<Value> = view.engine.deals().map(deal_json).collect();
    with_head(&view, json!({ "deals": list }))
}

async fn deal(State(st): State<AppState>, _: Principal, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let d = view.engine.deal(&DealId::new(id.as_str())).ok_or_else(|| ApiError::not_found(format!("no deal {id}")))?;
    Ok(with_head(&view, json!({ "deal": deal_json(d) })))
}

#[derive(Deserialize)]
struct Pair {
    from: String,
    to: String,
}

async fn exposure(State(st): State<AppState>, _: Principal, Query(q): Query<Pair>) -> Result<Json<Value>, ApiError> {
    let view = st.view();
    let (a, b) = (stakeholder(&view, &q.from)?, stakeholder(&view, &q.to)?);
    let kb = &view.derived.kb;
    let watch = Triple::new(Entity::stakeholder(&a), Predicate::ContagionWatch, Entity::stakeholder(&b));
    Ok(with_head(
        &view,
        json!({
            "from": a,
            "to": b,
            "exposure": kb.exposure(&a, &b).to_string(),
            "current_assets": kb.current_assets(&a).map(|v| v.to_string()),
            "theta": kb.theta().to_string(),
            "to_alerting": kb.is_alerting(&b),
            "contagion_watch": kb.derived().contains(&watch),
        }),
    ))
}

async fn mutate(
    st: &AppState,
    who: &Principal,
    payload: Payload,
    timestamp: Option<Tick>,
) -> Result<Json<Committed>, ApiError> {
    if !permits(who.role, Some(payload.kind())) {
        return Err(ApiError::forbidden(format!("{} may not submit {}", who.id, payload.kind().as_str())));
    }
    let (reply, rx) = oneshot::channel();
    let cmd = Command { principal: who.id.clone(), payload, timestamp, reply };
    st.writer.send(cmd).await.map_err(|_| ApiError::internal("writer stopped"))?;
    rx.await.map_err(|_| ApiError::internal("writer stopped"))?.map(Json)
}

fn invoke(call: ContractCall) -> Payload {
    Payload::ContractInvocation { call }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    payload: Payload,
    timestamp: Option<Tick>,
}

async fn transaction(
    State(st): State<AppState>,
    who: Principal,
    Body(b): Body<SubmitBody>,
) -> Result<Json<Committed>, ApiError> {
    mutate(&st, &who, b.payload, b.timestamp).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitiateBody {
    deal_id: DealId,
    pool: Vec<ReceivableId>,
    spv: ActorId,
    #[serde(with = "scftwin_core::rational::serde_str_opt", default)]
    advance_rate: Option<Rational>,
    abs_units: u64,
    timestamp: Option<Tick>,
}

async fn initiate(
    State(st): State<AppState>,
    who: Principal,
    Body(b): Body<InitiateBody>,
) -> Result<Json<Committed>, ApiError> {
    let call = ContractCall::InitiateSecuritization {
        deal_id: b.deal_id,
        spv: b.spv,
        pool: b.pool,
        advance_rate: b.advance_rate,
        abs_units: b.abs_units,
    };
    mutate(&st, &who, invoke(call), b.timestamp).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PurchaseBody {
    units: u64,
    price: Option<Amount>,
    timestamp: Option<Tick>,
}

async fn purchase(
    State(st): State<AppState>,
    who: Principal,
    Path(id): Path<String>,
    Body(b): Body<PurchaseBody>,
) -> Result<Json<Committed>, ApiError> {
    let call = ContractCall::PurchaseAbs { deal_id: DealId::new(id), units: b.units, price: b.price };
    mutate(&st, &who, invoke(call), b.timestamp).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimestampBody {
    timestamp: Option<Tick>,
}

async fn pay(
    State(st): State<AppState>,
    who: Principal,
    Path(id): Path<String>,
    Body(b): Body<TimestampBody>,
) -> Result<Json<Committed>, ApiError> {
    let payload = Payload::PaymentMade { receivable_id: ReceivableId::new(id), payer: who.id.clone() };
    mutate(&st, &who, payload, b.timestamp).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OfferBody {
    offer_id: OfferId,
    receivable_id: ReceivableId,
    #[serde(with = "scftwin_core::rational::serde_str")]
    discount_rate: Rational,
    expires_tick: Option<Tick>,
    timestamp: Option<Tick>,
}

async fn offer(
    State(st): State<AppState>,
    who: Principal,
    Body(b): Body<OfferBody>,
) -> Result<Json<Committed>, ApiError> {
    let call = ContractCall::OfferDiscount {
        offer_id: b.offer_id,
        receivable_id: b.receivable_id,
        discount_rate: b.discount_rate,
        expires_tick: b.expires_tick,
    };
    mutate(&st, &who, invoke(call), b.timestamp).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RespondBody {
    accept: bool,
    timestamp: Option<Tick>,
}

async fn respond(
    State(st): State<AppState>,
    who: Principal,
    Path(id): Path<String>,
    Body(b): Body<RespondBody>,
) -> Result<Json<Committed>, ApiError> {
    let call = ContractCall::RespondDiscount { offer_id: OfferId::new(id), accept: b.accept };
    mutate(&st, &who, invoke(call), b.timestamp).await
}
