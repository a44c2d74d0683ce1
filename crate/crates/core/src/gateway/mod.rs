//! HTTP + websocket surface over [`Service`].
//!
//! Bearer tokens are either the configured admin token or a per-user API
//! token. User tokens only reach that user's sessions, summaries and export
//! rows. Timeouts are enforced here by a sweeper, so clients keep no timers.

mod auth;
mod error;
mod push;

use std::collections::{BTreeSet, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use auth::{Body, Caller, Params};
pub use error::ApiError;
pub use push::{event_message, Hub, Push};

use crate::accounts::{GoalMode, UserProfile};
use crate::config::Config;
use crate::engine::{Phase, Recorded, Utterance};
use crate::analytics::Remaining;
use crate::service::{Service, ServiceError, Turn};
use crate::store::{EventRecord, ExportFilter, ExportFormat};
use crate::time::Timestamp;

/// How long before a deadline the warning is pushed.
pub const WARNING_LEAD_MS: i64 = 2_000;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::now()
    }
}

/// A clock tests move by hand.
#[derive(Debug)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(at: Timestamp) -> Self {
        ManualClock(AtomicI64::new(at.millis()))
    }

    pub fn set(&self, at: Timestamp) {
        self.0.store(at.millis(), Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) -> Timestamp {
        Timestamp(self.0.fetch_add(ms, Ordering::SeqCst) + ms)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub admin_token: String,
    pub rate_limit_per_minute: u32,
    pub sweep_interval_ms: u64,
}

impl From<&Config> for GatewayConfig {
    fn from(c: &Config) -> Self {
        GatewayConfig {
            admin_token: c.admin_token.clone(),
            rate_limit_per_minute: c.rate_limit_per_minute,
            sweep_interval_ms: c.sweep_interval_ms.max(10),
        }
    }
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig::from(&Config::default())
    }
}

struct Inner {
    service: Arc<Service>,
    clock: Arc<dyn Clock>,
    config: GatewayConfig,
    hub: Hub,
    limiter: auth::RateLimiter,
    warned: Mutex<HashSet<(String, Timestamp)>>,
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    pub fn new(service: Arc<Service>, clock: Arc<dyn Clock>, config: GatewayConfig) -> Self {
        Gateway {
            inner: Arc::new(Inner {
                service,
                clock,
                config,
                hub: Hub::default(),
                limiter: auth::RateLimiter::default(),
                warned: Mutex::new(HashSet::new()),
            }),
        }
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.inner.service
    }

    pub fn hub(&self) -> &Hub {
        &self.inner.hub
    }

    pub fn now(&self) -> Timestamp {
        self.inner.clock.now()
    }

    /// Runs a service call off the async executor; the store may fsync.
    async fn run<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
    {
        let service = self.inner.service.clone();
        tokio::task::spawn_blocking(move || f(&service))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
            .map_err(ApiError::from)
    }

    fn publish_turn(&self, turn: &Turn) {
        for r in &turn.records {
            self.inner.hub.publish(Push::Event(r.clone()));
        }
        if let Some(p) = &turn.progress {
            self.inner.hub.publish(Push::Progress { session_id: turn.session_id.clone(), progress: p.clone() });
        }
    }

    async fn utterance(&self, session_id: &str, u: Utterance) -> Result<Turn, ApiError> {
        let now = self.now();
        let sid = session_id.to_string();
        // Timeouts applied on the way in are persisted even when the answer
        // itself is refused, so push whatever reached the log.
        let before = self.inner.service.store().last_seq(session_id);
        let result = self.run(move |s| s.utterance(&sid, &u, now)).await;
        match &result {
            Ok(turn) => self.publish_turn(turn),
            Err(_) => self.publish_since(session_id, before + 1),
        }
        result
    }

    fn publish_since(&self, session_id: &str, from: u64) {
        if let Ok(records) = self.inner.service.store().read_stream(session_id, from) {
            for r in records {
                self.inner.hub.publish(Push::Event(r));
            }
        }
    }

    /// One sweeper pass: inject due timeouts, warn sessions close to their
    /// deadline, and fire due nudges.
    pub fn tick(&self, now: Timestamp) {
        let service = &self.inner.service;
        for turn in service.sweep(now) {
            self.publish_turn(&turn);
        }
        let mut warned = self.inner.warned.lock().unwrap_or_else(|e| e.into_inner());
        warned.retain(|(_, d)| *d >= now);
        for (session_id, _, deadline) in service.live_deadlines() {
            if (0..=WARNING_LEAD_MS).contains(&(deadline - now)) && warned.insert((session_id.clone(), deadline)) {
                self.inner.hub.publish(Push::TimeoutWarning { session_id, deadline, remaining_ms: deadline - now });
            }
        }
        drop(warned);
        match service.tick_nudges(now) {
            Ok(fired) => fired.into_iter().for_each(|n| self.inner.hub.publish(Push::Nudge(n))),
            Err(e) => tracing::warn!(error = %e, "nudge tick failed"),
        }
    }

    /// Runs [`Gateway::tick`] every `sweep_interval_ms` until the task is aborted.
    pub fn spawn_sweeper(&self) -> JoinHandle<()> {
        let g = self.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(Duration::from_millis(g.inner.config.sweep_interval_ms));
            every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                every.tick().await;
                let g2 = g.clone();
                let now = g.now();
                if tokio::task::spawn_blocking(move || g2.tick(now)).await.is_err() {
                    tracing::error!("sweeper pass panicked");
                }
            }
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/v1/users", post(enroll))
            .route("/v1/users/{id}", get(get_user))
            .route("/v1/users/{id}/goal", put(set_goal))
            .route("/v1/users/{id}/fluid/summary", get(fluid_summary))
            .route("/v1/users/{id}/fluid/remaining", get(fluid_remaining))
            .route("/v1/users/{id}/sleep/summary", get(sleep_summary))
            .route("/v1/users/{id}/nudges", get(nudges))
            .route("/v1/sessions", post(start_session))
            .route("/v1/sessions/{id}", get(get_session))
            .route("/v1/sessions/{id}/events", get(session_events))
            .route("/v1/sessions/{id}/utterances", post(post_utterance))
            .route("/v1/sessions/{id}/timeout", post(post_timeout))
            .route("/v1/link/begin", post(link_begin))
            .route("/v1/link/confirm", post(link_confirm))
            .route("/v1/export", get(export))
            .route("/v1/aggregates/fluid/mean", get(fluid_mean))
            .route("/v1/chat/{id}", get(push::chat))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(self.clone())
    }
}

/// Serves `router` on `listener` with the sweeper running, until ctrl-c.
pub async fn serve_on(listener: TcpListener, gateway: Gateway) -> std::io::Result<()> {
    let sweeper = gateway.spawn_sweeper();
    let result = axum::serve(listener, gateway.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    if let Err(e) = gateway.service().store().sync() {
        tracing::error!(error = %e, "final sync failed");
    }
    result
}

/// Opens the store named in `cfg` and serves the gateway on `cfg.bind`.
pub async fn serve(cfg: &Config) -> anyhow::Result<()> {
    let service = Arc::new(Service::open(cfg)?);
    let gateway = Gateway::new(service, Arc::new(SystemClock), GatewayConfig::from(cfg));
    let addr: SocketAddr = cfg.bind.parse()?;
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(%addr, "gateway listening");
    serve_on(listener, gateway).await?;
    Ok(())
}

// ---- handlers

type ApiResult<T> = Result<T, ApiError>;

async fn owner_of(g: &Gateway, session_id: &str) -> ApiResult<String> {
    let sid = session_id.to_string();
    Ok(g.run(move |s| s.session(&sid)).await?.user_id)
}

#[derive(Deserialize)]
struct EnrollBody {
    user_id: String,
    #[serde(default)]
    display_name: Option<String>,
    password: String,
    #[serde(default)]
    timezone: Option<String>,
}

#[derive(Serialize)]
struct Enrolled {
    profile: UserProfile,
    api_token: String,
}

async fn enroll(State(g): State<Gateway>, caller: Caller, Body(b): Body<EnrollBody>) -> ApiResult<Response> {
    caller.require_admin()?;
    let now = g.now();
    let out = g
        .run(move |s| {
            let name = b.display_name.as_deref().unwrap_or(&b.user_id);
            let profile = s.enroll(&b.user_id, name, &b.password, b.timezone.as_deref(), now)?;
            let api_token = s.issue_api_token(&profile.user_id, now)?;
            Ok(Enrolled { profile, api_token })
        })
        .await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn get_user(State(g): State<Gateway>, caller: Caller, Path(id): Path<String>) -> ApiResult<Json<UserProfile>> {
    caller.check_user(&id)?;
    Ok(Json(g.run(move |s| s.profile(&id)).await?))
}

#[derive(Deserialize)]
struct GoalBody {
    goal_ml: i64,
    #[serde(default)]
    mode: Option<String>,
}

async fn set_goal(State(g): State<Gateway>, caller: Caller, Path(id): Path<String>, Body(b): Body<GoalBody>) -> ApiResult<Json<UserProfile>> {
    caller.check_user(&id)?;
    let mode: GoalMode = match b.mode.as_deref() {
        None => GoalMode::Goal,
        Some(m) => m.parse().map_err(|e: crate::accounts::AccountError| ApiError::bad_request(e.to_string()))?,
    };
    let now = g.now();
    Ok(Json(g.run(move |s| s.set_goal(&id, b.goal_ml, mode, now)).await?))
}

#[derive(Deserialize)]
struct DateRange {
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
}

impl DateRange {
    /// Missing bounds default to the user's current local date.
    fn resolve(&self, today: NaiveDate) -> (NaiveDate, NaiveDate) {
        let from = self.from.unwrap_or(today);
        (from, self.to.unwrap_or(from.max(today)))
    }
}

async fn today_for(g: &Gateway, user: &str) -> ApiResult<NaiveDate> {
    let u = user.to_string();
    let profile = g.run(move |s| s.profile(&u)).await?;
    Ok(g.now().local_date(profile.tz()))
}

async fn fluid_summary(
    State(g): State<Gateway>,
    caller: Caller,
    Path(id): Path<String>,
    Params(q): Params<DateRange>,
) -> ApiResult<Response> {
    caller.check_user(&id)?;
    let (from, to) = q.resolve(today_for(&g, &id).await?);
    Ok(Json(g.run(move |s| s.fluid_summary(&id, from, to)).await?).into_response())
}

async fn fluid_remaining(State(g): State<Gateway>, caller: Caller, Path(id): Path<String>) -> ApiResult<Json<Remaining>> {
    caller.check_user(&id)?;
    let now = g.now();
    Ok(Json(g.run(move |s| s.remaining(&id, now)).await?))
}

async fn sleep_summary(
    State(g): State<Gateway>,
    caller: Caller,
    Path(id): Path<String>,
    Params(q): Params<DateRange>,
) -> ApiResult<Response> {
    caller.check_user(&id)?;
    let (from, to) = q.resolve(today_for(&g, &id).await?);
    Ok(Json(g.run(move |s| s.sleep_summary(&id, from, to)).await?).into_response())
}

async fn nudges(State(g): State<Gateway>, caller: Caller, Path(id): Path<String>) -> ApiResult<Response> {
    caller.check_user(&id)?;
    Ok(Json(g.run(move |s| s.profile(&id).map(|_| s.nudges_for(&id))).await?).into_response())
}

#[derive(Deserialize)]
struct StartBody {
    #[serde(default, alias = "user_id")]
    user: Option<String>,
    #[serde(default, alias = "flow_id")]
    flow: Option<String>,
    /// Free text such as "talk to fluid monitor", used when `flow` is absent.
    #[serde(default)]
    invocation: Option<String>,
}

#[derive(Serialize)]
struct TurnView {
    session_id: String,
    /// Text to show or speak.
    say: String,
    session_status: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    recorded: Option<Recorded>,
    #[serde(skip_serializing_if = "Option::is_none")]
    progress: Option<Remaining>,
    duplicate: bool,
    last_seq: u64,
    events: Vec<EventRecord>,
}

impl TurnView {
    fn new(t: Turn, last_seq: u64) -> Self {
        TurnView {
            session_id: t.session_id,
            say: t.reply.say,
            session_status: t.reply.session_status,
            recorded: t.reply.recorded,
            progress: t.progress,
            duplicate: t.duplicate,
            last_seq,
            events: t.records,
        }
    }
}

async fn start_session(State(g): State<Gateway>, caller: Caller, Body(b): Body<StartBody>) -> ApiResult<Response> {
    let user = match (b.user, caller.user_id()) {
        (Some(u), _) => u,
        (None, Some(u)) => u.to_string(),
        (None, None) => return Err(ApiError::bad_request("`user` is required")),
    };
    caller.check_user(&user)?;
    let now = g.now();
    let turn = match (b.flow, b.invocation) {
        (Some(flow), _) => g.run(move |s| s.start_session(&user, &flow, now)).await?,
        (None, Some(text)) => g.run(move |s| s.start_by_invocation(&user, &text, now)).await?,
        (None, None) => return Err(ApiError::bad_request("`flow` or `invocation` is required")),
    };
    g.publish_turn(&turn);
    let last_seq = turn.records.last().map_or(0, |r| r.seq);
    let prompt = turn.reply.say.clone();
    let state = turn.state.clone();
    let mut body = serde_json::to_value(TurnView::new(turn, last_seq)).unwrap_or_default();
    body["prompt"] = json!(prompt);
    body["state"] = json!(state);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(g): State<Gateway>, caller: Caller, Path(id): Path<String>) -> ApiResult<Response> {
    let state = g.run(move |s| s.session(&id)).await?;
    caller.check_user(&state.user_id)?;
    Ok(Json(state).into_response())
}

#[derive(Deserialize)]
struct FromSeq {
    from_seq: Option<u64>,
}

async fn session_events(
    State(g): State<Gateway>,
    caller: Caller,
    Path(id): Path<String>,
    Params(q): Params<FromSeq>,
) -> ApiResult<Response> {
    caller.check_user(&owner_of(&g, &id).await?)?;
    let from = q.from_seq.unwrap_or(1).max(1);
    Ok(Json(g.run(move |s| s.session_records(&id, from)).await?).into_response())
}

async fn post_utterance(
    State(g): State<Gateway>,
    caller: Caller,
    Path(id): Path<String>,
    Body(u): Body<Utterance>,
) -> ApiResult<Json<TurnView>> {
    caller.check_user(&owner_of(&g, &id).await?)?;
    let turn = g.utterance(&id, u).await?;
    Ok(Json(TurnView::new(turn, g.service().store().last_seq(&id))))
}

#[derive(Deserialize)]
struct TimeoutQuery {
    force: Option<bool>,
}

/// Test hook: reports silence now. Without `force=false` the deadline is
/// treated as already passed.
async fn post_timeout(
    State(g): State<Gateway>,
    caller: Caller,
    Path(id): Path<String>,
    Params(q): Params<TimeoutQuery>,
) -> ApiResult<Json<TurnView>> {
    caller.check_user(&owner_of(&g, &id).await?)?;
    let now = g.now();
    let force = q.force.unwrap_or(true);
    let sid = id.clone();
    let turn = g.run(move |s| s.timeout(&sid, now, force)).await?;
    g.publish_turn(&turn);
    Ok(Json(TurnView::new(turn, g.service().store().last_seq(&id))))
}

#[derive(Deserialize)]
struct LinkBegin {
    #[serde(default)]
    user_id: Option<String>,
}

async fn link_begin(State(g): State<Gateway>, caller: Caller, Body(b): Body<LinkBegin>) -> ApiResult<Response> {
    let user = b.user_id.or_else(|| caller.user_id().map(str::to_string)).ok_or_else(|| ApiError::bad_request("`user_id` is required"))?;
    caller.check_user(&user)?;
    let now = g.now();
    let token = g.run(move |s| s.begin_link(&user, now)).await?;
    Ok((StatusCode::CREATED, Json(token)).into_response())
}

#[derive(Deserialize)]
struct LinkConfirm {
    token: String,
    password: String,
}

async fn link_confirm(State(g): State<Gateway>, caller: Caller, Body(b): Body<LinkConfirm>) -> ApiResult<Json<UserProfile>> {
    if let Some(owner) = g.service().link_token_owner(&b.token) {
        caller.check_user(&owner)?;
    }
    let now = g.now();
    Ok(Json(g.run(move |s| s.confirm_link(&b.token, &b.password, now)).await?))
}

#[derive(Deserialize)]
struct ExportQuery {
    /// Comma separated.
    users: Option<String>,
    from: Option<String>,
    to: Option<String>,
    format: Option<String>,
}

fn user_set(list: Option<&str>) -> Option<BTreeSet<String>> {
    let set: BTreeSet<String> = list?.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
    (!set.is_empty()).then_some(set)
}

async fn export(State(g): State<Gateway>, caller: Caller, Params(q): Params<ExportQuery>) -> ApiResult<Response> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse().map_err(|e: crate::store::StoreError| ApiError::bad_request(e.to_string()))?;
    let mut filter = ExportFilter::all();
    filter.users = user_set(q.users.as_deref());
    if let Some(me) = caller.user_id() {
        match &filter.users {
            Some(set) if set.iter().any(|u| u != me) => return Err(ApiError::forbidden()),
            _ => filter.users = Some(BTreeSet::from([me.to_string()])),
        }
    }
    let bound = |s: &Option<String>, end| match s {
        None => Ok(None),
        Some(s) => Timestamp::parse_bound(s, end).map(Some).ok_or_else(|| ApiError::bad_request(format!("bad time `{s}`"))),
    };
    filter.from = bound(&q.from, false)?;
    filter.to = bound(&q.to, true)?;
    let body = g.run(move |s| s.export(&filter, format)).await?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::JsonLines => "application/x-ndjson",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

#[derive(Deserialize)]
struct MeanQuery {
    from: NaiveDate,
    to: NaiveDate,
    users: Option<String>,
}

async fn fluid_mean(State(g): State<Gateway>, _caller: Caller, Params(q): Params<MeanQuery>) -> ApiResult<Response> {
    if q.from > q.to {
        return Err(ApiError::bad_request("`from` is after `to`"));
    }
    let users = user_set(q.users.as_deref());
    Ok(Json(g.run(move |s| s.mean_daily_consumption(users.as_ref(), q.from, q.to)).await?).into_response())
}
