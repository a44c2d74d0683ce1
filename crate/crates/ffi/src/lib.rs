//! C ABI over the survey engine.
//!
//! Handles are opaque and owned by the caller: free flows with
//! `vca_flow_free`, sessions with `vca_session_free`, and every string this
//! library returns with `vca_string_free`. Values cross the boundary as
//! UTF-8 JSON. A call that returns anything other than `VCA_STATUS_OK`
//! leaves its out-parameters untouched and sets a message readable with
//! `vca_last_error` on the same thread.
//!
//! A session handle is not thread safe; serialize calls on one handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use chrono::NaiveDate;
use chrono_tz::Tz;
use indexmap::IndexMap;
use serde_json::{json, Value};
use vca_survey::accounts::{default_goal_ml, GoalMode, LinkStatus, UserProfile};
use vca_survey::analytics::{anchor_night, derive_sleep};
use vca_survey::engine::{replay, Engine, EngineConfig, EngineError, SessionState, Step, Utterance, DEFAULT_TIMEOUT_MS};
use vca_survey::flow::{load_flow, FlowCatalog, SurveyFlow};
use vca_survey::parsers::{parse_answer, AnswerKind, AnswerValue};
use vca_survey::store::EventRecord;
use vca_survey::time::Timestamp;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidFlow = 4,
    ParseFailed = 5,
    SessionEnded = 6,
    InvalidPhase = 7,
    Internal = 98,
    Panic = 99,
}

/// A validated flow definition.
pub struct VcaFlow {
    flow: Arc<SurveyFlow>,
}

/// One running or finished session with its event log.
pub struct VcaSession {
    engine: Engine,
    flow: Arc<SurveyFlow>,
    state: SessionState,
    log: Vec<EventRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(VcaStatus, String);

type Res<T> = Result<T, Fail>;

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> VcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VcaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VcaStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Fail(VcaStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VcaStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Res<()> {
    if p.is_null() {
        Err(Fail(VcaStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// # Safety
/// `out` is null or writable.
unsafe fn put_json(out: *mut *mut c_char, v: &Value) {
    if !out.is_null() {
        *out = c_string(v.to_string());
    }
}

fn engine_fail(e: EngineError) -> Fail {
    let status = match e {
        EngineError::Terminal(_) => VcaStatus::SessionEnded,
        EngineError::InvalidPhase | EngineError::DeadlinePassed { .. } | EngineError::DeadlineNotReached { .. } => {
            VcaStatus::InvalidPhase
        }
        EngineError::InvalidFlow(_) => VcaStatus::InvalidFlow,
        _ => VcaStatus::Internal,
    };
    Fail(status, e.to_string())
}

/// Library version, static storage; do not free.
#[no_mangle]
pub extern "C" fn vca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on this thread; do not free.
#[no_mangle]
pub extern "C" fn vca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn vca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a bundled flow by id ("fluidmonitor", "sleepy").
///
/// # Safety
/// `flow_id` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_flow_builtin(flow_id: *const c_char, out: *mut *mut VcaFlow) -> VcaStatus {
    guard(|| {
        let id = text(flow_id, "flow_id")?;
        out_ptr(out, "out")?;
        let flow = FlowCatalog::builtin()
            .get(id)
            .ok_or_else(|| Fail(VcaStatus::InvalidArgument, format!("unknown flow `{id}`")))?;
        *out = Box::into_raw(Box::new(VcaFlow { flow }));
        Ok(())
    })
}

/// Parses and validates a flow document.
///
/// # Safety
/// `document` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_flow_load(document: *const c_char, out: *mut *mut VcaFlow) -> VcaStatus {
    guard(|| {
        let doc = text(document, "document")?;
        out_ptr(out, "out")?;
        let flow = load_flow(doc).map_err(|e| Fail(VcaStatus::InvalidFlow, e.to_string()))?;
        *out = Box::into_raw(Box::new(VcaFlow { flow: Arc::new(flow) }));
        Ok(())
    })
}

/// The flow as JSON.
///
/// # Safety
/// `flow` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_flow_json(flow: *const VcaFlow, out_json: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let flow = flow.as_ref().ok_or_else(|| Fail(VcaStatus::NullArgument, "`flow` is null".into()))?;
        out_ptr(out_json, "out_json")?;
        let v = serde_json::to_value(&*flow.flow).map_err(|e| Fail(VcaStatus::Internal, e.to_string()))?;
        put_json(out_json, &v);
        Ok(())
    })
}

/// # Safety
/// `flow` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn vca_flow_free(flow: *mut VcaFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Parses one utterance for an answer kind such as "FLUID_VOLUME" or
/// "CLOCK_TIME". On success writes `{"value", "echo", "canonical"}`.
///
/// # Safety
/// Strings are NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_parse(kind: *const c_char, utterance: *const c_char, out_json: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let kind: AnswerKind =
            text(kind, "kind")?.parse().map_err(|e: vca_survey::parsers::UnknownAnswerKind| Fail(VcaStatus::InvalidArgument, e.to_string()))?;
        let utterance = text(utterance, "utterance")?;
        out_ptr(out_json, "out_json")?;
        let parsed = parse_answer(kind, utterance).map_err(|f| Fail(VcaStatus::ParseFailed, f.to_string()))?;
        put_json(out_json, &json!({ "value": parsed.value, "echo": parsed.normalized_echo, "canonical": parsed.value.canonical() }));
        Ok(())
    })
}

impl VcaSession {
    fn absorb(&mut self, step: Step, at: Timestamp) -> Value {
        let ids = step.state.ids();
        for e in &step.events {
            let seq = self.log.len() as u64 + 1;
            self.log.push(EventRecord { seq, stream_id: ids.session_id.clone(), kind: e.kind(), payload: e.to_payload(&ids), at });
        }
        self.state = step.state;
        let mut reply = serde_json::to_value(&step.reply).unwrap_or_default();
        reply["deadline"] = json!(self.state.deadline);
        reply["last_seq"] = json!(self.log.len());
        reply
    }
}

/// Starts a session. `timeout_ms <= 0` uses the default of 10000. Linked
/// users are not asked to confirm their id. Writes the first reply
/// (`{"say", "session_status", "recorded", "deadline", "last_seq"}`) to
/// `out_reply` when it is not null.
///
/// # Safety
/// `flow` is a live handle; strings are NUL-terminated; `out_session` is
/// writable; `out_reply` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn vca_session_start(
    flow: *const VcaFlow,
    session_id: *const c_char,
    user_id: *const c_char,
    linked: bool,
    timeout_ms: i64,
    now_ms: i64,
    out_session: *mut *mut VcaSession,
    out_reply: *mut *mut c_char,
) -> VcaStatus {
    guard(|| {
        let flow = flow.as_ref().ok_or_else(|| Fail(VcaStatus::NullArgument, "`flow` is null".into()))?.flow.clone();
        let session_id = text(session_id, "session_id")?;
        let user_id = text(user_id, "user_id")?;
        out_ptr(out_session, "out_session")?;
        let profile = UserProfile {
            user_id: user_id.to_string(),
            display_name: user_id.to_string(),
            link_status: if linked { LinkStatus::Linked } else { LinkStatus::Unlinked },
            secret_hash: String::new(),
            timezone: "UTC".into(),
            fluid_goal_ml: default_goal_ml(),
            goal_mode: GoalMode::Goal,
            schedule_ref: "default".into(),
        };
        let timeout_ms = if timeout_ms > 0 { timeout_ms } else { DEFAULT_TIMEOUT_MS };
        let engine = Engine::new(EngineConfig { timeout_ms, readback: None });
        let now = Timestamp(now_ms);
        let step = engine.start_session(session_id, &profile, &flow, now).map_err(engine_fail)?;
        let mut session = Box::new(VcaSession { engine, flow, state: step.state.clone(), log: Vec::new() });
        let reply = session.absorb(step, now);
        put_json(out_reply, &reply);
        *out_session = Box::into_raw(session);
        Ok(())
    })
}

/// Feeds one utterance. A deadline already passed at `now_ms` is applied
/// first, as the gateway does.
///
/// # Safety
/// `session` is a live handle; `text` is NUL-terminated; `out_reply` is null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn vca_session_utterance(
    session: *mut VcaSession,
    utterance: *const c_char,
    now_ms: i64,
    out_reply: *mut *mut c_char,
) -> VcaStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| Fail(VcaStatus::NullArgument, "`session` is null".into()))?;
        let utterance = text(utterance, "utterance")?;
        let now = Timestamp(now_ms);
        if s.state.deadline.is_some_and(|d| now > d) {
            let step = s.engine.handle_timeout(&s.flow, &s.state, now).map_err(engine_fail)?;
            s.absorb(step, now);
            if s.state.phase.is_terminal() {
                return Err(Fail(VcaStatus::SessionEnded, "session was abandoned after silence".into()));
            }
        }
        let step = s.engine.handle_utterance(&s.flow, &s.state, &Utterance::text(utterance), now).map_err(engine_fail)?;
        let reply = s.absorb(step, now);
        put_json(out_reply, &reply);
        Ok(())
    })
}

/// Reports silence. Fails with `VCA_STATUS_INVALID_PHASE` before the deadline.
///
/// # Safety
/// `session` is a live handle; `out_reply` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn vca_session_timeout(session: *mut VcaSession, now_ms: i64, out_reply: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| Fail(VcaStatus::NullArgument, "`session` is null".into()))?;
        let now = Timestamp(now_ms);
        let step = s.engine.handle_timeout(&s.flow, &s.state, now).map_err(engine_fail)?;
        let reply = s.absorb(step, now);
        put_json(out_reply, &reply);
        Ok(())
    })
}

/// Current deadline in epoch ms, or -1 when the session awaits nothing.
///
/// # Safety
/// `session` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vca_session_deadline(session: *const VcaSession) -> i64 {
    session.as_ref().and_then(|s| s.state.deadline).map_or(-1, |d| d.millis())
}

/// Session state (phase, answers, counters) as JSON.
///
/// # Safety
/// `session` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_session_state(session: *const VcaSession, out_json: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| Fail(VcaStatus::NullArgument, "`session` is null".into()))?;
        out_ptr(out_json, "out_json")?;
        put_json(out_json, &serde_json::to_value(&s.state).map_err(|e| Fail(VcaStatus::Internal, e.to_string()))?);
        Ok(())
    })
}

/// The session's events as JSON lines, one record per line.
///
/// # Safety
/// `session` is a live handle; `out_jsonl` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_session_events(session: *const VcaSession, out_jsonl: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| Fail(VcaStatus::NullArgument, "`session` is null".into()))?;
        out_ptr(out_jsonl, "out_jsonl")?;
        let mut buf = String::new();
        for r in &s.log {
            buf.push_str(&serde_json::to_string(r).map_err(|e| Fail(VcaStatus::Internal, e.to_string()))?);
            buf.push('\n');
        }
        *out_jsonl = c_string(buf);
        Ok(())
    })
}

/// # Safety
/// `session` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn vca_session_free(session: *mut VcaSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Rebuilds session state from JSON-lines events of one session.
///
/// # Safety
/// `events_jsonl` is NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_replay(events_jsonl: *const c_char, out_json: *mut *mut c_char) -> VcaStatus {
    guard(|| {
        let input = text(events_jsonl, "events_jsonl")?;
        out_ptr(out_json, "out_json")?;
        let records = input
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<EventRecord>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Fail(VcaStatus::InvalidArgument, e.to_string()))?;
        let state = replay(&records).map_err(|e| Fail(VcaStatus::InvalidArgument, e.to_string()))?;
        put_json(out_json, &serde_json::to_value(&state).map_err(|e| Fail(VcaStatus::Internal, e.to_string()))?);
        Ok(())
    })
}

/// Sleep metrics for one diary: `answers_json` maps question ids to answer
/// values as in the state JSON, `diary_date` is YYYY-MM-DD (the morning of
/// waking) and `timezone` an IANA name. Writes the night with `tib_min`,
/// `tst_min`, `sleep_efficiency` and `flags`.
///
/// # Safety
/// Strings are NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vca_sleep_metrics(
    answers_json: *const c_char,
    diary_date: *const c_char,
    timezone: *const c_char,
    out_json: *mut *mut c_char,
) -> VcaStatus {
    guard(|| {
        let answers: IndexMap<String, AnswerValue> = serde_json::from_str(text(answers_json, "answers_json")?)
            .map_err(|e| Fail(VcaStatus::InvalidArgument, e.to_string()))?;
        let date = NaiveDate::parse_from_str(text(diary_date, "diary_date")?, "%Y-%m-%d")
            .map_err(|e| Fail(VcaStatus::InvalidArgument, format!("diary_date: {e}")))?;
        let tz_name = text(timezone, "timezone")?;
        let tz: Tz = tz_name.parse().map_err(|_| Fail(VcaStatus::InvalidArgument, format!("unknown timezone `{tz_name}`")))?;
        out_ptr(out_json, "out_json")?;
        let night = anchor_night("", &answers, date, tz).map_err(|e| Fail(VcaStatus::InvalidArgument, e.to_string()))?;
        put_json(out_json, &serde_json::to_value(derive_sleep(night)).map_err(|e| Fail(VcaStatus::Internal, e.to_string()))?);
        Ok(())
    })
}
