//! The survey service: sessions, accounts, nudges and summaries over one
//! event store. The gateway, the CLI and the cohort simulator all drive the
//! engine through this type, so every surface produces the same log.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::Serialize;
use thiserror::Error;

use crate::accounts::{AccountError, Accounts, AccountsConfig, GoalMode, LinkToken, UserProfile};
use crate::analytics::{remaining_today, sleep_rows, FluidDaySummary, FluidLedger, MeanPoint, Remaining, SleepRow};
use crate::config::Config;
use crate::engine::{replay, Engine, EngineConfig, EngineError, EngineReply, Phase, ReplayError, SessionState, Step, Utterance};
use crate::flow::{FlowCatalog, SurveyFlow};
use crate::parsers::AnswerKind;
use crate::scheduler::{due_nudges, parse_hhmm, Nudge, NudgeBook, Schedule, SchedulerError, UserSchedule};
use crate::store::{EventKind, EventRecord, EventStore, ExportFilter, ExportFormat, StoreError};
use crate::time::{Timestamp, MS_PER_HOUR};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown flow `{0}`")]
    UnknownFlow(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("no flow matches `{0}`")]
    NoInvocationMatch(String),
    #[error("session `{0}` already exists")]
    DuplicateSession(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Schedule(#[from] SchedulerError),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub accounts: AccountsConfig,
    pub default_timezone: String,
    /// Local survey times per flow id, HH:MM.
    pub flow_times: Vec<(String, Vec<String>)>,
    pub missed_after_ms: i64,
    /// Seed for salts and tokens; entropy when `None`.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig::from_config(&Config::default())
    }
}

impl ServiceConfig {
    pub fn from_config(cfg: &Config) -> Self {
        ServiceConfig {
            engine: EngineConfig { timeout_ms: cfg.timeout_ms, readback: cfg.readback },
            accounts: AccountsConfig { link_token_ttl_ms: cfg.link_token_ttl_secs * 1000, ..AccountsConfig::default() },
            default_timezone: cfg.default_timezone.clone(),
            flow_times: cfg.flow_times().into_iter().map(|(f, t)| (f.to_string(), t.to_vec())).collect(),
            missed_after_ms: cfg.missed_after_secs * 1000,
            seed: None,
        }
    }
}

/// Result of one session operation.
#[derive(Debug, Clone, Serialize)]
pub struct Turn {
    pub session_id: String,
    pub reply: EngineReply,
    pub state: SessionState,
    /// Records appended by this operation, in order.
    pub records: Vec<EventRecord>,
    /// Fluid progress after a volume answer was recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<Remaining>,
    /// The request id was already processed; nothing new was appended.
    pub duplicate: bool,
}

struct Live {
    flow: Arc<SurveyFlow>,
    state: SessionState,
    replies: HashMap<String, EngineReply>,
}

pub struct Service {
    store: Arc<EventStore>,
    catalog: FlowCatalog,
    engine: Engine,
    config: ServiceConfig,
    accounts: RwLock<Accounts>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
    nudges: Mutex<NudgeBook>,
    nudge_horizon: Mutex<Option<Timestamp>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Service {
    pub fn new(store: Arc<EventStore>, catalog: FlowCatalog, config: ServiceConfig) -> Result<Self, ServiceError> {
        let accounts = match config.seed {
            Some(seed) => Accounts::load_seeded(store.clone(), config.accounts.clone(), seed)?,
            None => Accounts::load(store.clone(), config.accounts.clone())?,
        };
        for (_, times) in &config.flow_times {
            for t in times {
                parse_hhmm(t)?;
            }
        }
        let service = Service {
            store,
            catalog,
            engine: Engine::new(config.engine),
            nudges: Mutex::new(NudgeBook::with_grace(config.missed_after_ms)),
            config,
            accounts: RwLock::new(accounts),
            sessions: Mutex::new(HashMap::new()),
            nudge_horizon: Mutex::new(None),
        };
        service.recover()?;
        Ok(service)
    }

    /// Service over the file store named in `cfg`.
    pub fn open(cfg: &Config) -> Result<Self, ServiceError> {
        let store = Arc::new(EventStore::open(&cfg.store_path)?);
        Self::new(store, FlowCatalog::builtin(), ServiceConfig::from_config(cfg))
    }

    /// Reloads sessions that were still running when the log was last written.
    fn recover(&self) -> Result<(), ServiceError> {
        for id in self.store.stream_ids() {
            if id.starts_with("user:") {
                continue;
            }
            let records = self.store.read_stream(&id, 1)?;
            if records.first().map(|r| r.kind) != Some(EventKind::SessionStarted) {
                continue;
            }
            let state = replay(&records)?;
            if state.phase.is_terminal() {
                continue;
            }
            if let Some(flow) = self.catalog.get(&state.flow_id) {
                lock(&self.sessions).insert(id, Arc::new(Mutex::new(Live { flow, state, replies: HashMap::new() })));
            }
        }
        Ok(())
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn catalog(&self) -> &FlowCatalog {
        &self.catalog
    }

    pub fn engine_config(&self) -> EngineConfig {
        self.engine.config
    }

    fn accounts(&self) -> RwLockReadGuard<'_, Accounts> {
        self.accounts.read().unwrap_or_else(|e| e.into_inner())
    }

    fn accounts_mut(&self) -> RwLockWriteGuard<'_, Accounts> {
        self.accounts.write().unwrap_or_else(|e| e.into_inner())
    }

    // ---- accounts

    pub fn enroll(
        &self,
        user_id: &str,
        display_name: &str,
        password: &str,
        timezone: Option<&str>,
        now: Timestamp,
    ) -> Result<UserProfile, ServiceError> {
        let tz = timezone.unwrap_or(&self.config.default_timezone);
        Ok(self.accounts_mut().enroll(user_id, display_name, password, tz, now)?)
    }

    pub fn issue_api_token(&self, user_id: &str, now: Timestamp) -> Result<String, ServiceError> {
        Ok(self.accounts_mut().issue_api_token(user_id, now)?)
    }

    pub fn authenticate(&self, token: &str) -> Option<String> {
        self.accounts().authenticate(token).map(str::to_string)
    }

    pub fn profile(&self, user_id: &str) -> Result<UserProfile, ServiceError> {
        self.accounts().get(user_id).cloned().ok_or_else(|| ServiceError::UnknownUser(user_id.to_string()))
    }

    pub fn profiles(&self) -> Vec<UserProfile> {
        self.accounts().profiles().cloned().collect()
    }

    pub fn begin_link(&self, user_id: &str, now: Timestamp) -> Result<LinkToken, ServiceError> {
        Ok(self.accounts_mut().begin_link(user_id, now)?)
    }

    pub fn link_token_owner(&self, token: &str) -> Option<String> {
        self.accounts().link_token_owner(token).map(str::to_string)
    }

    pub fn confirm_link(&self, token: &str, password: &str, now: Timestamp) -> Result<UserProfile, ServiceError> {
        Ok(self.accounts_mut().confirm_link(token, password, now)?)
    }

    pub fn set_goal(&self, user_id: &str, goal_ml: i64, mode: GoalMode, now: Timestamp) -> Result<UserProfile, ServiceError> {
        Ok(self.accounts_mut().set_goal(user_id, goal_ml, mode, now)?)
    }

    // ---- sessions

    pub fn start_session(&self, user_id: &str, flow_id: &str, now: Timestamp) -> Result<Turn, ServiceError> {
        let id = format!("s-{}", uuid::Uuid::new_v4().simple());
        self.start_session_with_id(&id, user_id, flow_id, now)
    }

    /// Starts whichever flow `utterance` invokes ("talk to fluid monitor").
    pub fn start_by_invocation(&self, user_id: &str, utterance: &str, now: Timestamp) -> Result<Turn, ServiceError> {
        let flow_id = self
            .catalog
            .match_invocation(utterance)
            .ok_or_else(|| ServiceError::NoInvocationMatch(utterance.to_string()))?;
        self.start_session(user_id, &flow_id, now)
    }

    pub fn start_session_with_id(&self, session_id: &str, user_id: &str, flow_id: &str, now: Timestamp) -> Result<Turn, ServiceError> {
        let flow = self.catalog.get(flow_id).ok_or_else(|| ServiceError::UnknownFlow(flow_id.to_string()))?;
        let profile = self.profile(user_id)?;
        let mut sessions = lock(&self.sessions);
        if sessions.contains_key(session_id) || self.store.last_seq(session_id) > 0 {
            return Err(ServiceError::DuplicateSession(session_id.to_string()));
        }
        let step = self.engine.start_session(session_id, &profile, &flow, now)?;
        let records = self.persist(&step, now)?;
        let turn = self.turn(step, records);
        if !turn.state.phase.is_terminal() {
            let live = Live { flow, state: turn.state.clone(), replies: HashMap::new() };
            sessions.insert(session_id.to_string(), Arc::new(Mutex::new(live)));
        }
        Ok(turn)
    }

    fn persist(&self, step: &Step, at: Timestamp) -> Result<Vec<EventRecord>, ServiceError> {
        let ids = step.state.ids();
        let mut out = Vec::with_capacity(step.events.len());
        for e in &step.events {
            out.push(self.store.append(&ids.session_id, e.kind(), e.to_payload(&ids), at)?);
        }
        Ok(out)
    }

    fn turn(&self, step: Step, records: Vec<EventRecord>) -> Turn {
        let progress = step.reply.recorded.as_ref().and_then(|r| match r.value {
            crate::parsers::AnswerValue::Volume(_) => self.remaining(&step.state.user_id, records.last()?.at).ok(),
            _ => None,
        });
        Turn { session_id: step.state.session_id.clone(), reply: step.reply, state: step.state, records, progress, duplicate: false }
    }

    fn live(&self, session_id: &str) -> Result<Arc<Mutex<Live>>, ServiceError> {
        if let Some(l) = lock(&self.sessions).get(session_id) {
            return Ok(l.clone());
        }
        let records = self.store.read_stream(session_id, 1)?;
        if records.is_empty() {
            return Err(ServiceError::UnknownSession(session_id.to_string()));
        }
        let state = replay(&records)?;
        let flow = self.catalog.get(&state.flow_id).ok_or_else(|| ServiceError::UnknownFlow(state.flow_id.clone()))?;
        Ok(Arc::new(Mutex::new(Live { flow, state, replies: HashMap::new() })))
    }

    /// Runs one engine step under the session lock. The in-memory state only
    /// advances once every event of the step is in the log; on a storage
    /// failure it is rebuilt from the log.
    fn step_locked(&self, live: &mut Live, step: Step, at: Timestamp) -> Result<Turn, ServiceError> {
        match self.persist(&step, at) {
            Ok(records) => {
                live.state = step.state.clone();
                Ok(self.turn(step, records))
            }
            Err(e) => {
                if let Ok(records) = self.store.read_stream(&live.state.session_id, 1) {
                    if let Ok(state) = replay(&records) {
                        live.state = state;
                    }
                }
                Err(e)
            }
        }
    }

    fn after_step(&self, turn: &Turn) {
        if turn.state.phase.is_terminal() {
            lock(&self.sessions).remove(&turn.session_id);
            if turn.state.phase == Phase::Completed {
                lock(&self.nudges).session_completed(&turn.state.user_id, &turn.state.flow_id, turn.state.started_at);
            }
        }
    }

    /// Handles a respondent's answer. If the deadline already passed, the
    /// timeout is applied first and the answer goes to the re-prompt.
    pub fn utterance(&self, session_id: &str, utterance: &Utterance, now: Timestamp) -> Result<Turn, ServiceError> {
        let live = self.live(session_id)?;
        let mut live = lock(&live);
        if let Some(rid) = &utterance.request_id {
            if live.state.request_ids.contains(rid) {
                let reply = live.replies.get(rid).cloned().unwrap_or_else(|| EngineReply {
                    say: live.state.last_prompt.clone().unwrap_or_default(),
                    session_status: live.state.phase,
                    recorded: None,
                });
                return Ok(Turn {
                    session_id: session_id.to_string(),
                    reply,
                    state: live.state.clone(),
                    records: Vec::new(),
                    progress: None,
                    duplicate: true,
                });
            }
        }
        let mut records = Vec::new();
        if live.state.deadline.is_some_and(|d| now > d) {
            let step = self.engine.handle_timeout(&live.flow, &live.state, now)?;
            let t = self.step_locked(&mut live, step, now)?;
            if t.state.phase.is_terminal() {
                drop(live);
                self.after_step(&t);
                return Err(EngineError::Terminal("abandoned").into());
            }
            records = t.records;
        }
        let step = self.engine.handle_utterance(&live.flow, &live.state, utterance, now)?;
        let mut turn = self.step_locked(&mut live, step, now)?;
        if let Some(rid) = &utterance.request_id {
            live.replies.insert(rid.clone(), turn.reply.clone());
        }
        records.append(&mut turn.records);
        turn.records = records;
        drop(live);
        self.after_step(&turn);
        Ok(turn)
    }

    /// Reports silence. With `force`, the deadline is treated as passed.
    pub fn timeout(&self, session_id: &str, now: Timestamp, force: bool) -> Result<Turn, ServiceError> {
        let live = self.live(session_id)?;
        let mut live = lock(&live);
        let at = match (force, live.state.deadline) {
            (true, Some(d)) if now <= d => d + 1,
            _ => now,
        };
        let step = self.engine.handle_timeout(&live.flow, &live.state, at)?;
        let turn = self.step_locked(&mut live, step, at)?;
        drop(live);
        self.after_step(&turn);
        Ok(turn)
    }

    /// Injects a timeout into every session whose deadline has passed.
    pub fn sweep(&self, now: Timestamp) -> Vec<Turn> {
        let expired: Vec<String> = {
            let sessions = lock(&self.sessions);
            sessions
                .iter()
                .filter(|(_, l)| lock(l).state.deadline.is_some_and(|d| now > d))
                .map(|(id, _)| id.clone())
                .collect()
        };
        expired.iter().filter_map(|id| self.timeout(id, now, false).ok()).collect()
    }

    pub fn session(&self, session_id: &str) -> Result<SessionState, ServiceError> {
        let live = self.live(session_id)?;
        let state = lock(&live).state.clone();
        Ok(state)
    }

    pub fn session_records(&self, session_id: &str, from_seq: u64) -> Result<Vec<EventRecord>, ServiceError> {
        let records = self.store.read_stream(session_id, from_seq)?;
        if records.is_empty() && self.store.last_seq(session_id) == 0 {
            return Err(ServiceError::UnknownSession(session_id.to_string()));
        }
        Ok(records)
    }

    pub fn live_session_ids(&self) -> Vec<String> {
        lock(&self.sessions).keys().cloned().collect()
    }

    /// (session, user, deadline) for every running session awaiting input.
    pub fn live_deadlines(&self) -> Vec<(String, String, Timestamp)> {
        let sessions: Vec<_> = lock(&self.sessions).values().cloned().collect();
        sessions
            .iter()
            .filter_map(|l| {
                let l = lock(l);
                Some((l.state.session_id.clone(), l.state.user_id.clone(), l.state.deadline?))
            })
            .collect()
    }

    // ---- scheduling

    pub fn schedules_for(&self, profile: &UserProfile) -> Result<Vec<UserSchedule>, ServiceError> {
        let tz: Tz = profile.tz();
        self.config
            .flow_times
            .iter()
            .filter(|(_, times)| !times.is_empty())
            .map(|(flow, times)| {
                let refs: Vec<&str> = times.iter().map(String::as_str).collect();
                Ok(UserSchedule {
                    user_id: profile.user_id.clone(),
                    schedule: Schedule::from_hhmm(&profile.schedule_ref, flow, &refs, tz)?,
                })
            })
            .collect()
    }

    /// Materializes nudges up to a day ahead, fires the due ones and expires
    /// stale ones. Returns the nudges that fired now.
    pub fn tick_nudges(&self, now: Timestamp) -> Result<Vec<Nudge>, ServiceError> {
        let mut schedules = Vec::new();
        for p in self.profiles() {
            schedules.extend(self.schedules_for(&p)?);
        }
        let mut horizon = lock(&self.nudge_horizon);
        let from = horizon.unwrap_or(now);
        let to = now + 24 * MS_PER_HOUR;
        let mut book = lock(&self.nudges);
        if from < to {
            book.merge(due_nudges(&schedules, from, to));
            *horizon = Some(to);
        }
        let fired = book.fire_due(now);
        book.expire(now);
        Ok(fired)
    }

    pub fn nudges_for(&self, user_id: &str) -> Vec<Nudge> {
        lock(&self.nudges).for_user(user_id)
    }

    pub fn all_nudges(&self) -> Vec<Nudge> {
        lock(&self.nudges).all()
    }

    // ---- analytics

    pub fn ledger(&self) -> Result<FluidLedger, ServiceError> {
        let records = self.store.scan(&ExportFilter::all().kind(EventKind::AnswerCommitted))?;
        let zones: HashMap<String, Tz> = self.profiles().into_iter().map(|p| (p.user_id.clone(), p.tz())).collect();
        let default: Tz = self.config.default_timezone.parse().unwrap_or(Tz::UTC);
        Ok(FluidLedger::from_records(&records, |u| zones.get(u).copied().unwrap_or(default)))
    }

    pub fn fluid_summary(&self, user_id: &str, from: NaiveDate, to: NaiveDate) -> Result<Vec<FluidDaySummary>, ServiceError> {
        let profile = self.profile(user_id)?;
        if from > to {
            return Err(ServiceError::BadRequest("`from` is after `to`".into()));
        }
        Ok(self.ledger()?.range_summary(&profile, from, to))
    }

    pub fn remaining(&self, user_id: &str, now: Timestamp) -> Result<Remaining, ServiceError> {
        let profile = self.profile(user_id)?;
        let date = now.local_date(profile.tz());
        let total = self.ledger()?.total(user_id, date);
        Ok(remaining_today(&profile, date, total))
    }

    pub fn sleep_summary(&self, user_id: &str, from: NaiveDate, to: NaiveDate) -> Result<Vec<SleepRow>, ServiceError> {
        let profile = self.profile(user_id)?;
        let flows: Vec<String> = self
            .catalog
            .iter()
            .filter(|f| f.questions.iter().any(|q| q.answer_kind == AnswerKind::CountPlusDuration))
            .map(|f| f.flow_id.clone())
            .collect();
        let records = self.store.scan(&ExportFilter::all().user(user_id))?;
        let mut rows: Vec<SleepRow> = flows
            .iter()
            .flat_map(|f| sleep_rows(&records, user_id, f, profile.tz()))
            .filter(|r| r.diary_date >= from && r.diary_date <= to)
            .collect();
        rows.sort_by_key(|r| r.diary_date);
        Ok(rows)
    }

    pub fn mean_daily_consumption(
        &self,
        users: Option<&BTreeSet<String>>,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<MeanPoint>, ServiceError> {
        Ok(self.ledger()?.mean_daily_consumption(users, from, to))
    }

    pub fn export(&self, filter: &ExportFilter, format: ExportFormat) -> Result<Vec<u8>, ServiceError> {
        Ok(self.store.export_to_vec(filter, format)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: Timestamp = Timestamp(1_529_326_800_000); // 2018-06-18 09:00 New York

    fn service() -> Service {
        let cfg = ServiceConfig { seed: Some(3), ..ServiceConfig::default() };
        let s = Service::new(Arc::new(EventStore::in_memory()), FlowCatalog::builtin(), cfg).unwrap();
        s.enroll("P01", "Pat", "pw", None, T0).unwrap();
        s
    }

    fn say(s: &Service, id: &str, text: &str, now: Timestamp) -> Turn {
        s.utterance(id, &Utterance::text(text), now).unwrap()
    }

    #[test]
    fn fluid_session_end_to_end() {
        let s = service();
        let t = s.start_session("P01", "fluidmonitor", T0).unwrap();
        let id = t.session_id.clone();
        for (i, text) in ["P01", "yes", "4", "yes", "2 cups"].iter().enumerate() {
            say(&s, &id, text, T0 + (i as i64 + 1) * 1000);
        }
        let done = say(&s, &id, "yes", T0 + 6000);
        assert_eq!(done.state.phase, Phase::Completed);
        assert_eq!(done.progress.unwrap().total_ml, 473);
        assert!(s.live_session_ids().is_empty());
        let replayed = replay(&s.session_records(&id, 1).unwrap()).unwrap();
        assert_eq!(replayed, done.state);
        assert_eq!(s.session(&id).unwrap(), done.state);
    }

    #[test]
    fn duplicate_request_id_is_not_recommitted() {
        let s = service();
        let id = s.start_session("P01", "fluidmonitor", T0).unwrap().session_id;
        let u = Utterance { text: "P01".into(), request_id: Some("r1".into()), client_ts: Some(5) };
        let first = s.utterance(&id, &u, T0 + 1000).unwrap();
        let again = s.utterance(&id, &u, T0 + 2000).unwrap();
        assert!(again.duplicate);
        assert!(again.records.is_empty());
        assert_eq!(again.reply, first.reply);
        assert_eq!(s.session_records(&id, 1).unwrap().len(), first.state.events_applied as usize);
    }

    #[test]
    fn sweeper_times_out_and_abandons() {
        let s = service();
        let id = s.start_session("P01", "fluidmonitor", T0).unwrap().session_id;
        assert!(s.sweep(T0 + 5000).is_empty());
        assert_eq!(s.sweep(T0 + 10_001).len(), 1);
        let t = s.sweep(T0 + 30_000);
        assert_eq!(t[0].state.phase, Phase::Abandoned);
        let kinds: Vec<EventKind> = s.session_records(&id, 1).unwrap().iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            [
                EventKind::SessionStarted,
                EventKind::PromptIssued,
                EventKind::Timeout,
                EventKind::PromptIssued,
                EventKind::Timeout,
                EventKind::SessionAbandoned
            ]
        );
    }

    #[test]
    fn late_answer_goes_to_reprompt() {
        let s = service();
        let id = s.start_session("P01", "fluidmonitor", T0).unwrap().session_id;
        let t = say(&s, &id, "P01", T0 + 15_000);
        assert_eq!(t.records[0].kind, EventKind::Timeout);
        assert_eq!(t.state.phase, Phase::AwaitReadbackConfirm);
    }

    #[test]
    fn sessions_survive_restart() {
        let store = Arc::new(EventStore::in_memory());
        let cfg = ServiceConfig { seed: Some(1), ..ServiceConfig::default() };
        let s = Service::new(store.clone(), FlowCatalog::builtin(), cfg.clone()).unwrap();
        s.enroll("P01", "Pat", "pw", None, T0).unwrap();
        let id = s.start_session("P01", "sleepy", T0).unwrap().session_id;
        say(&s, &id, "10:15pm", T0 + 1000);
        let before = s.session(&id).unwrap();
        drop(s);
        let s2 = Service::new(store, FlowCatalog::builtin(), cfg).unwrap();
        assert_eq!(s2.live_session_ids(), vec![id.clone()]);
        assert_eq!(s2.session(&id).unwrap(), before);
        assert_eq!(say(&s2, &id, "yes", T0 + 2000).state.answers.len(), 1);
    }

    #[test]
    fn invocation_and_unknowns() {
        let s = service();
        let t = s.start_by_invocation("P01", "Hey Google, talk to Sleepy", T0).unwrap();
        assert_eq!(t.state.flow_id, "sleepy");
        assert!(matches!(s.start_session("P09", "sleepy", T0), Err(ServiceError::UnknownUser(_))));
        assert!(matches!(s.start_session("P01", "nope", T0), Err(ServiceError::UnknownFlow(_))));
        assert!(matches!(s.session("missing"), Err(ServiceError::UnknownSession(_))));
    }

    #[test]
    fn nudges_fire_and_complete() {
        let s = service();
        let start = Timestamp(T0.0 - 30 * 60 * 1000);
        assert!(s.tick_nudges(start).unwrap().is_empty());
        let fired = s.tick_nudges(T0).unwrap();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].flow_id, "fluidmonitor");
        let id = s.start_session("P01", "fluidmonitor", T0 + 60_000).unwrap().session_id;
        for (i, text) in ["P01", "yes", "4", "yes", "1 cup", "yes"].iter().enumerate() {
            say(&s, &id, text, T0 + 61_000 + i as i64 * 1000);
        }
        let nudges = s.nudges_for("P01");
        assert!(nudges.iter().any(|n| n.status == crate::scheduler::NudgeStatus::CompletedSession));
    }
}
