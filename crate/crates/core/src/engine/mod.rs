//! Session state machine: prompt, await an utterance, parse, optionally read
//! the value back for confirmation, record, advance.
//!
//! The engine is event-driven and holds no timers. Each operation takes the
//! current [`SessionState`] and returns the events it decided on, already
//! folded into a new state. Persisting those events and replaying them with
//! [`replay`] reproduces the state exactly.
//!
//! Per question the respondent gets one re-prompt after a timeout, one retry
//! after an unparseable answer, one retry after an unclear yes/no, and up to
//! two corrections after rejecting a read-back.

pub mod events;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounts::UserProfile;
use crate::flow::{BranchTarget, FlowError, Question, SurveyFlow};
use crate::parsers::{self, AnswerKind, AnswerValue, ParseFailure, Parsed, YesNo};
use crate::time::Timestamp;

pub use events::{CommitStatus, PromptReason, ReadbackOutcome, SessionEvent, SessionIds};
pub use state::{replay, Phase, ReplayError, SessionState};

use events::*;

pub const DEFAULT_TIMEOUT_MS: i64 = 10_000;
pub const MAX_CORRECTIONS: u8 = 2;

const SKIP_WORDS: &[&str] = &["skip", "pass", "skip it", "skip this", "skip this one", "next", "next question"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub timeout_ms: i64,
    /// Overrides each flow's own read-back setting when set.
    pub readback: Option<bool>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { timeout_ms: DEFAULT_TIMEOUT_MS, readback: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recorded {
    pub question_id: String,
    pub value: AnswerValue,
    pub canonical: String,
    pub status: CommitStatus,
}

/// What the respondent hears next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineReply {
    pub say: String,
    pub session_status: Phase,
    pub recorded: Option<Recorded>,
}

impl EngineReply {
    /// The reply implied by the events of one step.
    pub fn from_events(events: &[SessionEvent], status: Phase) -> Self {
        let say = events.iter().rev().find_map(SessionEvent::spoken_text).unwrap_or_default().to_string();
        let recorded = events.iter().rev().find_map(|e| match e {
            SessionEvent::AnswerCommitted(c) => Some(Recorded {
                question_id: c.question_id.clone(),
                value: c.value.clone(),
                canonical: c.value.canonical(),
                status: c.status,
            }),
            _ => None,
        });
        EngineReply { say, session_status: status, recorded }
    }
}

/// One engine transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
    pub reply: EngineReply,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid flow: {0}")]
    InvalidFlow(#[from] FlowError),
    #[error("session belongs to flow `{session}`, not `{given}`")]
    FlowMismatch { session: String, given: String },
    #[error("session already {0}")]
    Terminal(&'static str),
    #[error("deadline passed at {deadline}; report the timeout first")]
    DeadlinePassed { deadline: Timestamp },
    #[error("deadline {deadline} has not passed yet")]
    DeadlineNotReached { deadline: Timestamp },
    #[error("session is not waiting for input")]
    InvalidPhase,
    #[error("question `{0}` is not in the flow")]
    UnknownQuestion(String),
}

/// A respondent's turn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    #[serde(default)]
    pub client_ts: Option<i64>,
    #[serde(default)]
    pub request_id: Option<String>,
}

impl Utterance {
    pub fn text(text: impl Into<String>) -> Self {
        Utterance { text: text.into(), ..Default::default() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Engine {
    pub config: EngineConfig,
}

/// Collects events while keeping a working copy of the state in sync.
struct Tx {
    state: SessionState,
    events: Vec<SessionEvent>,
    at: Timestamp,
}

impl Tx {
    fn emit(&mut self, event: SessionEvent) {
        self.state.apply(&event, self.at);
        self.events.push(event);
    }

    fn finish(self) -> Step {
        let reply = EngineReply::from_events(&self.events, self.state.phase);
        Step { state: self.state, events: self.events, reply }
    }
}

fn readback_text(parsed: &Parsed) -> String {
    match parsed.value {
        AnswerValue::Volume(ml) => {
            let cups = (parsers::ml_to_cups(ml) * 2.0).round() / 2.0;
            let unit = if cups == 1.0 { "cup" } else { "cups" };
            format!("I heard {} (about {cups} {unit}) — is that right?", parsed.normalized_echo)
        }
        _ => format!("I heard {} — is that right?", parsed.normalized_echo),
    }
}

fn farewell(flow: &SurveyFlow) -> String {
    format!("Thank you, your {} answers are saved. Goodbye!", flow.title)
}

const ABANDON_TEXT: &str = "I didn't get an answer, so we'll stop here. Your answers so far are saved. Goodbye!";

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine { config }
    }

    fn readback_enabled(&self, flow: &SurveyFlow) -> bool {
        self.config.readback.unwrap_or(flow.readback_enabled)
    }

    /// Opens a session on the first question the user must answer.
    pub fn start_session(
        &self,
        session_id: &str,
        user: &UserProfile,
        flow: &SurveyFlow,
        now: Timestamp,
    ) -> Result<Step, EngineError> {
        flow.validate()?;
        let linked = user.is_linked();
        let skipped: Vec<String> = flow
            .questions
            .iter()
            .filter(|q| linked && q.answer_kind == AnswerKind::UserIdConfirm)
            .map(|q| q.question_id.clone())
            .collect();
        let ids = SessionIds { session_id: session_id.to_string(), user_id: user.user_id.clone(), flow_id: flow.flow_id.clone() };
        let started = SessionEvent::Started(Started {
            readback_enabled: self.readback_enabled(flow),
            timeout_ms: self.config.timeout_ms,
            linked,
            skipped_questions: skipped.clone(),
        });
        let state = SessionState::from_start(&ids, &started, now).expect("start event");
        let mut tx = Tx { state, events: vec![started], at: now };
        match flow.questions.iter().find(|q| !skipped.contains(&q.question_id)) {
            Some(q) => tx.emit(SessionEvent::PromptIssued(PromptIssued {
                question_id: q.question_id.clone(),
                text: q.prompt_text.clone(),
                reason: PromptReason::Initial,
            })),
            None => tx.emit(SessionEvent::Completed(Ended { text: farewell(flow), reason: None })),
        }
        Ok(tx.finish())
    }

    fn check_live<'f>(&self, state: &SessionState, flow: &'f SurveyFlow) -> Result<&'f Question, EngineError> {
        if state.flow_id != flow.flow_id {
            return Err(EngineError::FlowMismatch { session: state.flow_id.clone(), given: flow.flow_id.clone() });
        }
        match state.phase {
            Phase::Completed => return Err(EngineError::Terminal("completed")),
            Phase::Abandoned => return Err(EngineError::Terminal("abandoned")),
            _ => {}
        }
        let qid = state.current_question.as_deref().ok_or(EngineError::InvalidPhase)?;
        flow.question(qid).ok_or_else(|| EngineError::UnknownQuestion(qid.to_string()))
    }

    pub fn handle_utterance(
        &self,
        flow: &SurveyFlow,
        state: &SessionState,
        utterance: &Utterance,
        now: Timestamp,
    ) -> Result<Step, EngineError> {
        let question = self.check_live(state, flow)?;
        if let Some(deadline) = state.deadline {
            if now > deadline {
                return Err(EngineError::DeadlinePassed { deadline });
            }
        }
        let mut tx = Tx { state: state.clone(), events: Vec::new(), at: now };
        tx.emit(SessionEvent::UtteranceReceived(UtteranceReceived {
            question_id: question.question_id.clone(),
            text: utterance.text.clone(),
            client_ts: utterance.client_ts,
            request_id: utterance.request_id.clone(),
        }));
        match state.phase {
            Phase::AwaitAnswer => self.on_answer(flow, question, &utterance.text, &mut tx),
            Phase::AwaitReadbackConfirm => self.on_confirmation(flow, question, &utterance.text, &mut tx),
            Phase::Completed | Phase::Abandoned => unreachable!("checked by check_live"),
        }
        Ok(tx.finish())
    }

    fn parse_for(&self, question: &Question, state: &SessionState, text: &str) -> Result<Parsed, ParseFailure> {
        let parsed = parsers::parse_answer(question.answer_kind, text)?;
        if question.answer_kind == AnswerKind::UserIdConfirm {
            if let AnswerValue::Text(id) = &parsed.value {
                if !id.eq_ignore_ascii_case(&state.user_id) {
                    return Err(ParseFailure::NoMatch);
                }
            }
        }
        Ok(parsed)
    }

    fn on_answer(&self, flow: &SurveyFlow, q: &Question, text: &str, tx: &mut Tx) {
        let normalized = text.trim().trim_end_matches(['.', '!']).to_lowercase();
        if q.optional_allowed && SKIP_WORDS.contains(&normalized.as_str()) {
            let none = q.answer_kind.none_value().unwrap_or(AnswerValue::None);
            self.commit(flow, q, none, text.to_string(), CommitStatus::Skipped, tx);
            return;
        }
        match self.parse_for(q, &tx.state, text) {
            Ok(parsed) if tx.state.readback_enabled => {
                tx.emit(SessionEvent::ReadbackIssued(ReadbackIssued {
                    question_id: q.question_id.clone(),
                    text: readback_text(&parsed),
                    echo: parsed.normalized_echo,
                    value: parsed.value,
                    reason: PromptReason::Initial,
                }));
            }
            Ok(parsed) => self.commit(flow, q, parsed.value, text.to_string(), CommitStatus::Direct, tx),
            Err(failure) if tx.state.retries_used_this_question == 0 => {
                let lead = match (failure, q.answer_kind) {
                    (ParseFailure::NoMatch, AnswerKind::UserIdConfirm) => "Sorry, that doesn't match the User ID I have.",
                    (ParseFailure::OutOfRange, _) => "Sorry, that answer is out of range.",
                    (ParseFailure::Ambiguous, AnswerKind::ClockTime) => "Sorry, was that am or pm?",
                    (ParseFailure::Ambiguous, _) => "Sorry, I wasn't sure what you meant.",
                    (ParseFailure::NoMatch, _) => "Sorry, I didn't catch that.",
                };
                tx.emit(SessionEvent::PromptIssued(PromptIssued {
                    question_id: q.question_id.clone(),
                    text: format!("{lead} {}", q.prompt_text),
                    reason: PromptReason::Retry,
                }));
            }
            Err(_) if q.optional_allowed => {
                let none = q.answer_kind.none_value().unwrap_or(AnswerValue::None);
                self.commit(flow, q, none, text.to_string(), CommitStatus::Unparsed, tx);
            }
            Err(_) => tx.emit(SessionEvent::Abandoned(Ended {
                text: "Sorry, I still couldn't understand that answer, so we'll stop here. Goodbye!".into(),
                reason: Some("unparsed_answer".into()),
            })),
        }
    }

    fn on_confirmation(&self, flow: &SurveyFlow, q: &Question, text: &str, tx: &mut Tx) {
        let value = tx.state.pending_value.clone().expect("read-back phase has a pending value");
        let raw = tx.state.pending_raw.clone().unwrap_or_default();
        let result = |outcome| {
            SessionEvent::ReadbackResult(ReadbackResult { question_id: q.question_id.clone(), outcome })
        };
        match parsers::parse_yes_no(text) {
            Some(YesNo::Yes) => {
                tx.emit(result(ReadbackOutcome::Confirmed));
                self.commit(flow, q, value, raw, CommitStatus::Confirmed, tx);
            }
            Some(YesNo::No) if tx.state.corrections_used_this_question < MAX_CORRECTIONS => {
                tx.emit(result(ReadbackOutcome::Rejected));
                tx.emit(SessionEvent::PromptIssued(PromptIssued {
                    question_id: q.question_id.clone(),
                    text: format!("Okay, let's try again. {}", q.prompt_text),
                    reason: PromptReason::Correction,
                }));
            }
            Some(YesNo::No) => {
                tx.emit(result(ReadbackOutcome::RejectedLimit));
                self.commit(flow, q, value, raw, CommitStatus::Unconfirmed, tx);
            }
            None if tx.state.readback_retries_used_this_question == 0 => {
                let echo = value.canonical();
                let parsed = Parsed { value: value.clone(), normalized_echo: echo.clone() };
                tx.emit(result(ReadbackOutcome::Unclear));
                tx.emit(SessionEvent::ReadbackIssued(ReadbackIssued {
                    question_id: q.question_id.clone(),
                    text: format!("Please answer yes or no. {}", readback_text(&parsed)),
                    echo,
                    value,
                    reason: PromptReason::Retry,
                }));
            }
            None => {
                tx.emit(result(ReadbackOutcome::Unclear));
                self.commit(flow, q, value, raw, CommitStatus::Unconfirmed, tx);
            }
        }
    }

    fn commit(&self, flow: &SurveyFlow, q: &Question, value: AnswerValue, raw: String, status: CommitStatus, tx: &mut Tx) {
        tx.emit(SessionEvent::AnswerCommitted(AnswerCommitted {
            question_id: q.question_id.clone(),
            value: value.clone(),
            raw,
            status,
        }));
        match self.next_question(flow, &tx.state, &q.question_id, &value) {
            Some(next) => tx.emit(SessionEvent::PromptIssued(PromptIssued {
                question_id: next.question_id.clone(),
                text: next.prompt_text.clone(),
                reason: PromptReason::Next,
            })),
            None => tx.emit(SessionEvent::Completed(Ended { text: farewell(flow), reason: None })),
        }
    }

    fn next_question<'f>(
        &self,
        flow: &'f SurveyFlow,
        state: &SessionState,
        from: &str,
        value: &AnswerValue,
    ) -> Option<&'f Question> {
        let mut target = flow.next_after(from, value);
        // Bounded by flow length so a branch cycle through skipped questions cannot spin.
        for _ in 0..=flow.questions.len() {
            match target {
                BranchTarget::End => return None,
                BranchTarget::Question(id) => {
                    if !state.skipped_questions.contains(&id) {
                        return flow.question(&id);
                    }
                    let pos = flow.position(&id)?;
                    target = match flow.questions.get(pos + 1) {
                        Some(n) => BranchTarget::Question(n.question_id.clone()),
                        None => BranchTarget::End,
                    };
                }
            }
        }
        None
    }

    /// Silence past the deadline: re-prompt once, then abandon.
    pub fn handle_timeout(&self, flow: &SurveyFlow, state: &SessionState, now: Timestamp) -> Result<Step, EngineError> {
        let q = self.check_live(state, flow)?;
        let deadline = state.deadline.ok_or(EngineError::InvalidPhase)?;
        if now <= deadline {
            return Err(EngineError::DeadlineNotReached { deadline });
        }
        let mut tx = Tx { state: state.clone(), events: Vec::new(), at: now };
        tx.emit(SessionEvent::Timeout(TimedOut { question_id: q.question_id.clone() }));
        if state.reprompts_used_this_question >= 1 {
            tx.emit(SessionEvent::Abandoned(Ended { text: ABANDON_TEXT.into(), reason: Some("timeout".into()) }));
            return Ok(tx.finish());
        }
        match (state.phase, &state.pending_value) {
            (Phase::AwaitReadbackConfirm, Some(value)) => {
                let parsed = Parsed { value: value.clone(), normalized_echo: value.canonical() };
                tx.emit(SessionEvent::ReadbackIssued(ReadbackIssued {
                    question_id: q.question_id.clone(),
                    text: format!("Are you still there? {}", readback_text(&parsed)),
                    echo: parsed.normalized_echo.clone(),
                    value: value.clone(),
                    reason: PromptReason::Reprompt,
                }));
            }
            _ => tx.emit(SessionEvent::PromptIssued(PromptIssued {
                question_id: q.question_id.clone(),
                text: format!("Are you still there? {}", q.prompt_text),
                reason: PromptReason::Reprompt,
            })),
        }
        Ok(tx.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounts::{GoalMode, LinkStatus};
    use crate::assets::BuiltinFlows;

    const T0: Timestamp = Timestamp(1_529_316_000_000);

    fn user(linked: bool) -> UserProfile {
        UserProfile {
            user_id: "P01".into(),
            display_name: "Pat".into(),
            link_status: if linked { LinkStatus::Linked } else { LinkStatus::Unlinked },
            secret_hash: String::new(),
            timezone: "America/New_York".into(),
            fluid_goal_ml: 1893,
            goal_mode: GoalMode::Goal,
            schedule_ref: "default".into(),
        }
    }

    struct Run {
        engine: Engine,
        flow: SurveyFlow,
        state: SessionState,
        now: Timestamp,
        log: Vec<SessionEvent>,
        last: EngineReply,
    }

    impl Run {
        fn new(flow: SurveyFlow, linked: bool, readback: Option<bool>) -> Self {
            let engine = Engine::new(EngineConfig { readback, ..EngineConfig::default() });
            let step = engine.start_session("s1", &user(linked), &flow, T0).unwrap();
            Run { engine, flow, state: step.state, now: T0, log: step.events, last: step.reply }
        }

        fn say(&mut self, text: &str) -> &EngineReply {
            self.now = self.now + 1000;
            let step = self.engine.handle_utterance(&self.flow, &self.state, &Utterance::text(text), self.now).unwrap();
            self.absorb(step)
        }

        fn silence(&mut self) -> &EngineReply {
            self.now = self.state.deadline.unwrap() + 1;
            let step = self.engine.handle_timeout(&self.flow, &self.state, self.now).unwrap();
            self.absorb(step)
        }

        fn absorb(&mut self, step: Step) -> &EngineReply {
            self.state = step.state;
            self.log.extend(step.events);
            self.last = step.reply;
            &self.last
        }
    }

    fn fluid() -> SurveyFlow {
        BuiltinFlows::load().fluidmonitor
    }

    #[test]
    fn unlinked_user_confirms_id_first() {
        let run = Run::new(fluid(), false, None);
        assert_eq!(run.last.say, "Please confirm your User ID.");
        assert_eq!(run.state.current_question.as_deref(), Some("user_id"));
        assert_eq!(run.state.deadline, Some(T0 + DEFAULT_TIMEOUT_MS));
    }

    #[test]
    fn linked_user_skips_id() {
        let run = Run::new(fluid(), true, None);
        assert_eq!(run.state.current_question.as_deref(), Some("health_status"));
        assert!(run.last.say.contains("how would you rate your health"));
    }

    #[test]
    fn sleepy_starts_with_bed_time() {
        let run = Run::new(BuiltinFlows::load().sleepy, false, None);
        assert_eq!(run.last.say, "What time did you get into bed?");
    }

    #[test]
    fn readback_then_commit() {
        let mut run = Run::new(fluid(), true, None);
        assert_eq!(run.say("3").say, "I heard 3 — is that right?");
        assert_eq!(run.state.phase, Phase::AwaitReadbackConfirm);
        let reply = run.say("yes").clone();
        assert_eq!(reply.recorded.as_ref().map(|r| r.value.clone()), Some(AnswerValue::Scale(3)));
        assert!(reply.say.contains("How much fluid"));
        assert_eq!(run.state.current_question.as_deref(), Some("fluid_intake"));
    }

    #[test]
    fn volume_readback_mentions_cups() {
        let mut run = Run::new(fluid(), true, None);
        run.say("4");
        run.say("yes");
        assert_eq!(run.say("2 cups").say, "I heard 473 ml (about 2 cups) — is that right?");
        run.say("yeah");
        assert_eq!(run.state.phase, Phase::Completed);
        assert_eq!(run.state.answers.len(), 2);
    }

    #[test]
    fn unparseable_answer_gets_one_retry_then_abandons_required() {
        let mut run = Run::new(fluid(), true, None);
        assert!(run.say("banana").say.starts_with("Sorry, I didn't catch that."));
        assert_eq!(run.state.phase, Phase::AwaitAnswer);
        run.say("banana");
        assert_eq!(run.state.phase, Phase::Abandoned);
    }

    #[test]
    fn optional_question_unparsed_twice_records_none() {
        let flow = BuiltinFlows::load().sleepy;
        let mut run = Run::new(flow, false, Some(false));
        for answer in ["10:15pm", "11:30pm", "1 hr 15 min", "3 times 1 hr 10 min", "6:00am", "6:30am", "Poor"] {
            run.say(answer);
        }
        assert_eq!(run.state.current_question.as_deref(), Some("naps"));
        run.say("purple");
        run.say("purple");
        assert_eq!(run.state.answers["naps"], AnswerValue::Duration(0));
        assert_eq!(run.state.answer_status["naps"], CommitStatus::Unparsed);
        run.say("skip");
        assert_eq!(run.state.answer_status["alcohol"], CommitStatus::Skipped);
    }

    #[test]
    fn wrong_user_id_is_a_parse_failure() {
        let mut run = Run::new(fluid(), false, None);
        assert!(run.say("P02").say.contains("doesn't match"));
        run.say("p 01");
        assert_eq!(run.state.phase, Phase::AwaitReadbackConfirm);
    }

    #[test]
    fn two_corrections_then_unconfirmed() {
        let mut run = Run::new(fluid(), true, None);
        for _ in 0..2 {
            run.say("3");
            assert!(run.say("no").say.starts_with("Okay, let's try again."));
        }
        assert_eq!(run.state.corrections_used_this_question, 2);
        run.say("2");
        run.say("no");
        assert_eq!(run.state.answers["health_status"], AnswerValue::Scale(2));
        assert_eq!(run.state.unconfirmed(), vec!["health_status"]);
    }

    #[test]
    fn unclear_confirmation_retries_once() {
        let mut run = Run::new(fluid(), true, None);
        run.say("3");
        assert!(run.say("maybe").say.starts_with("Please answer yes or no."));
        run.say("hmm");
        assert_eq!(run.state.answer_status["health_status"], CommitStatus::Unconfirmed);
    }

    #[test]
    fn timeout_reprompts_once_then_abandons() {
        let mut run = Run::new(fluid(), true, None);
        run.say("4");
        run.say("yes");
        assert!(run.silence().say.starts_with("Are you still there?"));
        assert_eq!(run.state.reprompts_used_this_question, 1);
        run.silence();
        assert_eq!(run.state.phase, Phase::Abandoned);
        assert_eq!(run.state.answers.len(), 1);
        let err = run.engine.handle_timeout(&run.flow, &run.state, run.now + 100_000).unwrap_err();
        assert_eq!(err, EngineError::Terminal("abandoned"));
    }

    #[test]
    fn timeout_counters_are_per_question() {
        let mut run = Run::new(fluid(), true, None);
        run.silence();
        run.say("4");
        run.say("yes");
        assert_eq!(run.state.reprompts_used_this_question, 0);
        run.silence();
        assert_eq!(run.state.phase, Phase::AwaitAnswer);
    }

    #[test]
    fn timeout_during_readback_repeats_readback() {
        let mut run = Run::new(fluid(), true, None);
        run.say("4");
        assert!(run.silence().say.contains("I heard 4"));
        assert_eq!(run.state.phase, Phase::AwaitReadbackConfirm);
        run.say("yes");
        assert_eq!(run.state.answers["health_status"], AnswerValue::Scale(4));
    }

    #[test]
    fn deadline_rules() {
        let run = Run::new(fluid(), true, None);
        let late = run.state.deadline.unwrap() + 1;
        assert!(matches!(
            run.engine.handle_utterance(&run.flow, &run.state, &Utterance::text("4"), late),
            Err(EngineError::DeadlinePassed { .. })
        ));
        assert!(matches!(
            run.engine.handle_timeout(&run.flow, &run.state, run.state.deadline.unwrap()),
            Err(EngineError::DeadlineNotReached { .. })
        ));
    }

    #[test]
    fn readback_off_commits_directly() {
        let mut run = Run::new(fluid(), false, Some(false));
        run.say("P01");
        run.say("5");
        let reply = run.say("500 ml").clone();
        assert_eq!(run.state.phase, Phase::Completed);
        assert_eq!(reply.recorded.unwrap().status, CommitStatus::Direct);
        assert!(reply.say.contains("Goodbye"));
    }

    #[test]
    fn no_two_prompts_without_input_between() {
        let mut run = Run::new(fluid(), false, None);
        for text in ["x", "P01", "no", "P01", "yes", "4", "huh", "yes"] {
            run.say(text);
        }
        run.silence();
        let mut awaiting = false;
        for e in &run.log {
            match e {
                SessionEvent::PromptIssued(_) | SessionEvent::ReadbackIssued(_) => {
                    assert!(!awaiting, "two prompts in a row");
                    awaiting = true;
                }
                SessionEvent::UtteranceReceived(_) | SessionEvent::Timeout(_) => awaiting = false,
                _ => {}
            }
        }
    }
}
