use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{CommitStatus, PromptReason, ReadbackOutcome, SessionEvent, SessionIds, Started};
use crate::parsers::AnswerValue;
use crate::store::EventRecord;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    AwaitAnswer,
    AwaitReadbackConfirm,
    Completed,
    Abandoned,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Completed | Phase::Abandoned)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::AwaitAnswer => "AWAIT_ANSWER",
            Phase::AwaitReadbackConfirm => "AWAIT_READBACK_CONFIRM",
            Phase::Completed => "COMPLETED",
            Phase::Abandoned => "ABANDONED",
        }
    }
}

/// A session as a pure fold of its events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub user_id: String,
    pub flow_id: String,
    pub phase: Phase,
    pub current_question: Option<String>,
    pub pending_value: Option<AnswerValue>,
    /// Utterance that produced `pending_value`.
    pub pending_raw: Option<String>,
    pub reprompts_used_this_question: u8,
    pub retries_used_this_question: u8,
    pub readback_retries_used_this_question: u8,
    pub corrections_used_this_question: u8,
    pub answers: IndexMap<String, AnswerValue>,
    pub answer_status: IndexMap<String, CommitStatus>,
    pub skipped_questions: Vec<String>,
    pub readback_enabled: bool,
    pub linked: bool,
    pub timeout_ms: i64,
    pub deadline: Option<Timestamp>,
    pub last_prompt: Option<String>,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
    pub request_ids: Vec<String>,
    pub events_applied: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("no events to replay")]
    Empty,
    #[error("first event is not SESSION_STARTED")]
    NoStart,
    #[error("sequence gap: expected {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("events from more than one session (`{0}` and `{1}`)")]
    MixedSessions(String, String),
    #[error("event {seq} is malformed: {message}")]
    Malformed { seq: u64, message: String },
    #[error("event {seq} arrived after the session ended")]
    AfterEnd { seq: u64 },
}

impl SessionState {
    pub fn ids(&self) -> SessionIds {
        SessionIds { session_id: self.session_id.clone(), user_id: self.user_id.clone(), flow_id: self.flow_id.clone() }
    }

    fn begin(ids: &SessionIds, s: &Started, at: Timestamp) -> Self {
        SessionState {
            session_id: ids.session_id.clone(),
            user_id: ids.user_id.clone(),
            flow_id: ids.flow_id.clone(),
            phase: Phase::AwaitAnswer,
            current_question: None,
            pending_value: None,
            pending_raw: None,
            reprompts_used_this_question: 0,
            retries_used_this_question: 0,
            readback_retries_used_this_question: 0,
            corrections_used_this_question: 0,
            answers: IndexMap::new(),
            answer_status: IndexMap::new(),
            skipped_questions: s.skipped_questions.clone(),
            readback_enabled: s.readback_enabled,
            linked: s.linked,
            timeout_ms: s.timeout_ms,
            deadline: None,
            last_prompt: None,
            started_at: at,
            ended_at: None,
            request_ids: Vec::new(),
            events_applied: 1,
        }
    }

    /// Starts a state from a `SESSION_STARTED` event.
    pub fn from_start(ids: &SessionIds, event: &SessionEvent, at: Timestamp) -> Option<Self> {
        match event {
            SessionEvent::Started(s) => Some(Self::begin(ids, s, at)),
            _ => None,
        }
    }

    fn reset_question_counters(&mut self) {
        self.reprompts_used_this_question = 0;
        self.retries_used_this_question = 0;
        self.readback_retries_used_this_question = 0;
        self.corrections_used_this_question = 0;
        self.pending_value = None;
        self.pending_raw = None;
    }

    /// Folds one event into the state. The live engine and replay both go
    /// through here, which is what makes replay exact.
    pub fn apply(&mut self, event: &SessionEvent, at: Timestamp) {
        self.events_applied += 1;
        match event {
            SessionEvent::Started(_) => {}
            SessionEvent::PromptIssued(e) => {
                if self.current_question.as_deref() != Some(e.question_id.as_str()) {
                    self.reset_question_counters();
                    self.current_question = Some(e.question_id.clone());
                }
                match e.reason {
                    PromptReason::Reprompt => self.reprompts_used_this_question += 1,
                    PromptReason::Retry => self.retries_used_this_question += 1,
                    PromptReason::Initial | PromptReason::Next | PromptReason::Correction => {}
                }
                self.phase = Phase::AwaitAnswer;
                self.pending_value = None;
                self.deadline = Some(at + self.timeout_ms);
                self.last_prompt = Some(e.text.clone());
            }
            SessionEvent::UtteranceReceived(e) => {
                if self.phase == Phase::AwaitAnswer {
                    self.pending_raw = Some(e.text.clone());
                }
                if let Some(id) = &e.request_id {
                    self.request_ids.push(id.clone());
                }
            }
            SessionEvent::ReadbackIssued(e) => {
                match e.reason {
                    PromptReason::Reprompt => self.reprompts_used_this_question += 1,
                    PromptReason::Retry => self.readback_retries_used_this_question += 1,
                    _ => {}
                }
                self.phase = Phase::AwaitReadbackConfirm;
                self.pending_value = Some(e.value.clone());
                self.deadline = Some(at + self.timeout_ms);
                self.last_prompt = Some(e.text.clone());
            }
            SessionEvent::ReadbackResult(e) => {
                if e.outcome == ReadbackOutcome::Rejected {
                    self.corrections_used_this_question += 1;
                    self.pending_value = None;
                }
            }
            SessionEvent::AnswerCommitted(e) => {
                self.answers.insert(e.question_id.clone(), e.value.clone());
                self.answer_status.insert(e.question_id.clone(), e.status);
                self.pending_value = None;
                self.deadline = None;
            }
            SessionEvent::Timeout(_) => {
                self.deadline = None;
            }
            SessionEvent::Completed(e) | SessionEvent::Abandoned(e) => {
                self.phase = if matches!(event, SessionEvent::Completed(_)) { Phase::Completed } else { Phase::Abandoned };
                self.ended_at = Some(at);
                self.deadline = None;
                self.current_question = None;
                self.pending_value = None;
                self.pending_raw = None;
                self.last_prompt = Some(e.text.clone());
            }
        }
    }

    /// Answers flagged as not confirmed by the respondent.
    pub fn unconfirmed(&self) -> Vec<&str> {
        self.answer_status
            .iter()
            .filter(|(_, s)| **s == CommitStatus::Unconfirmed)
            .map(|(q, _)| q.as_str())
            .collect()
    }
}

/// Rebuilds a session from a prefix of its log.
pub fn replay(records: &[EventRecord]) -> Result<SessionState, ReplayError> {
    let first = records.first().ok_or(ReplayError::Empty)?;
    let mut state: Option<SessionState> = None;
    for (i, record) in records.iter().enumerate() {
        let expected = i as u64 + 1;
        if record.seq != expected {
            return Err(ReplayError::Gap { expected, found: record.seq });
        }
        if record.stream_id != first.stream_id {
            return Err(ReplayError::MixedSessions(first.stream_id.clone(), record.stream_id.clone()));
        }
        let (ids, event) = SessionEvent::from_record(record)
            .map_err(|e| ReplayError::Malformed { seq: record.seq, message: e.to_string() })?;
        match state.as_mut() {
            None => state = Some(SessionState::from_start(&ids, &event, record.at).ok_or(ReplayError::NoStart)?),
            Some(s) => {
                if ids.session_id != s.session_id {
                    return Err(ReplayError::MixedSessions(s.session_id.clone(), ids.session_id));
                }
                if s.phase.is_terminal() {
                    return Err(ReplayError::AfterEnd { seq: record.seq });
                }
                s.apply(&event, record.at);
            }
        }
    }
    state.ok_or(ReplayError::Empty)
}
