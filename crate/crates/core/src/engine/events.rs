use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::parsers::AnswerValue;
use crate::store::{EventKind, EventRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptReason {
    Initial,
    Next,
    /// After a timeout.
    Reprompt,
    /// After an unparseable answer.
    Retry,
    /// After the respondent rejected a read-back.
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReadbackOutcome {
    Confirmed,
    Rejected,
    /// Third rejection: the value is kept but flagged.
    RejectedLimit,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommitStatus {
    /// Read back and confirmed.
    Confirmed,
    /// Recorded without read-back.
    Direct,
    Unconfirmed,
    /// Optional question the respondent skipped.
    Skipped,
    /// Optional question whose answer could not be parsed twice.
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Started {
    pub readback_enabled: bool,
    pub timeout_ms: i64,
    pub linked: bool,
    /// Questions never asked in this session (User ID for linked users).
    pub skipped_questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptIssued {
    pub question_id: String,
    pub text: String,
    pub reason: PromptReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReceived {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadbackIssued {
    pub question_id: String,
    pub value: AnswerValue,
    pub echo: String,
    pub text: String,
    pub reason: PromptReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadbackResult {
    pub question_id: String,
    pub outcome: ReadbackOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCommitted {
    pub question_id: String,
    pub value: AnswerValue,
    pub raw: String,
    pub status: CommitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOut {
    pub question_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ended {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Everything that can happen in a session. Each variant maps to one
/// [`EventKind`]; the payload carries the variant fields plus the session,
/// user and flow ids.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionEvent {
    Started(Started),
    PromptIssued(PromptIssued),
    UtteranceReceived(UtteranceReceived),
    ReadbackIssued(ReadbackIssued),
    ReadbackResult(ReadbackResult),
    AnswerCommitted(AnswerCommitted),
    Timeout(TimedOut),
    Completed(Ended),
    Abandoned(Ended),
}

/// Ids stamped on every payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionIds {
    pub session_id: String,
    pub user_id: String,
    pub flow_id: String,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            SessionEvent::Started(_) => EventKind::SessionStarted,
            SessionEvent::PromptIssued(_) => EventKind::PromptIssued,
            SessionEvent::UtteranceReceived(_) => EventKind::UtteranceReceived,
            SessionEvent::ReadbackIssued(_) => EventKind::ReadbackIssued,
            SessionEvent::ReadbackResult(_) => EventKind::ReadbackResult,
            SessionEvent::AnswerCommitted(_) => EventKind::AnswerCommitted,
            SessionEvent::Timeout(_) => EventKind::Timeout,
            SessionEvent::Completed(_) => EventKind::SessionCompleted,
            SessionEvent::Abandoned(_) => EventKind::SessionAbandoned,
        }
    }

    /// What the respondent hears for this event, if anything.
    pub fn spoken_text(&self) -> Option<&str> {
        match self {
            SessionEvent::PromptIssued(e) => Some(&e.text),
            SessionEvent::ReadbackIssued(e) => Some(&e.text),
            SessionEvent::Completed(e) | SessionEvent::Abandoned(e) => Some(&e.text),
            _ => None,
        }
    }

    pub fn to_payload(&self, ids: &SessionIds) -> Value {
        let body = match self {
            SessionEvent::Started(e) => serde_json::to_value(e),
            SessionEvent::PromptIssued(e) => serde_json::to_value(e),
            SessionEvent::UtteranceReceived(e) => serde_json::to_value(e),
            SessionEvent::ReadbackIssued(e) => serde_json::to_value(e),
            SessionEvent::ReadbackResult(e) => serde_json::to_value(e),
            SessionEvent::AnswerCommitted(e) => serde_json::to_value(e),
            SessionEvent::Timeout(e) => serde_json::to_value(e),
            SessionEvent::Completed(e) | SessionEvent::Abandoned(e) => serde_json::to_value(e),
        }
        .expect("event bodies serialize");
        let mut map = match body {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        map.insert("session_id".into(), Value::String(ids.session_id.clone()));
        map.insert("user_id".into(), Value::String(ids.user_id.clone()));
        map.insert("flow_id".into(), Value::String(ids.flow_id.clone()));
        Value::Object(map)
    }

    pub fn from_record(record: &EventRecord) -> Result<(SessionIds, SessionEvent), serde_json::Error> {
        let ids: SessionIds = serde_json::from_value(record.payload.clone())?;
        let p = record.payload.clone();
        let event = match record.kind {
            EventKind::SessionStarted => SessionEvent::Started(serde_json::from_value(p)?),
            EventKind::PromptIssued => SessionEvent::PromptIssued(serde_json::from_value(p)?),
            EventKind::UtteranceReceived => SessionEvent::UtteranceReceived(serde_json::from_value(p)?),
            EventKind::ReadbackIssued => SessionEvent::ReadbackIssued(serde_json::from_value(p)?),
            EventKind::ReadbackResult => SessionEvent::ReadbackResult(serde_json::from_value(p)?),
            EventKind::AnswerCommitted => SessionEvent::AnswerCommitted(serde_json::from_value(p)?),
            EventKind::Timeout => SessionEvent::Timeout(serde_json::from_value(p)?),
            EventKind::SessionCompleted => SessionEvent::Completed(serde_json::from_value(p)?),
            EventKind::SessionAbandoned => SessionEvent::Abandoned(serde_json::from_value(p)?),
            EventKind::UserParamSet => {
                return Err(serde::de::Error::custom("USER_PARAM_SET is not a session event"));
            }
        };
        Ok((ids, event))
    }
}
