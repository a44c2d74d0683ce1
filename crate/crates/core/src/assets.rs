//! Flow documents, golden fixtures and sample configuration shipped with the
//! crate. The same files live under `flows/`, `fixtures/` and `config/` at the
//! repository root so other tooling can read them directly.

use serde_json::Value;
use thiserror::Error;

use crate::flow::{load_flow, SurveyFlow};
use crate::parsers::{AnswerKind, AnswerValue};

pub const FLUIDMONITOR_FLOW: &str = include_str!("../../../flows/fluidmonitor.flow");
pub const SLEEPY_FLOW: &str = include_str!("../../../flows/sleepy.flow");
pub const DIARY_CELLS_TSV: &str = include_str!("../../../fixtures/diary_cells.tsv");
pub const DEFAULT_CONF: &str = include_str!("../../../config/default.conf");

pub const TRANSCRIPTS: &[(&str, &str)] = &[
    ("fluidmonitor", include_str!("../../../fixtures/fluidmonitor.transcript")),
    ("sleepy", include_str!("../../../fixtures/sleepy.transcript")),
    ("silence", include_str!("../../../fixtures/silence.transcript")),
];

pub struct BuiltinFlows {
    pub fluidmonitor: SurveyFlow,
    pub sleepy: SurveyFlow,
}

impl BuiltinFlows {
    pub fn load() -> Self {
        BuiltinFlows {
            fluidmonitor: load_flow(FLUIDMONITOR_FLOW).expect("bundled fluidmonitor.flow is valid"),
            sleepy: load_flow(SLEEPY_FLOW).expect("bundled sleepy.flow is valid"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// One diary cell: the utterance and the value it must parse to.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCell {
    pub question_id: String,
    pub kind: AnswerKind,
    pub utterance: String,
    pub expected: AnswerValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TranscriptStep {
    Say(String),
    Silence,
    /// The engine's reply to the previous step contains this text.
    Expect(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub name: String,
    pub flow_id: String,
    pub user_id: String,
    pub linked: bool,
    pub steps: Vec<TranscriptStep>,
    pub expect_status: Option<String>,
    pub expect_answer_count: Option<usize>,
    pub expect_answers: Vec<(String, AnswerValue)>,
}

pub struct Fixtures {
    pub cells: Vec<FixtureCell>,
    pub transcripts: Vec<Transcript>,
}

fn malformed(line: usize, message: impl Into<String>) -> FixtureError {
    FixtureError::Malformed { line, message: message.into() }
}

pub fn parse_cells(tsv: &str) -> Result<Vec<FixtureCell>, FixtureError> {
    let mut cells = Vec::new();
    for (idx, raw) in tsv.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        let [question_id, kind, utterance, expected] = cols.as_slice() else {
            return Err(malformed(line, format!("expected 4 columns, got {}", cols.len())));
        };
        cells.push(FixtureCell {
            question_id: question_id.to_string(),
            kind: kind.parse().map_err(|e| malformed(line, format!("{e}")))?,
            utterance: utterance.to_string(),
            expected: serde_json::from_str(expected).map_err(|e| malformed(line, e.to_string()))?,
        });
    }
    Ok(cells)
}

pub fn parse_transcript(name: &str, text: &str) -> Result<Transcript, FixtureError> {
    let mut t = Transcript {
        name: name.to_string(),
        flow_id: String::new(),
        user_id: String::new(),
        linked: false,
        steps: Vec::new(),
        expect_status: None,
        expect_answer_count: None,
        expect_answers: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end();
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("> ") {
            t.steps.push(TranscriptStep::Say(rest.to_string()));
        } else if trimmed == "~" {
            t.steps.push(TranscriptStep::Silence);
        } else if let Some(rest) = trimmed.strip_prefix("< ") {
            t.steps.push(TranscriptStep::Expect(rest.to_string()));
        } else if let Some(rest) = trimmed.strip_prefix("= ") {
            let (key, value) = rest.split_once(':').ok_or_else(|| malformed(line, "expected `= key: value`"))?;
            let value = value.trim();
            if key == "status" {
                t.expect_status = Some(value.to_string());
            } else if key == "answers" {
                t.expect_answer_count = Some(value.parse().map_err(|_| malformed(line, "answers needs a count"))?);
            } else if let Some(qid) = key.strip_prefix("answer ") {
                let v: Value = serde_json::from_str(value).map_err(|e| malformed(line, e.to_string()))?;
                let v: AnswerValue = serde_json::from_value(v).map_err(|e| malformed(line, e.to_string()))?;
                t.expect_answers.push((qid.trim().to_string(), v));
            } else {
                return Err(malformed(line, format!("unknown expectation `{key}`")));
            }
        } else if let Some((key, value)) = trimmed.split_once(':') {
            let value = value.trim();
            match key.trim() {
                "flow" => t.flow_id = value.to_string(),
                "user" => t.user_id = value.to_string(),
                "linked" => t.linked = value == "true",
                other => return Err(malformed(line, format!("unknown header `{other}`"))),
            }
        } else {
            return Err(malformed(line, "unrecognized line"));
        }
    }
    Ok(t)
}

/// Golden corpus: the diary example row as parser cases plus full transcripts.
pub fn fixtures() -> Fixtures {
    Fixtures {
        cells: parse_cells(DIARY_CELLS_TSV).expect("bundled diary_cells.tsv is valid"),
        transcripts: TRANSCRIPTS
            .iter()
            .map(|(name, text)| parse_transcript(name, text).expect("bundled transcript is valid"))
            .collect(),
    }
}
