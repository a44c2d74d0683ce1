//! Survey flow model and the line-oriented `.flow` document format.
//!
//! ```text
//! flow_id: fluidmonitor
//! title: Fluid Monitor
//! invocation: talk to fluid monitor
//! cadence: 3
//! readback: true
//!
//! [question]
//! id: health_status
//! prompt: On a scale of 1 to 5, how would you rate your health right now?
//! kind: SCALE_1_5
//! optional: false
//! branch: < 3 -> follow_up
//! ```
//!
//! `branch:` lines are tried in order after an answer is committed; the first
//! matching predicate names the next question (or `END`). Without a match the
//! flow continues with the next question in document order.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsers::{AnswerKind, AnswerValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyFlow {
    pub flow_id: String,
    pub title: String,
    pub invocation_phrases: Vec<String>,
    pub questions: Vec<Question>,
    pub readback_enabled: bool,
    pub per_day_cadence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub prompt_text: String,
    pub answer_kind: AnswerKind,
    pub optional_allowed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch: Vec<BranchRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchRule {
    pub when: Predicate,
    pub target: BranchTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Any,
    /// `None` or the kind's zero value.
    IsNone,
    /// Canonical rendering equals the given text (case-insensitive).
    Equals(String),
    Above(i64),
    Below(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchTarget {
    Question(String),
    End,
}

impl Predicate {
    pub fn matches(&self, value: &AnswerValue) -> bool {
        match self {
            Predicate::Any => true,
            Predicate::IsNone => value.is_none_like(),
            Predicate::Equals(text) => value.canonical().eq_ignore_ascii_case(text),
            Predicate::Above(n) => value.magnitude().is_some_and(|m| m > *n),
            Predicate::Below(n) => value.magnitude().is_some_and(|m| m < *n),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Any => f.write_str("any"),
            Predicate::IsNone => f.write_str("none"),
            Predicate::Equals(t) => write!(f, "= {t}"),
            Predicate::Above(n) => write!(f, "> {n}"),
            Predicate::Below(n) => write!(f, "< {n}"),
        }
    }
}

impl fmt::Display for BranchTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchTarget::Question(id) => f.write_str(id),
            BranchTarget::End => f.write_str("END"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing required header `{0}`")]
    MissingField(&'static str),
    #[error("duplicate question id `{0}`")]
    DuplicateQuestionId(String),
    #[error("question `{question}` branches to unknown question `{target}`")]
    DanglingBranchTarget { question: String, target: String },
    #[error("line {line}: unknown answer kind `{kind}`")]
    UnknownAnswerKind { line: usize, kind: String },
    #[error("cadence must be at least 1 per day")]
    InvalidCadence,
    #[error("question `{0}` is optional but its kind has no \"none\" value")]
    OptionalWithoutNone(String),
    #[error("flow has no questions")]
    NoQuestions,
}

impl SurveyFlow {
    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    pub fn position(&self, question_id: &str) -> Option<usize> {
        self.questions.iter().position(|q| q.question_id == question_id)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.per_day_cadence < 1 {
            return Err(FlowError::InvalidCadence);
        }
        if self.questions.is_empty() {
            return Err(FlowError::NoQuestions);
        }
        let mut ids = HashSet::new();
        for q in &self.questions {
            if !ids.insert(q.question_id.as_str()) {
                return Err(FlowError::DuplicateQuestionId(q.question_id.clone()));
            }
        }
        for q in &self.questions {
            if q.optional_allowed && q.answer_kind.none_value().is_none() {
                return Err(FlowError::OptionalWithoutNone(q.question_id.clone()));
            }
            for rule in &q.branch {
                if let BranchTarget::Question(target) = &rule.target {
                    if !ids.contains(target.as_str()) {
                        return Err(FlowError::DanglingBranchTarget {
                            question: q.question_id.clone(),
                            target: target.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Where to go after `question_id` was answered with `value`.
    pub fn next_after(&self, question_id: &str, value: &AnswerValue) -> BranchTarget {
        let Some(pos) = self.position(question_id) else {
            return BranchTarget::End;
        };
        let q = &self.questions[pos];
        if let Some(rule) = q.branch.iter().find(|r| r.when.matches(value)) {
            return rule.target.clone();
        }
        match self.questions.get(pos + 1) {
            Some(next) => BranchTarget::Question(next.question_id.clone()),
            None => BranchTarget::End,
        }
    }

    /// Renders the flow as a `.flow` document that [`load_flow`] reads back unchanged.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "flow_id: {}", self.flow_id);
        let _ = writeln!(out, "title: {}", self.title);
        for phrase in &self.invocation_phrases {
            let _ = writeln!(out, "invocation: {phrase}");
        }
        let _ = writeln!(out, "cadence: {}", self.per_day_cadence);
        let _ = writeln!(out, "readback: {}", self.readback_enabled);
        for q in &self.questions {
            let _ = writeln!(out);
            let _ = writeln!(out, "[question]");
            let _ = writeln!(out, "id: {}", q.question_id);
            let _ = writeln!(out, "prompt: {}", q.prompt_text);
            let _ = writeln!(out, "kind: {}", q.answer_kind);
            let _ = writeln!(out, "optional: {}", q.optional_allowed);
            for rule in &q.branch {
                let _ = writeln!(out, "branch: {} -> {}", rule.when, rule.target);
            }
        }
        out
    }
}

#[derive(Default)]
struct QuestionDraft {
    line: usize,
    id: Option<String>,
    prompt: Option<String>,
    kind: Option<AnswerKind>,
    optional: bool,
    branch: Vec<BranchRule>,
}

impl QuestionDraft {
    fn finish(self) -> Result<Question, FlowError> {
        let missing = |what: &str| FlowError::Malformed {
            line: self.line,
            message: format!("question block lacks `{what}:`"),
        };
        Ok(Question {
            question_id: self.id.clone().ok_or_else(|| missing("id"))?,
            prompt_text: self.prompt.clone().ok_or_else(|| missing("prompt"))?,
            answer_kind: self.kind.ok_or_else(|| missing("kind"))?,
            optional_allowed: self.optional,
            branch: self.branch,
        })
    }
}

fn parse_bool(line: usize, value: &str) -> Result<bool, FlowError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(FlowError::Malformed { line, message: format!("expected true/false, got `{other}`") }),
    }
}

fn parse_branch(line: usize, value: &str) -> Result<BranchRule, FlowError> {
    let malformed = |message: &str| FlowError::Malformed { line, message: message.to_string() };
    let (pred, target) = value
        .rsplit_once("->")
        .ok_or_else(|| malformed("branch must read `<predicate> -> <target>`"))?;
    let (pred, target) = (pred.trim(), target.trim());
    if target.is_empty() {
        return Err(malformed("branch target is empty"));
    }
    let when = if pred.eq_ignore_ascii_case("any") {
        Predicate::Any
    } else if pred.eq_ignore_ascii_case("none") {
        Predicate::IsNone
    } else if let Some(rest) = pred.strip_prefix('=') {
        Predicate::Equals(rest.trim().to_string())
    } else if let Some(rest) = pred.strip_prefix('>') {
        Predicate::Above(rest.trim().parse().map_err(|_| malformed("`>` needs an integer"))?)
    } else if let Some(rest) = pred.strip_prefix('<') {
        Predicate::Below(rest.trim().parse().map_err(|_| malformed("`<` needs an integer"))?)
    } else {
        return Err(malformed("unknown branch predicate"));
    };
    let target = if target == "END" {
        BranchTarget::End
    } else {
        BranchTarget::Question(target.to_string())
    };
    Ok(BranchRule { when, target })
}

/// Parses and validates a `.flow` document.
pub fn load_flow(document: &str) -> Result<SurveyFlow, FlowError> {
    let mut flow_id = None;
    let mut title = None;
    let mut invocations = Vec::new();
    let mut cadence = None;
    let mut readback = true;
    let mut questions = Vec::new();
    let mut current: Option<QuestionDraft> = None;

    for (idx, raw) in document.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed == "[question]" {
            if let Some(done) = current.take() {
                questions.push(done.finish()?);
            }
            current = Some(QuestionDraft { line, ..Default::default() });
            continue;
        }
        let (key, value) = trimmed.split_once(':').ok_or_else(|| FlowError::Malformed {
            line,
            message: "expected `key: value`".to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match current.as_mut() {
            None => match key {
                "flow_id" => flow_id = Some(value.to_string()),
                "title" => title = Some(value.to_string()),
                "invocation" => invocations.push(value.to_string()),
                "cadence" => {
                    cadence = Some(value.parse::<u32>().map_err(|_| FlowError::Malformed {
                        line,
                        message: format!("cadence `{value}` is not a count"),
                    })?)
                }
                "readback" => readback = parse_bool(line, value)?,
                other => {
                    return Err(FlowError::Malformed { line, message: format!("unknown header `{other}`") })
                }
            },
            Some(q) => match key {
                "id" => q.id = Some(value.to_string()),
                "prompt" => q.prompt = Some(value.to_string()),
                "kind" => {
                    q.kind = Some(value.parse().map_err(|_| FlowError::UnknownAnswerKind {
                        line,
                        kind: value.to_string(),
                    })?)
                }
                "optional" => q.optional = parse_bool(line, value)?,
                "branch" => q.branch.push(parse_branch(line, value)?),
                other => {
                    return Err(FlowError::Malformed { line, message: format!("unknown question key `{other}`") })
                }
            },
        }
    }
    if let Some(done) = current.take() {
        questions.push(done.finish()?);
    }

    let flow = SurveyFlow {
        flow_id: flow_id.filter(|s| !s.is_empty()).ok_or(FlowError::MissingField("flow_id"))?,
        title: title.ok_or(FlowError::MissingField("title"))?,
        invocation_phrases: invocations,
        questions,
        readback_enabled: readback,
        per_day_cadence: cadence.ok_or(FlowError::MissingField("cadence"))?,
    };
    flow.validate()?;
    Ok(flow)
}

const WAKE_WORDS: &[&[&str]] = &[
    &["hey", "google"],
    &["ok", "google"],
    &["okay", "google"],
    &["hey", "assistant"],
    &["hey"],
    &["hi"],
    &["ok"],
    &["okay"],
    &["please"],
];

const LAUNCH_VERBS: &[&[&str]] = &[
    &["let", "me", "talk", "to"],
    &["i", "want", "to", "talk", "to"],
    &["talk", "to"],
    &["speak", "to"],
    &["open"],
    &["start"],
    &["launch"],
    &["ask"],
];

fn normalized_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\'', '’'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn strip_prefixes(mut words: &[String], prefixes: &[&[&str]]) -> Vec<String> {
    loop {
        let hit = prefixes.iter().find(|p| {
            words.len() >= p.len() && words.iter().zip(p.iter()).all(|(w, p)| w == p)
        });
        match hit {
            Some(p) => words = &words[p.len()..],
            None => return words.to_vec(),
        }
    }
}

/// The phrase's words with wake words and launch verbs removed, joined without
/// spaces so "fluidmonitor" and "fluid monitor" compare equal.
fn invocation_key(text: &str) -> String {
    let words = normalized_words(text);
    let words = strip_prefixes(&words, WAKE_WORDS);
    let words = strip_prefixes(&words, LAUNCH_VERBS);
    words.concat()
}

/// Which flow, if any, an invocation utterance addresses.
pub fn match_invocation<'a, I>(utterance: &str, flows: I) -> Option<String>
where
    I: IntoIterator<Item = &'a SurveyFlow>,
{
    let key = invocation_key(utterance);
    if key.is_empty() {
        return None;
    }
    flows
        .into_iter()
        .find(|f| f.invocation_phrases.iter().any(|p| invocation_key(p) == key))
        .map(|f| f.flow_id.clone())
}

/// Immutable flows shared by every session.
#[derive(Debug, Clone, Default)]
pub struct FlowCatalog {
    flows: Vec<Arc<SurveyFlow>>,
}

impl FlowCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// FluidMonitor and Sleepy.
    pub fn builtin() -> Self {
        let mut catalog = Self::new();
        let builtins = crate::assets::BuiltinFlows::load();
        catalog.insert(builtins.fluidmonitor);
        catalog.insert(builtins.sleepy);
        catalog
    }

    /// Adds or replaces a flow by id.
    pub fn insert(&mut self, flow: SurveyFlow) {
        self.flows.retain(|f| f.flow_id != flow.flow_id);
        self.flows.push(Arc::new(flow));
    }

    pub fn get(&self, flow_id: &str) -> Option<Arc<SurveyFlow>> {
        self.flows.iter().find(|f| f.flow_id == flow_id).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SurveyFlow> {
        self.flows.iter().map(|f| f.as_ref())
    }

    pub fn match_invocation(&self, utterance: &str) -> Option<String> {
        match_invocation(utterance, self.iter())
    }
}
