use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde_json::Value;

use super::{EventKind, EventRecord, StoreError};
use crate::parsers::AnswerValue;
use crate::time::Timestamp;

pub const CSV_HEADER: [&str; 10] = [
    "stream_id",
    "seq",
    "kind",
    "at_utc_ms",
    "user_id",
    "flow_id",
    "question_id",
    "value_kind",
    "value_canonical",
    "raw_utterance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    JsonLines,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::JsonLines => "jsonl",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(ExportFormat::JsonLines),
            other => Err(StoreError::UnknownFormat(other.to_string())),
        }
    }
}

/// Which records to export. `None` fields do not filter. The time range is
/// half-open, `[from, to)`, on the record's UTC timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportFilter {
    pub users: Option<BTreeSet<String>>,
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
    pub kinds: Option<BTreeSet<EventKind>>,
    pub flows: Option<BTreeSet<String>>,
    pub questions: Option<BTreeSet<String>>,
}

impl ExportFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn user(mut self, user_id: &str) -> Self {
        self.users.get_or_insert_with(BTreeSet::new).insert(user_id.to_string());
        self
    }

    pub fn kind(mut self, kind: EventKind) -> Self {
        self.kinds.get_or_insert_with(BTreeSet::new).insert(kind);
        self
    }

    pub fn flow(mut self, flow_id: &str) -> Self {
        self.flows.get_or_insert_with(BTreeSet::new).insert(flow_id.to_string());
        self
    }

    pub fn question(mut self, question_id: &str) -> Self {
        self.questions.get_or_insert_with(BTreeSet::new).insert(question_id.to_string());
        self
    }

    pub fn between(mut self, from: Timestamp, to: Timestamp) -> Self {
        self.from = Some(from);
        self.to = Some(to);
        self
    }

    pub fn matches(&self, r: &EventRecord) -> bool {
        fn member(set: &Option<BTreeSet<String>>, v: Option<&str>) -> bool {
            set.as_ref().is_none_or(|s| v.is_some_and(|v| s.contains(v)))
        }
        member(&self.users, r.user_id())
            && member(&self.flows, r.flow_id())
            && member(&self.questions, r.question_id())
            && self.kinds.as_ref().is_none_or(|k| k.contains(&r.kind))
            && self.from.is_none_or(|f| r.at >= f)
            && self.to.is_none_or(|t| r.at < t)
    }
}

fn csv_row(r: &EventRecord) -> [String; 10] {
    let (value_kind, value_canonical) = match (r.kind, r.payload.get("value")) {
        (EventKind::UserParamSet, Some(v)) => {
            let key = r.payload.get("key").and_then(Value::as_str).unwrap_or_default();
            ("UserParam".to_string(), format!("{key}={v}"))
        }
        (_, Some(v)) => match serde_json::from_value::<AnswerValue>(v.clone()) {
            Ok(a) => (a.kind_name().to_string(), a.canonical()),
            Err(_) => (String::new(), v.to_string()),
        },
        (_, None) => (String::new(), String::new()),
    };
    let raw = r
        .payload
        .get("raw")
        .or_else(|| r.payload.get("text").filter(|_| r.kind == EventKind::UtteranceReceived))
        .and_then(Value::as_str)
        .unwrap_or_default();
    [
        r.stream_id.clone(),
        r.seq.to_string(),
        r.kind.as_str().to_string(),
        r.at.millis().to_string(),
        r.user_id().unwrap_or_default().to_string(),
        r.flow_id().unwrap_or_default().to_string(),
        r.question_id().unwrap_or_default().to_string(),
        value_kind,
        value_canonical,
        raw.to_string(),
    ]
}

pub(super) fn write<W: Write>(records: &[EventRecord], format: ExportFormat, mut out: W) -> Result<(), StoreError> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.write_record(csv_row(r))?;
            }
            w.flush()?;
        }
        ExportFormat::JsonLines => {
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Reads records back from a JSON-lines export.
pub fn import_jsonl<R: BufRead>(input: R) -> Result<Vec<EventRecord>, StoreError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| StoreError::Corrupt { line: idx + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}
