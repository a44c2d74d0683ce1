//! Grammar-based parsers turning transcribed utterances into typed answers.
//!
//! Every parser is total: any input string yields either a [`Parsed`] value
//! together with its canonical echo, or a typed [`ParseFailure`]. The echo is
//! the text read back to the respondent and always reparses to the same value.

mod clock;
mod compound;
mod duration;
mod lex;
mod scales;
mod text;
mod volume;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{parse_clock_time, ClockContext};
pub use compound::{parse_count_plus_duration, parse_count_plus_time};
pub use duration::parse_duration;
pub use scales::{parse_count, parse_quality, parse_scale_1_5, QUALITY_LABELS};
pub use text::{parse_free_text, parse_medication, parse_user_id, parse_yes_no, YesNo};
pub use volume::{ml_to_cups, parse_volume, ML_PER_CUP, ML_PER_FL_OZ};

/// Minutes since local midnight, `0..=1439`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClockTime(u16);

impl ClockTime {
    pub const MINUTES_PER_DAY: u16 = 1440;

    pub fn from_minutes(minutes: u32) -> Option<Self> {
        (minutes < u32::from(Self::MINUTES_PER_DAY)).then_some(ClockTime(minutes as u16))
    }

    pub fn from_hm(hour: u32, minute: u32) -> Option<Self> {
        if hour > 23 || minute > 59 {
            return None;
        }
        Self::from_minutes(hour * 60 + minute)
    }

    pub fn minutes(self) -> u16 {
        self.0
    }

    pub fn hour(self) -> u32 {
        u32::from(self.0 / 60)
    }

    pub fn minute(self) -> u32 {
        u32::from(self.0 % 60)
    }
}

impl fmt::Display for ClockTime {
    /// 12-hour rendering, e.g. `10:15pm`, `12:00am`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, m) = (self.hour(), self.minute());
        let suffix = if h < 12 { "am" } else { "pm" };
        let h12 = match h % 12 {
            0 => 12,
            other => other,
        };
        write!(f, "{h12}:{m:02}{suffix}")
    }
}

/// A typed, validated answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerValue {
    ClockTime(ClockTime),
    /// Minutes.
    Duration(u32),
    Count(u32),
    /// Milliliters.
    Volume(u32),
    Scale(u8),
    /// 1 = very poor ... 5 = very good.
    Quality(u8),
    CountPlusDuration { count: u32, minutes: u32 },
    CountPlusTime { count: u32, time: Option<ClockTime> },
    Text(String),
    None,
}

pub const MAX_DURATION_MINUTES: u32 = 24 * 60;
pub const MAX_VOLUME_ML: u32 = 10_000;

impl AnswerValue {
    /// Variant name as written to exports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnswerValue::ClockTime(_) => "ClockTime",
            AnswerValue::Duration(_) => "Duration",
            AnswerValue::Count(_) => "Count",
            AnswerValue::Volume(_) => "Volume",
            AnswerValue::Scale(_) => "Scale",
            AnswerValue::Quality(_) => "Quality",
            AnswerValue::CountPlusDuration { .. } => "CountPlusDuration",
            AnswerValue::CountPlusTime { .. } => "CountPlusTime",
            AnswerValue::Text(_) => "Text",
            AnswerValue::None => "None",
        }
    }

    /// Canonical text rendering. For every value a parser can produce, parsing
    /// this text with the same parser yields the value back.
    pub fn canonical(&self) -> String {
        match self {
            AnswerValue::ClockTime(t) => t.to_string(),
            AnswerValue::Duration(m) => duration::render(*m),
            AnswerValue::Count(n) => n.to_string(),
            AnswerValue::Volume(ml) => format!("{ml} ml"),
            AnswerValue::Scale(s) => s.to_string(),
            AnswerValue::Quality(q) => QUALITY_LABELS[usize::from(q.saturating_sub(1)).min(4)].to_string(),
            AnswerValue::CountPlusDuration { count, minutes } => {
                let times = if *count == 1 { "time" } else { "times" };
                format!("{count} {times} {}", duration::render(*minutes))
            }
            AnswerValue::CountPlusTime { count, time } => match (count, time) {
                (0, None) => "none".to_string(),
                (n, None) => n.to_string(),
                (n, Some(t)) => format!("{n} at {t}"),
            },
            AnswerValue::Text(s) => s.clone(),
            AnswerValue::None => "none".to_string(),
        }
    }

    /// Type invariants: bounded scales, clock range, magnitude caps.
    pub fn is_valid(&self) -> bool {
        match self {
            AnswerValue::ClockTime(t) => t.minutes() < ClockTime::MINUTES_PER_DAY,
            AnswerValue::Duration(m) => *m <= MAX_DURATION_MINUTES,
            AnswerValue::Count(_) => true,
            AnswerValue::Volume(ml) => *ml <= MAX_VOLUME_ML,
            AnswerValue::Scale(s) | AnswerValue::Quality(s) => (1..=5).contains(s),
            AnswerValue::CountPlusDuration { minutes, .. } => *minutes <= MAX_DURATION_MINUTES,
            AnswerValue::CountPlusTime { time, .. } => {
                time.is_none_or(|t| t.minutes() < ClockTime::MINUTES_PER_DAY)
            }
            AnswerValue::Text(s) => !s.trim().is_empty(),
            AnswerValue::None => true,
        }
    }

    /// The leading magnitude used by branch predicates.
    pub fn magnitude(&self) -> Option<i64> {
        match self {
            AnswerValue::ClockTime(t) => Some(i64::from(t.minutes())),
            AnswerValue::Duration(n) | AnswerValue::Count(n) | AnswerValue::Volume(n) => {
                Some(i64::from(*n))
            }
            AnswerValue::Scale(s) | AnswerValue::Quality(s) => Some(i64::from(*s)),
            AnswerValue::CountPlusDuration { count, .. } | AnswerValue::CountPlusTime { count, .. } => {
                Some(i64::from(*count))
            }
            AnswerValue::Text(_) | AnswerValue::None => None,
        }
    }

    /// True for `None` and for the zero value of a kind ("none", "0 times").
    pub fn is_none_like(&self) -> bool {
        matches!(
            self,
            AnswerValue::None
                | AnswerValue::Duration(0)
                | AnswerValue::Count(0)
                | AnswerValue::Volume(0)
                | AnswerValue::CountPlusDuration { count: 0, minutes: 0 }
                | AnswerValue::CountPlusTime { count: 0, time: None }
        )
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Why an utterance did not yield a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseFailure {
    #[error("no recognizable answer")]
    NoMatch,
    #[error("answer outside the accepted range")]
    OutOfRange,
    #[error("answer is ambiguous")]
    Ambiguous,
}

/// A successful parse: the value and the text used to read it back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed {
    pub value: AnswerValue,
    pub normalized_echo: String,
}

impl Parsed {
    pub(crate) fn new(value: AnswerValue) -> Self {
        let normalized_echo = value.canonical();
        Parsed { value, normalized_echo }
    }
}

pub type ParseOutcome = Result<Parsed, ParseFailure>;

/// The answer grammar a question expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerKind {
    UserIdConfirm,
    #[serde(rename = "SCALE_1_5")]
    Scale1To5,
    FluidVolume,
    ClockTime,
    Duration,
    CountPlusDuration,
    CountPlusTime,
    #[serde(rename = "QUALITY_5")]
    Quality5,
    MedicationText,
    FreeText,
}

impl AnswerKind {
    pub const ALL: [AnswerKind; 10] = [
        AnswerKind::UserIdConfirm,
        AnswerKind::Scale1To5,
        AnswerKind::FluidVolume,
        AnswerKind::ClockTime,
        AnswerKind::Duration,
        AnswerKind::CountPlusDuration,
        AnswerKind::CountPlusTime,
        AnswerKind::Quality5,
        AnswerKind::MedicationText,
        AnswerKind::FreeText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerKind::UserIdConfirm => "USER_ID_CONFIRM",
            AnswerKind::Scale1To5 => "SCALE_1_5",
            AnswerKind::FluidVolume => "FLUID_VOLUME",
            AnswerKind::ClockTime => "CLOCK_TIME",
            AnswerKind::Duration => "DURATION",
            AnswerKind::CountPlusDuration => "COUNT_PLUS_DURATION",
            AnswerKind::CountPlusTime => "COUNT_PLUS_TIME",
            AnswerKind::Quality5 => "QUALITY_5",
            AnswerKind::MedicationText => "MEDICATION_TEXT",
            AnswerKind::FreeText => "FREE_TEXT",
        }
    }

    /// The value "none" parses to for this kind, if the kind has one.
    /// Only kinds with a none value may be marked optional.
    pub fn none_value(self) -> Option<AnswerValue> {
        match self {
            AnswerKind::Duration => Some(AnswerValue::Duration(0)),
            AnswerKind::FluidVolume => Some(AnswerValue::Volume(0)),
            AnswerKind::CountPlusDuration => Some(AnswerValue::CountPlusDuration { count: 0, minutes: 0 }),
            AnswerKind::CountPlusTime => Some(AnswerValue::CountPlusTime { count: 0, time: None }),
            AnswerKind::MedicationText | AnswerKind::FreeText => Some(AnswerValue::None),
            AnswerKind::UserIdConfirm
            | AnswerKind::Scale1To5
            | AnswerKind::ClockTime
            | AnswerKind::Quality5 => None,
        }
    }
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown answer kind `{0}`")]
pub struct UnknownAnswerKind(pub String);

impl FromStr for AnswerKind {
    type Err = UnknownAnswerKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnswerKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownAnswerKind(s.trim().to_string()))
    }
}

/// Parse `utterance` with the grammar for `kind`.
///
/// Clock-time questions require an explicit am/pm for hours 1..=12 so that a
/// bare "10:15" is reported as ambiguous rather than silently taken as morning.
/// `USER_ID_CONFIRM` only extracts the spoken identifier; matching it against
/// the enrolled participant is the caller's job.
pub fn parse_answer(kind: AnswerKind, utterance: &str) -> ParseOutcome {
    match kind {
        AnswerKind::UserIdConfirm => parse_user_id(utterance),
        AnswerKind::Scale1To5 => parse_scale_1_5(utterance),
        AnswerKind::FluidVolume => parse_volume(utterance),
        AnswerKind::ClockTime => parse_clock_time(utterance, ClockContext::RequireMeridiem),
        AnswerKind::Duration => parse_duration(utterance),
        AnswerKind::CountPlusDuration => parse_count_plus_duration(utterance),
        AnswerKind::CountPlusTime => parse_count_plus_time(utterance),
        AnswerKind::Quality5 => parse_quality(utterance),
        AnswerKind::MedicationText => parse_medication(utterance),
        AnswerKind::FreeText => parse_free_text(utterance),
    }
}
