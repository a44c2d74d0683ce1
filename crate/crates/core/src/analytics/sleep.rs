use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use chrono_tz::Tz;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsers::{AnswerValue, ClockTime};
use crate::scheduler::resolve_local;
use crate::store::{EventKind, EventRecord};
use crate::time::{Timestamp, MS_PER_MINUTE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SleepError {
    #[error("missing clock time for `{0}`")]
    MissingTime(&'static str),
    #[error("times cannot be placed in order within one day")]
    Unanchorable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SleepFlag {
    /// Awakenings plus onset exceed the sleep period.
    Inconsistent,
    Unanchorable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepNight {
    pub user_id: String,
    /// Morning of waking.
    pub diary_date: NaiveDate,
    pub into_bed: Timestamp,
    pub try_sleep: Timestamp,
    pub final_awakening: Timestamp,
    pub out_of_bed: Timestamp,
    pub sol_min: u32,
    pub waso_min: u32,
    pub awakening_count: u32,
    pub nap_min: u32,
    pub quality: Option<u8>,
    pub alcohol: Option<(u32, Option<ClockTime>)>,
    pub meds: Option<String>,
    pub notes: Option<String>,
    pub tib_min: i64,
    pub tst_min: i64,
    pub sleep_efficiency: f64,
    pub flags: Vec<SleepFlag>,
}

const ORDER: [&str; 4] = ["into_bed", "try_sleep", "final_awakening", "out_of_bed"];

fn clock(answers: &IndexMap<String, AnswerValue>, key: &'static str) -> Result<ClockTime, SleepError> {
    match answers.get(key) {
        Some(AnswerValue::ClockTime(t)) => Ok(*t),
        _ => Err(SleepError::MissingTime(key)),
    }
}

fn at(date: NaiveDate, t: ClockTime) -> NaiveDateTime {
    date.and_time(NaiveTime::from_hms_opt(t.hour(), t.minute(), 0).expect("clock time"))
}

/// Places the four diary times on the timeline. `out_of_bed` falls on
/// `diary_date`; each earlier time takes the latest instant at or before its
/// successor, and the whole night must span less than 24 hours.
pub fn anchor_night(
    user_id: &str,
    answers: &IndexMap<String, AnswerValue>,
    diary_date: NaiveDate,
    tz: Tz,
) -> Result<SleepNight, SleepError> {
    let times = ORDER.map(|k| clock(answers, k));
    let mut local = [NaiveDateTime::default(); 4];
    local[3] = at(diary_date, times[3].clone()?);
    for i in (0..3).rev() {
        let t = times[i].clone()?;
        let mut candidate = at(local[i + 1].date(), t);
        if candidate > local[i + 1] {
            candidate -= Duration::days(1);
        }
        local[i] = candidate;
    }
    if local[3] - local[0] >= Duration::hours(24) {
        return Err(SleepError::Unanchorable);
    }
    let utc = local.map(|l| resolve_local(tz, l));
    if utc.windows(2).any(|w| w[0] > w[1]) {
        return Err(SleepError::Unanchorable);
    }

    let (awakening_count, waso_min) = match answers.get("awakenings") {
        Some(AnswerValue::CountPlusDuration { count, minutes }) => (*count, *minutes),
        _ => (0, 0),
    };
    let minutes = |key| match answers.get(key) {
        Some(AnswerValue::Duration(m)) => *m,
        _ => 0,
    };
    let text = |key| match answers.get(key) {
        Some(AnswerValue::Text(s)) => Some(s.clone()),
        _ => None,
    };
    Ok(SleepNight {
        user_id: user_id.to_string(),
        diary_date,
        into_bed: utc[0],
        try_sleep: utc[1],
        final_awakening: utc[2],
        out_of_bed: utc[3],
        sol_min: minutes("sleep_onset"),
        waso_min,
        awakening_count,
        nap_min: minutes("naps"),
        quality: match answers.get("quality") {
            Some(AnswerValue::Quality(q)) => Some(*q),
            _ => None,
        },
        alcohol: match answers.get("alcohol") {
            Some(AnswerValue::CountPlusTime { count, time }) => Some((*count, *time)),
            _ => None,
        },
        meds: text("medications"),
        notes: text("notes"),
        tib_min: 0,
        tst_min: 0,
        sleep_efficiency: 0.0,
        flags: Vec::new(),
    })
}

/// Fills TIB, TST and efficiency.
pub fn derive_sleep(mut night: SleepNight) -> SleepNight {
    let tib = (night.out_of_bed - night.into_bed) / MS_PER_MINUTE;
    let period = (night.final_awakening - night.try_sleep) / MS_PER_MINUTE;
    let tst = period - i64::from(night.sol_min) - i64::from(night.waso_min);
    if tst < 0 && !night.flags.contains(&SleepFlag::Inconsistent) {
        night.flags.push(SleepFlag::Inconsistent);
    }
    night.tib_min = tib;
    night.tst_min = tst.max(0);
    night.sleep_efficiency = if tib > 0 { (night.tst_min as f64 / tib as f64).min(1.0) } else { 0.0 };
    night
}

pub const SLEEP_SUMMARY_HEADER: [&str; 7] =
    ["user_id", "diary_date", "tib_min", "tst_min", "sleep_efficiency", "quality", "flags"];

/// One row of the sleep summary; metrics are absent for unanchorable nights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepRow {
    pub user_id: String,
    pub diary_date: NaiveDate,
    pub session_id: String,
    pub tib_min: Option<i64>,
    pub tst_min: Option<i64>,
    pub sleep_efficiency: Option<f64>,
    pub quality: Option<u8>,
    pub flags: Vec<SleepFlag>,
}

impl SleepRow {
    pub fn csv_row(&self) -> [String; 7] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let flags: Vec<&str> = self
            .flags
            .iter()
            .map(|f| match f {
                SleepFlag::Inconsistent => "INCONSISTENT",
                SleepFlag::Unanchorable => "UNANCHORABLE",
            })
            .collect();
        [
            self.user_id.clone(),
            self.diary_date.to_string(),
            opt(self.tib_min.map(|v| v.to_string())),
            opt(self.tst_min.map(|v| v.to_string())),
            opt(self.sleep_efficiency.map(|v| format!("{v:.3}"))),
            opt(self.quality.map(|v| v.to_string())),
            flags.join(";"),
        ]
    }
}

/// Diary rows for one user from their sleep-diary sessions. The diary date is
/// the local date the session started; a later session on the same date
/// replaces an earlier one.
pub fn sleep_rows<'a>(records: impl IntoIterator<Item = &'a EventRecord>, user_id: &str, flow_id: &str, tz: Tz) -> Vec<SleepRow> {
    let mut sessions: BTreeMap<&str, (Timestamp, IndexMap<String, AnswerValue>)> = BTreeMap::new();
    for r in records {
        if r.user_id() != Some(user_id) || r.flow_id() != Some(flow_id) {
            continue;
        }
        match r.kind {
            EventKind::SessionStarted => {
                sessions.insert(&r.stream_id, (r.at, IndexMap::new()));
            }
            EventKind::AnswerCommitted => {
                let (Some(entry), Some(qid)) = (sessions.get_mut(r.stream_id.as_str()), r.question_id()) else { continue };
                if let Some(Ok(v)) = r.payload.get("value").map(|v| serde_json::from_value(v.clone())) {
                    entry.1.insert(qid.to_string(), v);
                }
            }
            _ => {}
        }
    }
    let mut by_date: BTreeMap<NaiveDate, (Timestamp, SleepRow)> = BTreeMap::new();
    for (session_id, (started, answers)) in sessions {
        if ORDER.iter().any(|k| !answers.contains_key(*k)) {
            continue;
        }
        let date = started.local_date(tz);
        let row = match anchor_night(user_id, &answers, date, tz) {
            Ok(night) => {
                let n = derive_sleep(night);
                SleepRow {
                    user_id: user_id.to_string(),
                    diary_date: date,
                    session_id: session_id.to_string(),
                    tib_min: Some(n.tib_min),
                    tst_min: Some(n.tst_min),
                    sleep_efficiency: Some(n.sleep_efficiency),
                    quality: n.quality,
                    flags: n.flags,
                }
            }
            Err(_) => SleepRow {
                user_id: user_id.to_string(),
                diary_date: date,
                session_id: session_id.to_string(),
                tib_min: None,
                tst_min: None,
                sleep_efficiency: None,
                quality: match answers.get("quality") {
                    Some(AnswerValue::Quality(q)) => Some(*q),
                    _ => None,
                },
                flags: vec![SleepFlag::Unanchorable],
            },
        };
        if by_date.get(&date).is_none_or(|(t, _)| *t <= started) {
            by_date.insert(date, (started, row));
        }
    }
    by_date.into_values().map(|(_, r)| r).collect()
}
