//! UTC millisecond timestamps.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

pub const MS_PER_MINUTE: i64 = 60_000;
pub const MS_PER_HOUR: i64 = 60 * MS_PER_MINUTE;

impl Timestamp {
    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp_millis())
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn to_utc(self) -> DateTime<Utc> {
        DateTime::from_timestamp_millis(self.0).unwrap_or(DateTime::<Utc>::MIN_UTC)
    }

    pub fn from_utc(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.timestamp_millis())
    }

    /// Calendar date of this instant in `tz`.
    pub fn local_date(self, tz: Tz) -> NaiveDate {
        self.to_utc().with_timezone(&tz).date_naive()
    }

    /// UTC instant of local midnight starting `date` in `tz`.
    pub fn start_of_local_day(date: NaiveDate, tz: Tz) -> Self {
        crate::scheduler::resolve_local(tz, date.and_hms_opt(0, 0, 0).expect("midnight"))
    }

    /// Parses epoch milliseconds, an RFC 3339 instant, or a `YYYY-MM-DD`
    /// date. A date means midnight UTC starting that day, or with `end` set,
    /// midnight ending it (for inclusive upper bounds).
    pub fn parse_bound(s: &str, end: bool) -> Option<Self> {
        let s = s.trim();
        if let Ok(ms) = s.parse::<i64>() {
            return Some(Timestamp(ms));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(Timestamp::from_utc(dt.with_timezone(&Utc)));
        }
        let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
        let date = if end { date.succ_opt()? } else { date };
        Some(Timestamp::from_utc(date.and_hms_opt(0, 0, 0)?.and_utc()))
    }

    pub fn from_ymd_hms_utc(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Self {
        Timestamp::from_utc(
            Utc.with_ymd_and_hms(y, mo, d, h, mi, s)
                .single()
                .expect("valid utc datetime"),
        )
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ms: i64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl Sub<i64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, ms: i64) -> Timestamp {
        Timestamp(self.0.saturating_sub(ms))
    }
}

impl Sub<Timestamp> for Timestamp {
    type Output = i64;
    fn sub(self, other: Timestamp) -> i64 {
        self.0 - other.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_utc().to_rfc3339())
    }
}
