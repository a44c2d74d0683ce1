//! Survey invocation times and nudges.
//!
//! A [`Schedule`] is a list of local wall-clock times in the participant's
//! zone. Times that fall into a DST gap fire at the first valid instant after
//! them; times that occur twice fire at the earlier one.

use std::collections::BTreeMap;

use chrono::{Duration, LocalResult, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsers::ClockTime;
use crate::time::{Timestamp, MS_PER_HOUR};

pub const MISSED_AFTER_MS: i64 = 3 * MS_PER_HOUR;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("schedule has no times")]
    Empty,
    #[error("schedule times must be strictly increasing")]
    NotIncreasing,
    #[error("invalid time `{0}`, expected HH:MM")]
    BadTime(String),
    #[error("nudge `{id}` cannot go from {from:?} to {to:?}")]
    InvalidTransition { id: String, from: NudgeStatus, to: NudgeStatus },
    #[error("unknown nudge `{0}`")]
    UnknownNudge(String),
    #[error("empty window")]
    EmptyWindow,
}

/// UTC instant of a local wall-clock time.
pub fn resolve_local(tz: Tz, local: NaiveDateTime) -> Timestamp {
    match tz.from_local_datetime(&local) {
        LocalResult::Single(dt) => Timestamp::from_utc(dt.with_timezone(&Utc)),
        LocalResult::Ambiguous(early, _) => Timestamp::from_utc(early.with_timezone(&Utc)),
        LocalResult::None => {
            // Gaps are at most a few hours; walk forward to the first wall time that exists.
            let mut probe = local;
            loop {
                probe += Duration::minutes(1);
                if let Some(dt) = tz.from_local_datetime(&probe).earliest() {
                    return first_valid_instant(tz, local, Timestamp::from_utc(dt.with_timezone(&Utc)));
                }
            }
        }
    }
}

fn first_valid_instant(tz: Tz, local: NaiveDateTime, upper: Timestamp) -> Timestamp {
    // Earliest UTC instant whose wall time is past `local`: the transition itself.
    let mut lo = Timestamp(upper.0 - 4 * MS_PER_HOUR);
    let mut hi = upper;
    while hi - lo > 1 {
        let mid = Timestamp(lo.0 + (hi - lo) / 2);
        if mid.to_utc().with_timezone(&tz).naive_local() > local {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn parse_hhmm(s: &str) -> Result<ClockTime, SchedulerError> {
    let bad = || SchedulerError::BadTime(s.to_string());
    let t = NaiveTime::parse_from_str(s.trim(), "%H:%M").map_err(|_| bad())?;
    use chrono::Timelike;
    ClockTime::from_hm(t.hour(), t.minute()).ok_or_else(bad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub schedule_id: String,
    pub flow_id: String,
    pub local_times: Vec<ClockTime>,
    pub timezone: Tz,
}

impl Schedule {
    pub fn new(schedule_id: &str, flow_id: &str, local_times: Vec<ClockTime>, timezone: Tz) -> Result<Self, SchedulerError> {
        if local_times.is_empty() {
            return Err(SchedulerError::Empty);
        }
        if local_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SchedulerError::NotIncreasing);
        }
        Ok(Schedule { schedule_id: schedule_id.into(), flow_id: flow_id.into(), local_times, timezone })
    }

    pub fn from_hhmm(schedule_id: &str, flow_id: &str, times: &[&str], timezone: Tz) -> Result<Self, SchedulerError> {
        let parsed = times.iter().map(|t| parse_hhmm(t)).collect::<Result<Vec<_>, _>>()?;
        Self::new(schedule_id, flow_id, parsed, timezone)
    }

    /// Fire instants for one local calendar day, in order.
    pub fn instants_on(&self, date: NaiveDate) -> Vec<(ClockTime, Timestamp)> {
        self.local_times
            .iter()
            .map(|t| {
                let local = date.and_time(NaiveTime::from_hms_opt(t.hour(), t.minute(), 0).expect("clock time"));
                (*t, resolve_local(self.timezone, local))
            })
            .collect()
    }
}

/// Earliest scheduled instant strictly after `now`.
pub fn next_invocation(schedule: &Schedule, now: Timestamp) -> Timestamp {
    let mut date = now.local_date(schedule.timezone) - Duration::days(1);
    loop {
        if let Some((_, t)) = schedule.instants_on(date).into_iter().find(|(_, t)| *t > now) {
            return t;
        }
        date += Duration::days(1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NudgeStatus {
    Pending,
    Fired,
    CompletedSession,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nudge {
    /// `user:flow:YYYY-MM-DDTHH:MM`, unique per scheduled slot.
    pub nudge_id: String,
    pub user_id: String,
    pub flow_id: String,
    pub local_date: NaiveDate,
    pub local_time: String,
    pub fire_at: Timestamp,
    pub status: NudgeStatus,
}

/// A user's schedule for one flow.
#[derive(Debug, Clone)]
pub struct UserSchedule {
    pub user_id: String,
    pub schedule: Schedule,
}

/// One PENDING nudge per (user, scheduled slot) firing in `[t0, t1)`.
pub fn due_nudges(schedules: &[UserSchedule], t0: Timestamp, t1: Timestamp) -> Vec<Nudge> {
    let mut out = Vec::new();
    if t0 >= t1 {
        return out;
    }
    for us in schedules {
        let tz = us.schedule.timezone;
        let mut date = t0.local_date(tz) - Duration::days(1);
        let last = t1.local_date(tz) + Duration::days(1);
        while date <= last {
            for (clock, fire_at) in us.schedule.instants_on(date) {
                if fire_at >= t0 && fire_at < t1 {
                    let hhmm = format!("{:02}:{:02}", clock.hour(), clock.minute());
                    out.push(Nudge {
                        nudge_id: format!("{}:{}:{}T{}", us.user_id, us.schedule.flow_id, date, hhmm),
                        user_id: us.user_id.clone(),
                        flow_id: us.schedule.flow_id.clone(),
                        local_date: date,
                        local_time: hhmm,
                        fire_at,
                        status: NudgeStatus::Pending,
                    });
                }
            }
            date += Duration::days(1);
        }
    }
    out.sort_by(|a, b| (a.fire_at, &a.nudge_id).cmp(&(b.fire_at, &b.nudge_id)));
    out
}

pub fn mark_outcome(nudge: &Nudge, outcome: NudgeStatus) -> Result<Nudge, SchedulerError> {
    let legal = matches!(
        (nudge.status, outcome),
        (NudgeStatus::Pending, NudgeStatus::Fired)
            | (NudgeStatus::Fired, NudgeStatus::CompletedSession)
            | (NudgeStatus::Fired, NudgeStatus::Missed)
    );
    if !legal {
        return Err(SchedulerError::InvalidTransition { id: nudge.nudge_id.clone(), from: nudge.status, to: outcome });
    }
    Ok(Nudge { status: outcome, ..nudge.clone() })
}

/// COMPLETED / (COMPLETED + MISSED); `None` before any outcome.
pub fn adherence<'a>(nudges: impl IntoIterator<Item = &'a Nudge>) -> Option<f64> {
    let (mut done, mut missed) = (0u32, 0u32);
    for n in nudges {
        match n.status {
            NudgeStatus::CompletedSession => done += 1,
            NudgeStatus::Missed => missed += 1,
            _ => {}
        }
    }
    (done + missed > 0).then(|| f64::from(done) / f64::from(done + missed))
}

/// All nudges known to a running service, keyed by id.
#[derive(Debug, Clone)]
pub struct NudgeBook {
    nudges: BTreeMap<String, Nudge>,
    missed_after_ms: i64,
}

impl Default for NudgeBook {
    fn default() -> Self {
        Self::with_grace(MISSED_AFTER_MS)
    }
}

impl NudgeBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// A book where FIRED nudges turn MISSED after `missed_after_ms`.
    pub fn with_grace(missed_after_ms: i64) -> Self {
        NudgeBook { nudges: BTreeMap::new(), missed_after_ms }
    }

    /// Adds nudges not seen before; returns the new ones.
    pub fn merge(&mut self, due: Vec<Nudge>) -> Vec<Nudge> {
        let mut added = Vec::new();
        for n in due {
            if !self.nudges.contains_key(&n.nudge_id) {
                self.nudges.insert(n.nudge_id.clone(), n.clone());
                added.push(n);
            }
        }
        added
    }

    pub fn get(&self, id: &str) -> Option<&Nudge> {
        self.nudges.get(id)
    }

    pub fn transition(&mut self, id: &str, to: NudgeStatus) -> Result<Nudge, SchedulerError> {
        let n = self.nudges.get(id).ok_or_else(|| SchedulerError::UnknownNudge(id.to_string()))?;
        let next = mark_outcome(n, to)?;
        self.nudges.insert(id.to_string(), next.clone());
        Ok(next)
    }

    /// Fires every PENDING nudge due at or before `now`.
    pub fn fire_due(&mut self, now: Timestamp) -> Vec<Nudge> {
        let ids: Vec<String> = self
            .nudges
            .values()
            .filter(|n| n.status == NudgeStatus::Pending && n.fire_at <= now)
            .map(|n| n.nudge_id.clone())
            .collect();
        ids.iter().filter_map(|id| self.transition(id, NudgeStatus::Fired).ok()).collect()
    }

    /// A session for `(user, flow)` started at `started_at` and completed:
    /// the latest FIRED nudge it answers becomes COMPLETED_SESSION.
    pub fn session_completed(&mut self, user_id: &str, flow_id: &str, started_at: Timestamp) -> Option<Nudge> {
        let id = self
            .nudges
            .values()
            .filter(|n| {
                n.user_id == user_id
                    && n.flow_id == flow_id
                    && n.status == NudgeStatus::Fired
                    && n.fire_at <= started_at
                    && started_at < n.fire_at + self.missed_after_ms
            })
            .max_by_key(|n| n.fire_at)?
            .nudge_id
            .clone();
        self.transition(&id, NudgeStatus::CompletedSession).ok()
    }

    /// FIRED nudges with no session after the grace period become MISSED.
    pub fn expire(&mut self, now: Timestamp) -> Vec<Nudge> {
        let ids: Vec<String> = self
            .nudges
            .values()
            .filter(|n| n.status == NudgeStatus::Fired && now >= n.fire_at + self.missed_after_ms)
            .map(|n| n.nudge_id.clone())
            .collect();
        ids.iter().filter_map(|id| self.transition(id, NudgeStatus::Missed).ok()).collect()
    }

    pub fn for_user(&self, user_id: &str) -> Vec<Nudge> {
        self.nudges.values().filter(|n| n.user_id == user_id).cloned().collect()
    }

    pub fn all(&self) -> Vec<Nudge> {
        self.nudges.values().cloned().collect()
    }
}
