use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::accounts::{GoalMode, UserProfile};
use crate::parsers::{ml_to_cups, AnswerValue};
use crate::store::{EventKind, EventRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FluidStatus {
    Under,
    Met,
    Exceeded,
}

impl FluidStatus {
    /// Equality with the goal (or limit) counts as MET in both modes.
    pub fn of(total_ml: u64, goal_ml: u32) -> Self {
        match total_ml.cmp(&u64::from(goal_ml)) {
            std::cmp::Ordering::Less => FluidStatus::Under,
            std::cmp::Ordering::Equal => FluidStatus::Met,
            std::cmp::Ordering::Greater => FluidStatus::Exceeded,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FluidStatus::Under => "UNDER",
            FluidStatus::Met => "MET",
            FluidStatus::Exceeded => "EXCEEDED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionVolume {
    pub session_id: String,
    pub ml: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidDaySummary {
    pub user_id: String,
    pub local_date: NaiveDate,
    pub total_ml: u64,
    pub goal_ml: u32,
    pub mode: GoalMode,
    pub status: FluidStatus,
    pub per_session: Vec<SessionVolume>,
}

pub const FLUID_SUMMARY_HEADER: [&str; 6] = ["user_id", "local_date", "total_ml", "goal_ml", "mode", "status"];

impl FluidDaySummary {
    pub fn csv_row(&self) -> [String; 6] {
        let mode = match self.mode {
            GoalMode::Goal => "GOAL",
            GoalMode::Limit => "LIMIT",
        };
        [
            self.user_id.clone(),
            self.local_date.to_string(),
            self.total_ml.to_string(),
            self.goal_ml.to_string(),
            mode.to_string(),
            self.status.as_str().to_string(),
        ]
    }
}

/// Committed fluid volumes bucketed by user and local day.
#[derive(Debug, Clone, Default)]
pub struct FluidLedger {
    days: BTreeMap<(String, NaiveDate), Vec<SessionVolume>>,
}

impl FluidLedger {
    /// Buckets every committed volume answer. `zone_of` gives each user's zone.
    pub fn from_records<'a, F>(records: impl IntoIterator<Item = &'a EventRecord>, zone_of: F) -> Self
    where
        F: Fn(&str) -> Tz,
    {
        let mut days: BTreeMap<(String, NaiveDate), Vec<SessionVolume>> = BTreeMap::new();
        for r in records {
            if r.kind != EventKind::AnswerCommitted {
                continue;
            }
            let Some(user) = r.user_id() else { continue };
            let Some(Ok(AnswerValue::Volume(ml))) = r.payload.get("value").map(|v| serde_json::from_value(v.clone())) else {
                continue;
            };
            let date = r.at.local_date(zone_of(user));
            days.entry((user.to_string(), date))
                .or_default()
                .push(SessionVolume { session_id: r.stream_id.clone(), ml });
        }
        FluidLedger { days }
    }

    pub fn sessions(&self, user_id: &str, date: NaiveDate) -> &[SessionVolume] {
        self.days.get(&(user_id.to_string(), date)).map_or(&[], Vec::as_slice)
    }

    pub fn total(&self, user_id: &str, date: NaiveDate) -> u64 {
        self.sessions(user_id, date).iter().map(|s| u64::from(s.ml)).sum()
    }

    /// Totals for (user, date) pairs that have at least one session.
    pub fn totals(&self) -> impl Iterator<Item = (&str, NaiveDate, u64)> {
        self.days
            .iter()
            .map(|((u, d), s)| (u.as_str(), *d, s.iter().map(|v| u64::from(v.ml)).sum()))
    }

    pub fn day_summary(&self, profile: &UserProfile, date: NaiveDate) -> FluidDaySummary {
        let per_session = self.sessions(&profile.user_id, date).to_vec();
        let total_ml = per_session.iter().map(|s| u64::from(s.ml)).sum();
        FluidDaySummary {
            user_id: profile.user_id.clone(),
            local_date: date,
            total_ml,
            goal_ml: profile.fluid_goal_ml,
            mode: profile.goal_mode,
            status: FluidStatus::of(total_ml, profile.fluid_goal_ml),
            per_session,
        }
    }

    /// One summary per date in `[from, to]`, including empty days.
    pub fn range_summary(&self, profile: &UserProfile, from: NaiveDate, to: NaiveDate) -> Vec<FluidDaySummary> {
        from.iter_days().take_while(|d| *d <= to).map(|d| self.day_summary(profile, d)).collect()
    }

    /// Per-date mean over users with at least one session that date. Dates
    /// with no data are omitted. `users = None` means everyone.
    pub fn mean_daily_consumption(
        &self,
        users: Option<&BTreeSet<String>>,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Vec<MeanPoint> {
        let mut by_date: BTreeMap<NaiveDate, Vec<u64>> = BTreeMap::new();
        for (user, date, total) in self.totals() {
            if date < from || date > to || users.is_some_and(|u| !u.contains(user)) {
                continue;
            }
            by_date.entry(date).or_default().push(total);
        }
        by_date
            .into_iter()
            .map(|(date, totals)| {
                let sum: u64 = totals.iter().sum();
                MeanPoint {
                    local_date: date,
                    mean_ml: sum as f64 / totals.len() as f64,
                    min_ml: *totals.iter().min().expect("non-empty"),
                    max_ml: *totals.iter().max().expect("non-empty"),
                    n: totals.len(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub local_date: NaiveDate,
    pub mean_ml: f64,
    pub min_ml: u64,
    pub max_ml: u64,
    pub n: usize,
}

/// "How much more do I need to drink today?"
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remaining {
    pub user_id: String,
    pub local_date: NaiveDate,
    pub mode: GoalMode,
    pub total_ml: u64,
    pub goal_ml: u32,
    /// Still to drink (GOAL) or headroom left (LIMIT), never negative.
    pub remaining_ml: u64,
    pub remaining_cups: f64,
    pub met: bool,
    pub message: String,
}

fn cups_text(ml: u64) -> String {
    let cups = (ml_to_cups(ml.min(u64::from(u32::MAX)) as u32) * 2.0).round() / 2.0;
    if cups == 1.0 {
        "about 1 cup".to_string()
    } else {
        format!("about {cups} cups")
    }
}

pub fn remaining_today(profile: &UserProfile, date: NaiveDate, total_ml: u64) -> Remaining {
    let goal = u64::from(profile.fluid_goal_ml);
    let remaining_ml = goal.saturating_sub(total_ml);
    let met = total_ml >= goal;
    let message = match (profile.goal_mode, met) {
        (GoalMode::Goal, true) => "You've met your fluid goal for today.".to_string(),
        (GoalMode::Goal, false) => format!("You need {remaining_ml} ml ({}) more to reach today's goal.", cups_text(remaining_ml)),
        (GoalMode::Limit, _) if total_ml > goal => format!("You are {} ml over today's limit.", total_ml - goal),
        (GoalMode::Limit, _) => format!("You can have {remaining_ml} ml ({}) more today.", cups_text(remaining_ml)),
    };
    Remaining {
        user_id: profile.user_id.clone(),
        local_date: date,
        mode: profile.goal_mode,
        total_ml,
        goal_ml: profile.fluid_goal_ml,
        remaining_ml,
        remaining_cups: (ml_to_cups(remaining_ml.min(u64::from(u32::MAX)) as u32) * 10.0).round() / 10.0,
        met,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounts::LinkStatus;
    use crate::store::EventStore;
    use crate::time::Timestamp;
    use serde_json::json;

    fn profile(goal: u32, mode: GoalMode) -> UserProfile {
        UserProfile {
            user_id: "P01".into(),
            display_name: "Pat".into(),
            link_status: LinkStatus::Unlinked,
            secret_hash: String::new(),
            timezone: "America/New_York".into(),
            fluid_goal_ml: goal,
            goal_mode: mode,
            schedule_ref: "default".into(),
        }
    }

    fn commit(store: &EventStore, session: &str, user: &str, ml: u32, at: Timestamp) {
        store
            .append(
                session,
                EventKind::AnswerCommitted,
                json!({"user_id": user, "flow_id": "fluidmonitor", "question_id": "fluid_intake", "value": {"Volume": ml}}),
                at,
            )
            .unwrap();
    }

    fn ny() -> Tz {
        "America/New_York".parse().unwrap()
    }

    #[test]
    fn three_sessions_meet_goal() {
        let store = EventStore::in_memory();
        // 13:00, 19:00 UTC on 2018-06-18 and 01:00 UTC on 06-19 are all 06-18 in New York.
        commit(&store, "a", "P01", 473, Timestamp::from_ymd_hms_utc(2018, 6, 18, 13, 0, 0));
        commit(&store, "b", "P01", 710, Timestamp::from_ymd_hms_utc(2018, 6, 18, 19, 0, 0));
        commit(&store, "c", "P01", 710, Timestamp::from_ymd_hms_utc(2018, 6, 19, 1, 0, 0));
        let records = store.scan(&Default::default()).unwrap();
        let ledger = FluidLedger::from_records(&records, |_| ny());
        let d = NaiveDate::from_ymd_opt(2018, 6, 18).unwrap();
        let s = ledger.day_summary(&profile(1893, GoalMode::Goal), d);
        assert_eq!(s.total_ml, 1893);
        assert_eq!(s.status, FluidStatus::Met);
        assert_eq!(s.per_session.len(), 3);
        assert_eq!(s.total_ml, s.per_session.iter().map(|p| u64::from(p.ml)).sum::<u64>());
    }

    #[test]
    fn empty_day_is_under() {
        let ledger = FluidLedger::default();
        let d = NaiveDate::from_ymd_opt(2018, 6, 18).unwrap();
        let s = ledger.day_summary(&profile(1893, GoalMode::Goal), d);
        assert_eq!((s.total_ml, s.status), (0, FluidStatus::Under));
    }

    #[test]
    fn status_thresholds() {
        assert_eq!(FluidStatus::of(2500, 2000), FluidStatus::Exceeded);
        assert_eq!(FluidStatus::of(2000, 2000), FluidStatus::Met);
        assert_eq!(FluidStatus::of(1999, 2000), FluidStatus::Under);
    }

    #[test]
    fn remaining_examples() {
        let d = NaiveDate::from_ymd_opt(2018, 6, 18).unwrap();
        let p = profile(1893, GoalMode::Goal);
        let r = remaining_today(&p, d, 473);
        assert_eq!(r.remaining_ml, 1420);
        assert!(r.message.contains("about 6 cups"), "{}", r.message);
        assert_eq!(remaining_today(&p, d, 2000).remaining_ml, 0);
        assert!(remaining_today(&p, d, 2000).met);
        assert_eq!(remaining_today(&p, d, 0).remaining_ml, 1893);
        let limit = remaining_today(&profile(2000, GoalMode::Limit), d, 2500);
        assert_eq!(limit.remaining_ml, 0);
        assert!(limit.message.contains("500 ml over"));
    }

    #[test]
    fn mean_over_users() {
        let store = EventStore::in_memory();
        let at = Timestamp::from_ymd_hms_utc(2018, 6, 18, 15, 0, 0);
        for (i, (u, ml)) in [("P01", 1000), ("P02", 2000), ("P03", 3000)].into_iter().enumerate() {
            commit(&store, &format!("s{i}"), u, ml, at);
        }
        let records = store.scan(&Default::default()).unwrap();
        let ledger = FluidLedger::from_records(&records, |_| ny());
        let d = NaiveDate::from_ymd_opt(2018, 6, 18).unwrap();
        let pts = ledger.mean_daily_consumption(None, d, d);
        assert_eq!(pts.len(), 1);
        assert_eq!((pts[0].mean_ml, pts[0].min_ml, pts[0].max_ml, pts[0].n), (2000.0, 1000, 3000, 3));
        let only: BTreeSet<String> = ["P02".to_string()].into();
        assert_eq!(ledger.mean_daily_consumption(Some(&only), d, d)[0].mean_ml, 2000.0);
        let next = d.succ_opt().unwrap();
        assert!(ledger.mean_daily_consumption(None, next, next).is_empty());
    }
}
