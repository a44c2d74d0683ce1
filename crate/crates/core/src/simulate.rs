//! Seeded cohort generator.
//!
//! Every simulated session runs through [`Service`] with scripted
//! utterances, so the log it leaves is exactly what real respondents typing
//! the same answers would produce. Per user-day: three fluid check-ins
//! (around 09:00, 15:00 and 21:00 local) and one sleep diary in the morning.

use chrono::{Duration, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{Phase, Utterance};
use crate::parsers::{AnswerValue, ClockTime};
use crate::scheduler::resolve_local;
use crate::service::{Service, ServiceError};
use crate::time::Timestamp;

#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub users: u32,
    pub days: u32,
    pub seed: u64,
    pub start: NaiveDate,
    pub timezone: String,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            users: 3,
            days: 19,
            seed: 42,
            start: NaiveDate::from_ymd_opt(2018, 6, 1).expect("valid date"),
            timezone: "America/New_York".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CohortReport {
    pub users: Vec<String>,
    pub user_days: u32,
    pub fluid_sessions: u32,
    pub sleep_sessions: u32,
    pub completed_sessions: u32,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("unknown timezone `{0}`")]
    Timezone(String),
    #[error("the store already holds events; simulate into an empty store")]
    StoreNotEmpty,
    #[error("scripted session {session} ended {phase:?}")]
    Incomplete { session: String, phase: Phase },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

const FLUID_SLOTS: [(u32, &str); 3] = [(9, "fm1"), (15, "fm2"), (21, "fm3")];

pub fn user_id(n: u32) -> String {
    format!("P{n:02}")
}

fn volume_utterance(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => {
            let cups = rng.gen_range(1..=4);
            if cups == 1 { "1 cup".to_string() } else { format!("{cups} cups") }
        }
        1 => format!("{} ounces", [8, 12, 16, 20].choose(rng).expect("non-empty")),
        _ => format!("{} ml", [250, 330, 500, 750].choose(rng).expect("non-empty")),
    }
}

fn clock(minutes: u32) -> AnswerValue {
    AnswerValue::ClockTime(ClockTime::from_minutes(minutes % 1440).expect("in range"))
}

/// The eleven diary answers for one plausible night, in question order.
fn diary_answers(rng: &mut ChaCha8Rng) -> Vec<String> {
    let into_bed = rng.gen_range(21 * 60 + 30..24 * 60) / 5 * 5;
    let try_sleep = into_bed + rng.gen_range(0..=12) * 5;
    let sol = rng.gen_range(1..=12) * 5;
    let count = rng.gen_range(0..=4);
    let waso = count * rng.gen_range(1..=4) * 5;
    let final_awakening = rng.gen_range(5 * 60 + 30..=7 * 60) / 5 * 5;
    let out_of_bed = final_awakening + rng.gen_range(0..=9) * 5;
    let naps = if rng.gen_bool(0.6) { AnswerValue::Duration(0) } else { AnswerValue::Duration(rng.gen_range(1..=6) * 10) };
    let alcohol = if rng.gen_bool(0.6) {
        AnswerValue::CountPlusTime { count: 0, time: None }
    } else {
        let time = ClockTime::from_minutes(rng.gen_range(18 * 4..=22 * 4) * 15).expect("in range");
        AnswerValue::CountPlusTime { count: rng.gen_range(1..=3), time: Some(time) }
    };
    let meds = if rng.gen_bool(0.8) { "none" } else { "Melatonin, 1mg" };
    let notes = ["none", "Slept fine", "Woke up thirsty", "Noisy neighbors"].choose(rng).expect("non-empty");
    vec![
        clock(into_bed).canonical(),
        clock(try_sleep).canonical(),
        AnswerValue::Duration(sol).canonical(),
        AnswerValue::CountPlusDuration { count, minutes: waso }.canonical(),
        clock(final_awakening).canonical(),
        clock(out_of_bed).canonical(),
        AnswerValue::Quality(rng.gen_range(1..=5)).canonical(),
        naps.canonical(),
        alcohol.canonical(),
        meds.to_string(),
        notes.to_string(),
    ]
}

struct Script<'a> {
    service: &'a Service,
    rng: ChaCha8Rng,
}

impl Script<'_> {
    /// Runs a session to completion answering each question with the given
    /// utterance and confirming each read-back. Occasionally the respondent
    /// rejects a read-back and repeats the answer.
    fn run(&mut self, session_id: &str, user: &str, flow: &str, answers: &[String], mut now: Timestamp) -> Result<(), SimulateError> {
        let mut turn = self.service.start_session_with_id(session_id, user, flow, now)?;
        let mut i = 0;
        while !turn.state.phase.is_terminal() {
            now = now + self.rng.gen_range(2_000..6_000);
            let text = match turn.state.phase {
                Phase::AwaitReadbackConfirm if turn.state.corrections_used_this_question == 0 && self.rng.gen_bool(0.05) => "no".to_string(),
                Phase::AwaitReadbackConfirm => {
                    i += 1;
                    "yes".to_string()
                }
                _ => answers.get(i).cloned().unwrap_or_default(),
            };
            turn = self.service.utterance(session_id, &Utterance::text(text), now)?;
        }
        if turn.state.phase != Phase::Completed {
            return Err(SimulateError::Incomplete { session: session_id.to_string(), phase: turn.state.phase });
        }
        Ok(())
    }
}

/// Populates `service` with a deterministic cohort.
pub fn simulate(service: &Service, spec: &CohortSpec) -> Result<CohortReport, SimulateError> {
    if spec.users == 0 {
        return Err(SimulateError::NonPositive("users"));
    }
    if spec.days == 0 {
        return Err(SimulateError::NonPositive("days"));
    }
    let tz: Tz = spec.timezone.parse().map_err(|_| SimulateError::Timezone(spec.timezone.clone()))?;
    if !service.store().is_empty() {
        return Err(SimulateError::StoreNotEmpty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let at = |date: NaiveDate, minutes: u32| {
        resolve_local(tz, date.and_time(NaiveTime::from_hms_opt(minutes / 60, minutes % 60, 0).expect("valid")))
    };
    let enrolled = at(spec.start - Duration::days(1), 12 * 60);
    let mut report = CohortReport::default();
    for n in 1..=spec.users {
        let id = user_id(n);
        service.enroll(&id, &format!("Participant {n}"), &format!("pw-{id}"), Some(&spec.timezone), enrolled)?;
        report.users.push(id);
    }

    let mut script = Script { service, rng: ChaCha8Rng::seed_from_u64(rng.gen()) };
    for day in 0..spec.days {
        let date = spec.start + Duration::days(i64::from(day));
        let stamp = date.format("%Y%m%d");
        for user in report.users.clone() {
            let sleep_id = format!("sim-{user}-{stamp}-sleepy");
            let answers = diary_answers(&mut rng);
            script.run(&sleep_id, &user, "sleepy", &answers, at(date, 8 * 60 + rng.gen_range(0..60)))?;
            report.sleep_sessions += 1;

            for (hour, tag) in FLUID_SLOTS {
                let session_id = format!("sim-{user}-{stamp}-{tag}");
                let answers = vec![user.clone(), rng.gen_range(2..=5).to_string(), volume_utterance(&mut rng)];
                script.run(&session_id, &user, "fluidmonitor", &answers, at(date, hour * 60 + rng.gen_range(0..30)))?;
                report.fluid_sessions += 1;
            }
            report.user_days += 1;
        }
    }
    report.completed_sessions = report.fluid_sessions + report.sleep_sessions;
    report.first_date = Some(spec.start);
    report.last_date = Some(spec.start + Duration::days(i64::from(spec.days) - 1));
    service.store().sync().map_err(ServiceError::from)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowCatalog;
    use crate::service::ServiceConfig;
    use crate::store::{EventStore, ExportFilter, ExportFormat};
    use std::sync::Arc;

    fn fresh(seed: u64) -> Service {
        let cfg = ServiceConfig { seed: Some(seed), ..ServiceConfig::default() };
        Service::new(Arc::new(EventStore::in_memory()), FlowCatalog::builtin(), cfg).unwrap()
    }

    #[test]
    fn unit_cohort() {
        let s = fresh(1);
        let spec = CohortSpec { users: 1, days: 1, ..CohortSpec::default() };
        let r = simulate(&s, &spec).unwrap();
        assert_eq!((r.user_days, r.fluid_sessions, r.sleep_sessions), (1, 3, 1));
        let rows = s.sleep_summary("P01", spec.start, spec.start).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].flags.is_empty(), "{rows:?}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = CohortSpec { users: 2, days: 2, seed: 9, ..CohortSpec::default() };
        let export = |s: &Service| s.export(&ExportFilter::all(), ExportFormat::JsonLines).unwrap();
        let (a, b) = (fresh(9), fresh(9));
        simulate(&a, &spec).unwrap();
        simulate(&b, &spec).unwrap();
        assert_eq!(export(&a), export(&b));
        let c = fresh(9);
        simulate(&c, &CohortSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(export(&a), export(&c));
    }

    #[test]
    fn rejects_bad_input() {
        let s = fresh(1);
        assert!(matches!(simulate(&s, &CohortSpec { users: 0, ..CohortSpec::default() }), Err(SimulateError::NonPositive("users"))));
        assert!(matches!(simulate(&s, &CohortSpec { days: 0, ..CohortSpec::default() }), Err(SimulateError::NonPositive("days"))));
        simulate(&s, &CohortSpec { users: 1, days: 1, ..CohortSpec::default() }).unwrap();
        assert!(matches!(simulate(&s, &CohortSpec::default()), Err(SimulateError::StoreNotEmpty)));
    }
}
