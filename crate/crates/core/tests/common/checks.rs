//! Property checks shared by the property tests and the acceptance report.

use std::collections::BTreeMap;

use chrono::{NaiveDate, Timelike};
use chrono_tz::Tz;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vca_survey::accounts::{GoalMode, LinkStatus, UserProfile};
use vca_survey::engine::{replay, Engine, EngineConfig, SessionState, Step, Utterance};
use vca_survey::flow::FlowCatalog;
use vca_survey::parsers::{parse_answer, AnswerKind, AnswerValue};
use vca_survey::scheduler::{due_nudges, next_invocation, Schedule, UserSchedule};
use vca_survey::store::{EventRecord, CSV_HEADER};
use vca_survey::time::Timestamp;

// ---- parser fuzzing

const VOCAB: &[&str] = &[
    "0", "1", "2", "3", "7", "10", "12", "15", "30", "45", "59", "60", "99", "100", "250", "1000", "99999", "-1", "1.5",
    ".5", "½", "one", "two", "three", "twelve", "twenty", "fifty", "half", "a", "an", "and", "quarter", "cup", "cups",
    "oz", "ounces", "ml", "liter", "l", "glass", "bottle", "hr", "hrs", "hour", "hours", "min", "minutes", "mins", "am",
    "pm", "a.m.", "p.m.", "noon", "midnight", ":", ":30", "10:15", "6:00am", "11:30pm", "24:00", "13:75", "times",
    "time", "once", "twice", "at", "@", "none", "no", "yes", "nope", "skip", "poor", "fair", "good", "very", "excellent",
    "P01", "p 0 1", "user", "id", "is", "my", ",", ".", "!", "?", "ÿ", "日本", "\u{0}", "\t", "  ", "drinks", "for",
    "about", "around", "like", "maybe", "-", "/", "mg", "melatonin", "ambien",
];

/// One random utterance: mostly plausible token soup, sometimes raw noise.
pub fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..10) {
        0 => {
            let n = rng.gen_range(0..24);
            (0..n).map(|_| rng.gen::<char>()).collect()
        }
        1 => {
            let n = rng.gen_range(0..16);
            (0..n).map(|_| char::from(rng.gen_range(0x20u8..0x7f))).collect()
        }
        _ => {
            let n = rng.gen_range(1..7);
            let mut words: Vec<&str> = Vec::with_capacity(n);
            for _ in 0..n {
                words.push(VOCAB.choose(rng).expect("non-empty"));
            }
            let sep = if rng.gen_bool(0.85) { " " } else { "" };
            words.join(sep)
        }
    }
}

fn kind_admits(kind: AnswerKind, v: &AnswerValue) -> bool {
    use AnswerValue as V;
    match kind {
        AnswerKind::UserIdConfirm => matches!(v, V::Text(_)),
        AnswerKind::Scale1To5 => matches!(v, V::Scale(_)),
        AnswerKind::FluidVolume => matches!(v, V::Volume(_)),
        AnswerKind::ClockTime => matches!(v, V::ClockTime(_)),
        AnswerKind::Duration => matches!(v, V::Duration(_)),
        AnswerKind::CountPlusDuration => matches!(v, V::CountPlusDuration { .. }),
        AnswerKind::CountPlusTime => matches!(v, V::CountPlusTime { .. }),
        AnswerKind::Quality5 => matches!(v, V::Quality(_)),
        AnswerKind::MedicationText | AnswerKind::FreeText => matches!(v, V::Text(_) | V::None),
    }
}

/// Parses `input` as every kind. Successes must be well-typed, within
/// bounds, and reparse from their echo to the same value.
pub fn check_parse(input: &str) -> Result<(), String> {
    for kind in AnswerKind::ALL {
        let Ok(parsed) = parse_answer(kind, input) else { continue };
        let v = &parsed.value;
        if !v.is_valid() || !kind_admits(kind, v) {
            return Err(format!("{kind} {input:?} produced invalid {v:?}"));
        }
        match parse_answer(kind, &parsed.normalized_echo) {
            Ok(again) if again.value == *v => {}
            other => return Err(format!("{kind} {input:?} -> {v:?} echo {:?} reparsed as {other:?}", parsed.normalized_echo)),
        }
    }
    Ok(())
}

// ---- replay determinism

const REPLIES: &[&str] = &[
    "P01 yes", "P01", "P02", "yes", "yes", "yes", "no", "maybe", "", "skip", "none", "3", "5", "9", "2 cups", "500 ml",
    "12 oz", "lots", "10:15pm", "11:30pm", "6:00am", "6:30am", "7", "1 hr 15 min", "40 min", "3 times 1 hr 10 min",
    "twice for 5 minutes", "Poor", "good", "2 8:00 pm", "none", "Melatonin, 1mg", "slept fine", "??",
];

/// Drives one random session through the engine, then checks that
/// replaying the log (and a random prefix of it) rebuilds the live state.
pub fn check_replay(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = FlowCatalog::builtin();
    let flow = catalog.get(if rng.gen_bool(0.5) { "fluidmonitor" } else { "sleepy" }).expect("builtin");
    let engine = Engine::new(EngineConfig {
        timeout_ms: rng.gen_range(1_000..20_000),
        readback: [None, Some(true), Some(false)].choose(&mut rng).copied().flatten(),
    });
    let linked = rng.gen_bool(0.3);
    let profile = UserProfile {
        user_id: "P01".into(),
        display_name: "P01".into(),
        link_status: if linked { LinkStatus::Linked } else { LinkStatus::Unlinked },
        secret_hash: String::new(),
        timezone: "America/New_York".into(),
        fluid_goal_ml: 1893,
        goal_mode: GoalMode::Goal,
        schedule_ref: "default".into(),
    };
    let mut now = Timestamp(1_529_326_800_000 + rng.gen_range(0..86_400_000));
    let mut log: Vec<EventRecord> = Vec::new();
    let mut states: Vec<(usize, SessionState)> = Vec::new();
    let absorb = |step: &Step, at: Timestamp, log: &mut Vec<EventRecord>| {
        let ids = step.state.ids();
        for e in &step.events {
            let seq = log.len() as u64 + 1;
            log.push(EventRecord { seq, stream_id: ids.session_id.clone(), kind: e.kind(), payload: e.to_payload(&ids), at });
        }
    };
    let step = engine.start_session("s-replay", &profile, &flow, now).map_err(|e| e.to_string())?;
    absorb(&step, now, &mut log);
    let mut state = step.state;
    states.push((log.len(), state.clone()));
    for _ in 0..rng.gen_range(1..60) {
        if state.phase.is_terminal() {
            break;
        }
        let deadline = state.deadline.ok_or("live session without deadline")?;
        let silent = rng.gen_bool(0.12);
        now = if silent || rng.gen_bool(0.05) {
            deadline + rng.gen_range(1..5_000)
        } else {
            now + rng.gen_range(0..(deadline - now).max(1))
        };
        if now > deadline {
            let step = engine.handle_timeout(&flow, &state, now).map_err(|e| e.to_string())?;
            absorb(&step, now, &mut log);
            state = step.state;
            states.push((log.len(), state.clone()));
            if silent || state.phase.is_terminal() {
                continue;
            }
        }
        let text = REPLIES.choose(&mut rng).expect("non-empty");
        let u = Utterance { text: text.to_string(), client_ts: rng.gen_bool(0.3).then_some(0), request_id: None };
        let step = engine.handle_utterance(&flow, &state, &u, now).map_err(|e| e.to_string())?;
        absorb(&step, now, &mut log);
        state = step.state;
        states.push((log.len(), state.clone()));
    }
    let replayed = replay(&log).map_err(|e| e.to_string())?;
    if replayed != state {
        return Err(format!("seed {seed}: replay differs from live state\nlive: {state:?}\nreplayed: {replayed:?}"));
    }
    let (len, expected) = states.choose(&mut rng).expect("non-empty");
    let prefix = replay(&log[..*len]).map_err(|e| e.to_string())?;
    if &prefix != expected {
        return Err(format!("seed {seed}: prefix of {len} events replays differently"));
    }
    Ok(())
}

// ---- scheduler

pub const ZONES: &[&str] =
    &["America/New_York", "America/Los_Angeles", "Europe/London", "Australia/Sydney", "Asia/Kolkata", "UTC"];

/// Days on which the zone's clocks change.
pub const DST_DAYS: &[(&str, &str)] = &[
    ("America/New_York", "2018-03-11"),
    ("America/New_York", "2018-11-04"),
    ("Europe/London", "2018-03-25"),
    ("Australia/Sydney", "2018-10-07"),
];

/// Checks the FluidMonitor schedule around `now` in `zone`: three slots on
/// the local day at 09:00, 15:00 and 21:00, and `next_invocation` is the
/// first slot after `now`.
pub fn check_schedule(now: Timestamp, zone: &str) -> Result<(), String> {
    let tz: Tz = zone.parse().map_err(|_| format!("bad zone {zone}"))?;
    let schedule =
        Schedule::from_hhmm("default", "fluidmonitor", &["09:00", "15:00", "21:00"], tz).map_err(|e| e.to_string())?;
    let date = now.local_date(tz);
    check_day(&schedule, date)?;
    let next = next_invocation(&schedule, now);
    if next <= now {
        return Err(format!("{zone} {now}: next invocation {next} is not after now"));
    }
    let local = next.to_utc().with_timezone(&tz);
    if ![9, 15, 21].contains(&local.hour()) || local.minute() != 0 {
        return Err(format!("{zone} {now}: next invocation at local {local}"));
    }
    let earlier = [date.pred_opt().unwrap(), date, date.succ_opt().unwrap()]
        .iter()
        .flat_map(|d| schedule.instants_on(*d))
        .any(|(_, t)| t > now && t < next);
    if earlier {
        return Err(format!("{zone} {now}: a slot was skipped before {next}"));
    }
    Ok(())
}

pub fn check_day(schedule: &Schedule, date: NaiveDate) -> Result<(), String> {
    let tz = schedule.timezone;
    let start = Timestamp::start_of_local_day(date, tz);
    let end = Timestamp::start_of_local_day(date.succ_opt().unwrap(), tz);
    let us = [UserSchedule { user_id: "P01".into(), schedule: schedule.clone() }];
    let nudges = due_nudges(&us, start, end);
    let times: Vec<&str> = nudges.iter().map(|n| n.local_time.as_str()).collect();
    if times != ["09:00", "15:00", "21:00"] || nudges.iter().any(|n| n.local_date != date) {
        return Err(format!("{} {date}: got {times:?}", tz.name()));
    }
    for n in &nudges {
        let local = n.fire_at.to_utc().with_timezone(&tz);
        if local.date_naive() != date || format!("{:02}:{:02}", local.hour(), local.minute()) != n.local_time {
            return Err(format!("{} {date}: {} fires at local {local}", tz.name(), n.local_time));
        }
    }
    Ok(())
}

// ---- cohort brute force

/// Per (user, local date) fluid totals recomputed from the CSV export alone.
pub fn brute_force_totals(csv_text: &str, tz: Tz) -> Result<BTreeMap<(String, NaiveDate), u64>, String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut totals = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        if &row[2] != "ANSWER_COMMITTED" || &row[7] != "Volume" {
            continue;
        }
        let ms: i64 = row[3].parse().map_err(|_| "bad timestamp")?;
        let ml: u64 = row[8].strip_suffix(" ml").and_then(|s| s.parse().ok()).ok_or("bad volume")?;
        let date = Timestamp(ms).local_date(tz);
        *totals.entry((row[4].to_string(), date)).or_insert(0) += ml;
    }
    Ok(totals)
}
