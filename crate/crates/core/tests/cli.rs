mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use vca_survey::assets::{fixtures, Transcript, TranscriptStep};

fn vca(store: &Path, args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_vca"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("VCA_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn enroll(store: &Path, user: &str) -> String {
    let o = vca(store, &["enroll", user, "--password", &format!("pw-{user}")], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).trim().to_string()
}

fn script(t: &Transcript) -> String {
    t.steps
        .iter()
        .filter_map(|s| match s {
            TranscriptStep::Say(text) => Some(format!("{text}\n")),
            TranscriptStep::Silence => Some("\n".to_string()),
            TranscriptStep::Expect(_) => None,
        })
        .collect()
}

#[test]
fn bundled_transcripts_through_the_terminal() {
    for t in fixtures().transcripts {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("events.jsonl");
        enroll(&store, &t.user_id);
        let o = vca(&store, &["chat", &t.flow_id, "--user", &t.user_id], &script(&t));
        let text = stdout(&o);
        let status = t.expect_status.clone().unwrap();
        assert!(text.contains(&format!("status: {status}")), "{}: {text}", t.name);
        assert!(text.contains(&format!("answers: {}", t.expect_answer_count.unwrap())), "{}: {text}", t.name);
        assert_eq!(o.status.code(), Some(if status == "ABANDONED" { 1 } else { 0 }));
        for step in &t.steps {
            if let TranscriptStep::Expect(e) = step {
                assert!(text.contains(e.as_str()), "{}: missing `{e}` in {text}", t.name);
            }
        }
    }
}

#[test]
fn silence_twice_abandons_and_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("events.jsonl");
    enroll(&store, "P02");
    let o = vca(&store, &["chat", "fluidmonitor", "--user", "P02"], "\n\n");
    assert!(stdout(&o).contains("status: ABANDONED"));
    let o = vca(&store, &["export", "--format", "csv", "--kinds", "PROMPT_ISSUED,TIMEOUT,SESSION_ABANDONED"], "");
    let kinds: Vec<String> =
        stdout(&o).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect();
    assert_eq!(kinds, ["PROMPT_ISSUED", "TIMEOUT", "PROMPT_ISSUED", "TIMEOUT", "SESSION_ABANDONED"]);
}

#[test]
fn unknown_flow_or_user_fails() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("events.jsonl");
    let o = vca(&store, &["chat", "fluidmonitor", "--user", "P09"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown user"));
    enroll(&store, "P09");
    let o = vca(&store, &["chat", "nope", "--user", "P09"], "");
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown flow"));
}

#[test]
fn simulate_summary_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.jsonl");
    let o = vca(&one, &["simulate", "--users", "1", "--days", "1", "--seed", "5"], "");
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((report["fluid_sessions"].as_u64(), report["sleep_sessions"].as_u64()), (Some(3), Some(1)));
    let o = vca(&one, &["summary", "--user", "P01", "--date", "2018-06-01"], "");
    let rows: Vec<&str> = std::str::from_utf8(&o.stdout).unwrap().lines().collect();
    assert_eq!(rows[0], "user_id,local_date,total_ml,goal_ml,mode,status");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("P01,2018-06-01,"));
    let o = vca(&one, &["summary", "--user", "P01", "--date", "2018-06-01", "--sleep"], "");
    assert_eq!(stdout(&o).lines().count(), 2);
    // Not empty any more.
    assert_eq!(vca(&one, &["simulate", "--users", "1", "--days", "1"], "").status.code(), Some(2));

    let cohort = dir.path().join("cohort.jsonl");
    let o = vca(&cohort, &["simulate", "--seed", "42"], "");
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((report["user_days"].as_u64(), report["fluid_sessions"].as_u64()), (Some(57), Some(171)));
    let o = vca(&cohort, &["summary", "--plot-data"], "");
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("local_date,mean_ml,min_ml,max_ml,n"));
    assert_eq!(text.lines().count(), 1 + 19);

    let again = dir.path().join("again.jsonl");
    vca(&again, &["simulate", "--seed", "42"], "");
    let a = vca(&cohort, &["export", "--format", "jsonl"], "").stdout;
    let b = vca(&again, &["export", "--format", "jsonl"], "").stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);

    for bad in [["--users", "0"], ["--days", "-1"]] {
        let o = vca(&dir.path().join("bad.jsonl"), &["simulate", bad[0], bad[1]], "");
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn schedule_lists_local_times_across_dst() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("events.jsonl");
    enroll(&store, "P01");
    let o = vca(&store, &["schedule", "--user", "P01", "--date", "2018-11-04"], "");
    let text = stdout(&o);
    let fluid: Vec<&str> = text.lines().filter(|l| l.contains(",fluidmonitor,")).collect();
    assert_eq!(fluid.len(), 3, "{text}");
    // 09:00 EST on the fall-back day is 14:00 UTC.
    assert!(fluid[0].ends_with(",2018-11-04,09:00,2018-11-04T14:00:00+00:00"), "{}", fluid[0]);
    assert!(fluid[2].contains(",21:00,2018-11-05T02:00:00+00:00"), "{}", fluid[2]);
}

fn log_shape(jsonl: &str) -> Vec<(String, Value)> {
    jsonl
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|r| r["kind"] != "USER_PARAM_SET")
        .map(|r| {
            let mut p = r["payload"].clone();
            p.as_object_mut().unwrap().remove("session_id");
            p.as_object_mut().unwrap().remove("client_ts");
            p.as_object_mut().unwrap().remove("request_id");
            (r["kind"].as_str().unwrap().to_string(), p)
        })
        .collect()
}

/// The same transcript through the terminal and through the HTTP API
/// leaves the same log.
#[test]
fn terminal_and_http_logs_match() {
    let t = fixtures().transcripts.into_iter().find(|t| t.name == "sleepy").unwrap();
    let dir = tempfile::tempdir().unwrap();

    let local = dir.path().join("local.jsonl");
    enroll(&local, &t.user_id);
    vca(&local, &["chat", &t.flow_id, "--user", &t.user_id], &script(&t));
    let local_log = stdout(&vca(&local, &["export", "--format", "jsonl"], ""));

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (server, token) = rt.block_on(async {
        let s = common::spawn().await;
        let token = s.enroll(&t.user_id).await;
        (s, token)
    });
    let o = vca(
        &dir.path().join("unused.jsonl"),
        &["chat", &t.flow_id, "--user", &t.user_id, "--remote", &server.base, "--token", &token],
        &script(&t),
    );
    assert!(stdout(&o).contains("status: COMPLETED"), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let remote_log = String::from_utf8(
        server.gateway.service().export(&vca_survey::store::ExportFilter::all(), vca_survey::store::ExportFormat::JsonLines).unwrap(),
    )
    .unwrap();
    assert_eq!(log_shape(&local_log), log_shape(&remote_log));
    drop(rt);
}
