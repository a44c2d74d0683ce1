mod common;


use common::*;
use vca_survey::gateway::Clock;
use futures::{SinkExt, StreamExt};
use rand::{Rng, SeedableRng};
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

#[tokio::test]
async fn fluid_session_over_http() {
    let s = spawn().await;
    let tok = s.enroll("P01").await;
    let (id, started) = s.start(&tok, "P01", "fluidmonitor").await;
    assert!(started["prompt"].as_str().unwrap().contains("User ID"), "{started}");

    let r = s.say(&tok, &id, "P01 yes").await;
    assert!(r["say"].as_str().unwrap().starts_with("I heard P01"), "{r}");
    s.say(&tok, &id, "yes").await;
    s.say(&tok, &id, "4").await;
    s.say(&tok, &id, "yes").await;
    let r = s.say(&tok, &id, "3 cups").await;
    assert!(r["say"].as_str().unwrap().contains("710 ml"), "{r}");
    let r = s.say(&tok, &id, "yes").await;
    assert_eq!(r["session_status"], "COMPLETED");
    assert_eq!(r["recorded"]["question_id"], "fluid_intake");
    assert_eq!(r["progress"]["remaining_ml"], 1893 - 710);

    let (status, rem) = s.get("/v1/users/P01/fluid/remaining", &tok).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rem["remaining_ml"], 1183);
    assert_eq!(rem["total_ml"], 710);

    let (_, summary) = s.get("/v1/users/P01/fluid/summary?from=2018-06-18&to=2018-06-18", &tok).await;
    assert_eq!(summary[0]["total_ml"], 710);
    assert_eq!(summary[0]["status"], "UNDER");

    let (_, state) = s.get(&format!("/v1/sessions/{id}"), &tok).await;
    assert_eq!(state["phase"], "COMPLETED");
    assert_eq!(state["answers"].as_object().unwrap().len(), 3);
}

#[tokio::test]
async fn error_statuses() {
    let s = spawn().await;
    let a = s.enroll("P01").await;
    let b = s.enroll("P02").await;
    let (id, _) = s.start(&a, "P01", "fluidmonitor").await;

    let (st, body) = s.call(Method::GET, &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(st, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "unauthenticated");
    assert_eq!(s.get(&format!("/v1/sessions/{id}"), "nonsense").await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(s.get(&format!("/v1/sessions/{id}"), &b).await.0, StatusCode::FORBIDDEN);
    assert_eq!(s.get("/v1/sessions/nope", &a).await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.post("/v1/sessions", &a, json!({"user": "P01", "flow": "nope"})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.post("/v1/users", &a, json!({"user_id": "X", "password": "p"})).await.0, StatusCode::FORBIDDEN);

    let raw = s
        .client
        .post(format!("{}/v1/sessions/{id}/utterances", s.base))
        .bearer_auth(&a)
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status(), StatusCode::BAD_REQUEST);

    let (st, _) = s.post(&format!("/v1/sessions/{id}/timeout?force=false"), &a, json!({})).await;
    assert_eq!(st, StatusCode::CONFLICT);

    for _ in 0..2 {
        s.post(&format!("/v1/sessions/{id}/timeout"), &a, json!({})).await;
    }
    let (st, body) = s.post(&format!("/v1/sessions/{id}/utterances"), &a, json!({"text": "P01"})).await;
    assert_eq!(st, StatusCode::GONE, "{body}");
}

#[tokio::test]
async fn timeouts_abandon_in_order() {
    let s = spawn().await;
    let tok = s.enroll("P02").await;
    let (id, _) = s.start(&tok, "P02", "fluidmonitor").await;
    let first = s.post(&format!("/v1/sessions/{id}/timeout"), &tok, json!({})).await.1;
    assert!(first["say"].as_str().unwrap().contains("Are you still there?"), "{first}");
    let second = s.post(&format!("/v1/sessions/{id}/timeout"), &tok, json!({})).await.1;
    assert_eq!(second["session_status"], "ABANDONED");
    assert_eq!(
        s.kinds(&tok, &id).await,
        ["SESSION_STARTED", "PROMPT_ISSUED", "TIMEOUT", "PROMPT_ISSUED", "TIMEOUT", "SESSION_ABANDONED"]
    );
}

#[tokio::test]
async fn sweeper_injects_timeouts_by_server_time() {
    let s = spawn().await;
    let tok = s.enroll("P01").await;
    let (id, _) = s.start(&tok, "P01", "fluidmonitor").await;
    s.clock.advance(9_000);
    s.gateway.tick(s.clock.now());
    assert_eq!(s.kinds(&tok, &id).await.len(), 2);
    s.clock.advance(1_001);
    s.gateway.tick(s.clock.now());
    assert_eq!(s.kinds(&tok, &id).await.last().unwrap(), "PROMPT_ISSUED");
    assert!(s.kinds(&tok, &id).await.contains(&"TIMEOUT".to_string()));

    // A late answer is preceded by the timeout it missed; a client clock is
    // recorded but ignored.
    let (id, _) = s.start(&tok, "P01", "fluidmonitor").await;
    s.clock.advance(15_000);
    let (st, r) = s
        .post(&format!("/v1/sessions/{id}/utterances"), &tok, json!({"text": "P01 yes", "client_ts": 0}))
        .await;
    assert_eq!(st, StatusCode::OK);
    assert!(r["say"].as_str().unwrap().starts_with("I heard P01"));
    let kinds = s.kinds(&tok, &id).await;
    assert_eq!(&kinds[2..], ["TIMEOUT", "PROMPT_ISSUED", "UTTERANCE_RECEIVED", "READBACK_ISSUED"]);
}

#[tokio::test]
async fn repeated_request_id_commits_once() {
    let s = spawn().await;
    let tok = s.enroll("P01").await;
    let (id, _) = s.start(&tok, "P01", "fluidmonitor").await;
    s.say(&tok, &id, "P01 yes").await;
    let body = json!({"text": "yes", "request_id": "req-1"});
    let path = format!("/v1/sessions/{id}/utterances");
    let (_, a) = s.post(&path, &tok, body.clone()).await;
    let (_, b) = s.post(&path, &tok, body).await;
    assert_eq!(a["duplicate"], false);
    assert_eq!(b["duplicate"], true);
    assert_eq!(a["say"], b["say"]);
    let commits = s.kinds(&tok, &id).await.iter().filter(|k| *k == "ANSWER_COMMITTED").count();
    assert_eq!(commits, 1);
}

#[tokio::test]
async fn linked_user_never_hears_user_id_prompt() {
    let s = spawn().await;
    let tok = s.enroll("P03").await;
    let (st, link) = s.post("/v1/link/begin", &tok, json!({})).await;
    assert_eq!(st, StatusCode::CREATED, "{link}");
    let (st, _) = s.post("/v1/link/confirm", &tok, json!({"token": link["token"], "password": "wrong"})).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, profile) = s.post("/v1/link/confirm", &tok, json!({"token": link["token"], "password": "pw-P03"})).await;
    assert_eq!(st, StatusCode::OK, "{profile}");
    assert_eq!(profile["link_status"], "LINKED");

    for _ in 0..3 {
        let (id, started) = s.start(&tok, "P03", "fluidmonitor").await;
        assert!(!started["prompt"].as_str().unwrap().contains("User ID"));
        s.say(&tok, &id, "5").await;
        s.say(&tok, &id, "yes").await;
        s.say(&tok, &id, "500 ml").await;
        let done = s.say(&tok, &id, "yes").await;
        assert_eq!(done["session_status"], "COMPLETED");
        let (_, events) = s.get(&format!("/v1/sessions/{id}/events"), &tok).await;
        let events = events.as_array().unwrap();
        assert!(events.iter().all(|e| e["payload"]["question_id"] != "user_id"));
        let (_, state) = s.get(&format!("/v1/sessions/{id}"), &tok).await;
        assert_eq!(state["answers"].as_object().unwrap().len(), 2);
    }
}

#[tokio::test]
async fn goal_and_export_are_scoped_to_the_caller() {
    let s = spawn().await;
    let a = s.enroll("P01").await;
    let b = s.enroll("P02").await;
    let (st, p) = s.call(Method::PUT, "/v1/users/P01/goal", Some(&a), Some(json!({"goal_ml": 1500, "mode": "LIMIT"}))).await;
    assert_eq!(st, StatusCode::OK, "{p}");
    assert_eq!(p["goal_mode"], "LIMIT");
    let (st, _) = s.call(Method::PUT, "/v1/users/P01/goal", Some(&a), Some(json!({"goal_ml": 0}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = s.call(Method::PUT, "/v1/users/P01/goal", Some(&b), Some(json!({"goal_ml": 900}))).await;
    assert_eq!(st, StatusCode::FORBIDDEN);

    s.start(&b, "P02", "fluidmonitor").await;
    let (st, csv) = s.get("/v1/export?format=csv", &a).await;
    assert_eq!(st, StatusCode::OK);
    let csv = csv.as_str().unwrap();
    assert!(csv.starts_with("stream_id,seq,kind,at_utc_ms,user_id,flow_id,question_id,value_kind,value_canonical,raw_utterance"));
    assert!(!csv.contains("P02"));
    assert_eq!(s.get("/v1/export?users=P02", &a).await.0, StatusCode::FORBIDDEN);
    assert_eq!(s.get("/v1/export?format=xml", &a).await.0, StatusCode::BAD_REQUEST);
    let (_, all) = s.get("/v1/export?format=jsonl&from=2018-06-18&to=2018-06-18", ADMIN).await;
    assert!(all.as_str().unwrap().contains("P02"));
}

#[tokio::test]
async fn mean_aggregate() {
    let s = spawn().await;
    let a = s.enroll("P01").await;
    let (id, _) = s.start(&a, "P01", "fluidmonitor").await;
    for t in ["P01 yes", "yes", "3", "yes", "2 cups", "yes"] {
        s.say(&a, &id, t).await;
    }
    let (st, m) = s.get("/v1/aggregates/fluid/mean?from=2018-06-17&to=2018-06-18", &a).await;
    assert_eq!(st, StatusCode::OK, "{m}");
    assert_eq!(m.as_array().unwrap().len(), 1, "days without data have no point");
    assert_eq!((m[0]["local_date"].as_str(), m[0]["n"].as_u64()), (Some("2018-06-18"), Some(1)));
    assert_eq!(m[0]["mean_ml"], 473.0);
    assert_eq!(s.get("/v1/aggregates/fluid/mean?from=2018-06-19&to=2018-06-18", &a).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/v1/aggregates/fluid/mean", &a).await.0, StatusCode::BAD_REQUEST);
}

/// Random user tokens aimed at other users' data are refused and leave the
/// log untouched.
#[tokio::test]
async fn tokens_never_cross_users() {
    let s = spawn().await;
    let users = ["P01", "P02", "P03", "P04"];
    let mut tokens = Vec::new();
    let mut sessions = Vec::new();
    for u in users {
        let t = s.enroll(u).await;
        sessions.push(s.start(&t, u, "fluidmonitor").await.0);
        tokens.push(t);
    }
    let before = s.gateway.service().store().len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let me = rng.gen_range(0..users.len());
        let other = (me + rng.gen_range(1..users.len())) % users.len();
        let (tok, u, sid) = (&tokens[me], users[other], &sessions[other]);
        let (st, _) = match rng.gen_range(0..10) {
            0 => s.get(&format!("/v1/sessions/{sid}"), tok).await,
            1 => s.get(&format!("/v1/sessions/{sid}/events"), tok).await,
            2 => s.post(&format!("/v1/sessions/{sid}/utterances"), tok, json!({"text": "yes"})).await,
            3 => s.post(&format!("/v1/sessions/{sid}/timeout"), tok, json!({})).await,
            4 => s.get(&format!("/v1/users/{u}/fluid/summary"), tok).await,
            5 => s.get(&format!("/v1/users/{u}/fluid/remaining"), tok).await,
            6 => s.get(&format!("/v1/users/{u}/sleep/summary"), tok).await,
            7 => s.call(Method::PUT, &format!("/v1/users/{u}/goal"), Some(tok), Some(json!({"goal_ml": 5}))).await,
            8 => s.post("/v1/sessions", tok, json!({"user": u, "flow": "sleepy"})).await,
            _ => s.get(&format!("/v1/export?users={u}"), tok).await,
        };
        assert_eq!(st, StatusCode::FORBIDDEN);
    }
    assert_eq!(s.gateway.service().store().len(), before);
}

async fn next_json<S>(ws: &mut S) -> Value
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(5), ws.next()).await.expect("push within 5s");
        if let Message::Text(t) = msg.unwrap().unwrap() {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

#[tokio::test]
async fn push_channel_streams_resumes_and_warns() {
    let s = spawn().await;
    let tok = s.enroll("P01").await;
    let (id, _) = s.start(&tok, "P01", "fluidmonitor").await;
    let ws_url = format!("{}/v1/chat/{id}?token={tok}", s.base.replace("http", "ws"));

    let (mut ws, _) = tokio_tungstenite::connect_async(&ws_url).await.unwrap();
    let started = next_json(&mut ws).await;
    assert_eq!((started["seq"].as_u64(), started["kind"].as_str()), (Some(1), Some("SESSION_STARTED")));
    let prompt = next_json(&mut ws).await;
    assert!(prompt["say"].as_str().unwrap().contains("User ID"));

    // Answers may be sent on the channel itself.
    ws.send(Message::Text(json!({"text": "P01 yes"}).to_string().into())).await.unwrap();
    let mut seen = vec![];
    while seen.last().map(|m: &Value| m["kind"] != "READBACK_ISSUED").unwrap_or(true) {
        seen.push(next_json(&mut ws).await);
    }
    assert_eq!(seen.iter().map(|m| m["seq"].as_u64().unwrap()).collect::<Vec<_>>(), [3, 4]);
    drop(ws);

    // Progress made while disconnected arrives on resume, once, in order.
    s.say(&tok, &id, "yes").await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("{ws_url}&from_seq=5")).await.unwrap();
    let mut seqs = vec![];
    loop {
        let m = next_json(&mut ws).await;
        seqs.push(m["seq"].as_u64().unwrap());
        if m["kind"] == "ANSWER_COMMITTED" {
            assert_eq!(m["recorded"], json!({"question_id": "user_id", "value": "P01"}));
        }
        if m["kind"] == "PROMPT_ISSUED" {
            break;
        }
    }
    assert_eq!(seqs, [5, 6, 7, 8]);

    s.say(&tok, &id, "3").await;
    let live = next_json(&mut ws).await;
    assert_eq!(live["seq"], 9);

    // Deadline warning two seconds ahead, from the sweeper.
    let _readback = next_json(&mut ws).await;
    s.clock.advance(8_500);
    s.gateway.tick(s.clock.now());
    let warn = next_json(&mut ws).await;
    assert_eq!(warn["type"], "timeout_warning", "{warn}");
    assert_eq!(warn["remaining_ms"], 1_500);

    let (st, _) = s.get(&format!("/v1/chat/{id}"), "").await;
    assert_eq!(st, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn nudge_pushed_at_local_nine() {
    let s = spawn_at(T0 - 60_000).await;
    let tok = s.enroll("P01").await;
    let (id, _) = s.start(&tok, "P01", "sleepy").await;
    s.gateway.tick(s.clock.now());
    let ws_url = format!("{}/v1/chat/{id}?token={tok}", s.base.replace("http", "ws"));
    let (mut ws, _) = tokio_tungstenite::connect_async(&ws_url).await.unwrap();
    next_json(&mut ws).await;
    next_json(&mut ws).await;
    s.clock.set(T0);
    s.gateway.tick(T0);
    let mut m = next_json(&mut ws).await;
    while m["type"] != "nudge" {
        m = next_json(&mut ws).await;
    }
    assert_eq!(m["nudge"]["flow_id"], "fluidmonitor");
    assert_eq!(m["nudge"]["local_time"], "09:00");
    let (_, list) = s.get("/v1/users/P01/nudges", &tok).await;
    assert!(list.as_array().unwrap().iter().any(|n| n["status"] == "FIRED"));
}
