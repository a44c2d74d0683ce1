//! Server push over `/v1/chat/{session_id}`.
//!
//! Every message that mirrors a log record carries its `seq`. A client that
//! drops reconnects with `?from_seq=<last seen + 1>` and receives the missing
//! records from the log before live messages resume, so nothing is lost or
//! repeated. Warnings, nudges and progress are live only.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures::stream::SplitSink;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use super::auth::{Caller, Params};
use super::{ApiError, Gateway};
use crate::analytics::Remaining;
use crate::engine::{SessionEvent, Utterance};
use crate::scheduler::Nudge;
use crate::store::EventRecord;
use crate::time::Timestamp;

#[derive(Debug, Clone)]
pub enum Push {
    Event(EventRecord),
    TimeoutWarning { session_id: String, deadline: Timestamp, remaining_ms: i64 },
    Progress { session_id: String, progress: Remaining },
    Nudge(Nudge),
}

#[derive(Debug, Clone)]
pub struct Hub {
    tx: broadcast::Sender<Push>,
}

impl Default for Hub {
    fn default() -> Self {
        Hub { tx: broadcast::channel(4096).0 }
    }
}

impl Hub {
    pub fn publish(&self, push: Push) {
        // No receivers is fine.
        let _ = self.tx.send(push);
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Push> {
        self.tx.subscribe()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordedView {
    question_id: String,
    value: String,
}

/// The push form of one log record.
pub fn event_message(r: &EventRecord) -> Value {
    let mut msg = json!({
        "type": "event",
        "session_id": r.stream_id,
        "seq": r.seq,
        "kind": r.kind,
        "at": r.at,
        "payload": r.payload,
    });
    if let Ok((_, event)) = SessionEvent::from_record(r) {
        if let Some(say) = event.spoken_text() {
            msg["say"] = json!(say);
        }
        if let SessionEvent::AnswerCommitted(c) = &event {
            msg["recorded"] = json!(RecordedView { question_id: c.question_id.clone(), value: c.value.canonical() });
        }
    }
    msg
}

fn live_message(push: &Push, session_id: &str, user_id: &str) -> Option<Value> {
    match push {
        Push::TimeoutWarning { session_id: s, deadline, remaining_ms } if s == session_id => Some(json!({
            "type": "timeout_warning",
            "session_id": s,
            "deadline": deadline,
            "remaining_ms": remaining_ms,
        })),
        Push::Progress { session_id: s, progress } if s == session_id => {
            Some(json!({ "type": "progress", "session_id": s, "progress": progress }))
        }
        Push::Nudge(n) if n.user_id == user_id => Some(json!({ "type": "nudge", "nudge": n })),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
pub struct ChatQuery {
    from_seq: Option<u64>,
}

pub async fn chat(
    State(g): State<Gateway>,
    Path(session_id): Path<String>,
    Params(q): Params<ChatQuery>,
    caller: Caller,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let sid = session_id.clone();
    let state = g.run(move |s| s.session(&sid)).await?;
    caller.check_user(&state.user_id)?;
    let from = q.from_seq.unwrap_or(1).max(1);
    Ok(ws.on_upgrade(move |socket| async move {
        if let Err(e) = run_chat(g, socket, session_id, state.user_id, from).await {
            tracing::debug!(error = %e, "chat channel closed");
        }
    }))
}

type Sink = SplitSink<WebSocket, Message>;

async fn send(sink: &mut Sink, v: &Value) -> Result<(), axum::Error> {
    sink.send(Message::Text(v.to_string().into())).await
}

/// Sends every record from `next` onwards that is already in the log.
async fn catch_up(g: &Gateway, sink: &mut Sink, session_id: &str, next: &mut u64) -> Result<(), axum::Error> {
    let sid = session_id.to_string();
    let from = *next;
    let records = g.run(move |s| s.session_records(&sid, from)).await.unwrap_or_default();
    for r in records {
        if r.seq == *next {
            send(sink, &event_message(&r)).await?;
            *next += 1;
        }
    }
    Ok(())
}

async fn run_chat(g: Gateway, socket: WebSocket, session_id: String, user_id: String, from: u64) -> Result<(), axum::Error> {
    // Subscribe before reading the backlog so nothing falls between the two.
    let mut rx = g.inner.hub.subscribe();
    let (mut sink, mut stream) = socket.split();
    let mut next = from;
    catch_up(&g, &mut sink, &session_id, &mut next).await?;
    loop {
        tokio::select! {
            push = rx.recv() => match push {
                Ok(Push::Event(r)) if r.stream_id == session_id => {
                    if r.seq == next {
                        send(&mut sink, &event_message(&r)).await?;
                        next += 1;
                    } else if r.seq > next {
                        catch_up(&g, &mut sink, &session_id, &mut next).await?;
                    }
                }
                Ok(p) => {
                    if let Some(msg) = live_message(&p, &session_id, &user_id) {
                        send(&mut sink, &msg).await?;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => catch_up(&g, &mut sink, &session_id, &mut next).await?,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<Utterance>(&text) {
                        Ok(u) => g.utterance(&session_id, u).await.err(),
                        Err(e) => Some(ApiError::bad_request(e.to_string())),
                    };
                    if let Some(e) = reply {
                        send(&mut sink, &json!({ "type": "error", "status": e.status.as_u16(), "error": e.code, "message": e.message })).await?;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    Ok(())
}
