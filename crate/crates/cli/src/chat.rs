//! Line-oriented chat client for the control API. Tool calls are printed as
//! they stream in; an approval request prompts on the same input.

use std::io::{self, BufRead, BufReader, Read, Write};

use cellx_core::agent::{AgentTurn, FieldChange, Outcome, ToolCall, ToolResult, TurnEvent};
use serde_json::{json, Value};

const ARGS_WIDTH: usize = 96;

struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    fn post(&self, path: &str, body: Value) -> Result<ureq::http::Response<ureq::Body>, String> {
        self.agent
            .post(&format!("{}{path}", self.base))
            .send_json(&body)
            .map_err(|e| format!("{}{path}: {e}", self.base))
    }
}

fn error_text(mut resp: ureq::http::Response<ureq::Body>) -> String {
    let status = resp.status().as_u16();
    let body: Value = resp.body_mut().read_json().unwrap_or(Value::Null);
    match (body["error"].as_str(), body["message"].as_str()) {
        (Some(kind), Some(msg)) => format!("{kind}: {msg}"),
        _ => format!("HTTP {status}"),
    }
}

/// Parses `text/event-stream` frames into turn events.
struct EventStream<R> {
    lines: io::Lines<BufReader<R>>,
}

impl<R: Read> EventStream<R> {
    fn next_event(&mut self) -> Option<Result<TurnEvent, String>> {
        let mut data = String::new();
        for line in self.lines.by_ref() {
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(e.to_string())),
            };
            if line.is_empty() {
                if data.is_empty() {
                    continue;
                }
                return Some(serde_json::from_str(&data).map_err(|e| format!("bad event: {e}")));
            }
            if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.strip_prefix(' ').unwrap_or(v));
            }
        }
        None
    }
}

fn compact(v: &Value) -> String {
    let s = v.to_string();
    if s.chars().count() <= ARGS_WIDTH {
        return s;
    }
    let cut: String = s.chars().take(ARGS_WIDTH - 3).collect();
    format!("{cut}...")
}

fn render_call(prefix: &str, call: &ToolCall) -> String {
    let status = match &call.result {
        ToolResult::Ok(_) => "ok".to_string(),
        ToolResult::Error { kind, .. } => format!("error {kind}"),
    };
    format!("  {prefix} {} {}  [{status}]", call.name, compact(&call.args))
}

fn render_diff(changes: &[FieldChange]) -> String {
    changes
        .iter()
        .map(|c| format!("    {}: {} -> {}\n", c.field, c.old_value, c.new_value))
        .collect()
}

fn render_finished(turn: &AgentTurn) -> String {
    let mut out = String::new();
    for call in &turn.rollback_calls {
        out.push_str(&render_call("<-", call));
        out.push('\n');
    }
    out.push_str(&turn.final_answer);
    out.push('\n');
    if !turn.retrieved_citations.is_empty() {
        out.push_str(&format!("  sources: {}\n", turn.retrieved_citations.join(", ")));
    }
    if let Some(o) = turn.outcome.filter(|o| *o != Outcome::Completed) {
        out.push_str(&format!("  outcome: {}\n", json!(o).as_str().unwrap_or("")));
    }
    out
}

pub fn run(endpoint: &str, auto: bool) -> Result<(), String> {
    let client = Client {
        agent: ureq::Agent::config_builder().http_status_as_error(false).build().into(),
        base: endpoint.trim_end_matches('/').to_string(),
    };
    if auto {
        eprintln!("{}", crate::AUTO_WARNING);
    }
    let policy = if auto { json!({"require_approval": false}) } else { Value::Null };
    let mut resp = client.post("/sessions", json!({ "policy": policy }))?;
    if resp.status().as_u16() != 201 {
        return Err(format!("creating session: {}", error_text(resp)));
    }
    let session: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
    let sid = session["session_id"].as_str().ok_or("session response without session_id")?.to_string();
    println!("session {sid} on {}; /quit or end of input leaves", client.base);

    let stdin = io::stdin();
    let mut input = stdin.lock().lines();
    let mut out = io::stdout();
    loop {
        print!("> ");
        out.flush().ok();
        let Some(line) = input.next() else {
            println!();
            return Ok(());
        };
        let line = line.map_err(|e| e.to_string())?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" || text == "/exit" {
            return Ok(());
        }
        let resp = client.post(&format!("/sessions/{sid}/message"), json!({ "text": text }))?;
        if resp.status().as_u16() != 200 {
            eprintln!("error: {}", error_text(resp));
            continue;
        }
        let mut events = EventStream {
            lines: BufReader::new(resp.into_body().into_reader()).lines(),
        };
        while let Some(event) = events.next_event() {
            match event? {
                TurnEvent::TurnStarted { .. } => {}
                TurnEvent::ToolCall { call, .. } => println!("{}", render_call("->", &call)),
                TurnEvent::ApprovalRequired { turn_id, call_id, diff } => {
                    println!("  approval required for {call_id}:");
                    print!("{}", render_diff(&diff.changes));
                    print!("  approve? [y/N] ");
                    out.flush().ok();
                    let answer = match input.next() {
                        Some(l) => l.map_err(|e| e.to_string())?,
                        None => String::new(),
                    };
                    let decision = if matches!(answer.trim(), "y" | "Y" | "yes") { "approved" } else { "rejected" };
                    println!("  {decision}");
                    let path = format!("/sessions/{sid}/turns/{turn_id}/approval");
                    let resp = client.post(&path, json!({ "decision": decision }))?;
                    if resp.status().as_u16() != 202 {
                        eprintln!("error: {}", error_text(resp));
                    }
                }
                TurnEvent::TurnFinished { turn } => print!("{}", render_finished(&turn)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_event_frames() {
        let body = "event: turn_started\nid: 0\ndata: {\"event\":\"turn_started\",\"session_id\":\"s\",\"turn_id\":\"t\",\"user_message\":\"hi\"}\n\n: keep-alive\n\n";
        let mut s = EventStream {
            lines: BufReader::new(body.as_bytes()).lines(),
        };
        assert!(matches!(s.next_event(), Some(Ok(TurnEvent::TurnStarted { .. }))));
        assert!(s.next_event().is_none());
    }

    #[test]
    fn long_args_are_truncated() {
        let v = json!({"text": "x".repeat(500)});
        let c = compact(&v);
        assert_eq!(c.chars().count(), ARGS_WIDTH);
        assert!(c.ends_with("..."));
    }

    #[test]
    fn diff_lines() {
        let changes = vec![FieldChange {
            field: "tx_power_dbm".into(),
            old_value: json!(30.0),
            new_value: json!(0.0),
        }];
        assert_eq!(render_diff(&changes), "    tx_power_dbm: 30.0 -> 0.0\n");
    }
}
