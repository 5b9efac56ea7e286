#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read};
use std::sync::Arc;

use cellx_core::agent::{AuditLog, ManualClock, Policy, PolicyOverrides, Provider, ProviderResponse, Rig, ScriptedProvider};
use cellx_core::knowledge::shipped_index;
use cellx_core::scenario::Scenario;
use cellx_core::station::Station;
use cellx_server::{router, ProviderFactory, Service};
use serde_json::{json, Value};

pub struct TestServer {
    pub base: String,
    pub service: Arc<Service>,
}

/// Serves `service` on an ephemeral loopback port from a background runtime.
pub fn start(service: Service) -> TestServer {
    let service = Arc::new(service);
    let (tx, rx) = std::sync::mpsc::channel();
    let svc = Arc::clone(&service);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(svc)).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    TestServer {
        base: format!("http://{addr}"),
        service,
    }
}

/// A rig on a frozen clock so turns compare byte-for-byte across runs.
pub fn rig(seed: u64) -> Rig {
    Rig::new(Station::new(seed), shipped_index(), AuditLog::in_memory(Arc::new(ManualClock::new(1_000))))
        .with_sleeper(|_| {})
}

pub fn scripted(script: Vec<ProviderResponse>) -> ProviderFactory {
    Arc::new(move || Ok(Box::new(ScriptedProvider::new(script.clone())) as Box<dyn Provider>))
}

pub fn configure_band3_script() -> Vec<ProviderResponse> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/configure-band3.toml");
    Scenario::load(path).unwrap().script().to_vec()
}

pub fn service(seed: u64, script: Vec<ProviderResponse>, overrides: PolicyOverrides) -> Service {
    let defaults = Policy::default().with_overrides(&overrides).unwrap();
    Service::new(rig(seed), defaults, scripted(script))
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn read(mut r: ureq::http::Response<ureq::Body>) -> (u16, Value) {
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    let v = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() };
    (status, v)
}

pub fn get(url: &str) -> (u16, Value) {
    read(agent().get(url).call().unwrap())
}

pub fn post(url: &str, body: Value) -> (u16, Value) {
    read(agent().post(url).send_json(&body).unwrap())
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    read(agent().post(url).header("content-type", "application/json").send(body).unwrap())
}

pub fn new_session(base: &str, policy: Value) -> String {
    let (status, v) = post(&format!("{base}/sessions"), json!({ "policy": policy }));
    assert_eq!(status, 201, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

/// Incremental reader over a `text/event-stream` body.
pub struct Sse {
    lines: std::io::Lines<BufReader<Box<dyn Read + Send>>>,
}

#[derive(Debug, Clone)]
pub struct SseEvent {
    pub name: String,
    pub id: Option<String>,
    pub data: Value,
}

impl Sse {
    /// Next event, or `None` once the server closes the stream.
    pub fn next_event(&mut self) -> Option<SseEvent> {
        let (mut name, mut id, mut data) = (None, None, String::new());
        loop {
            let line = self.lines.next()?.unwrap();
            if line.is_empty() {
                if let Some(name) = name.take() {
                    return Some(SseEvent {
                        name,
                        id: id.take(),
                        data: serde_json::from_str(&data).unwrap(),
                    });
                }
                continue;
            }
            if let Some(v) = line.strip_prefix("event:") {
                name = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("id:") {
                id = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.strip_prefix(' ').unwrap_or(v));
            }
        }
    }

    pub fn until(&mut self, name: &str) -> Vec<SseEvent> {
        let mut out = Vec::new();
        while let Some(e) = self.next_event() {
            let stop = e.name == name;
            out.push(e);
            if stop {
                break;
            }
        }
        out
    }

    pub fn rest(&mut self) -> Vec<SseEvent> {
        std::iter::from_fn(|| self.next_event()).collect()
    }
}

pub fn send_message(base: &str, session: &str, text: &str) -> Result<Sse, (u16, Value)> {
    let resp = agent()
        .post(&format!("{base}/sessions/{session}/message"))
        .send_json(json!({ "text": text }))
        .unwrap();
    if resp.status().as_u16() != 200 {
        return Err(read(resp));
    }
    let ct = resp.headers().get("content-type").unwrap().to_str().unwrap().to_string();
    assert!(ct.starts_with("text/event-stream"), "{ct}");
    let reader: Box<dyn Read + Send> = Box::new(resp.into_body().into_reader());
    Ok(Sse {
        lines: BufReader::new(reader).lines(),
    })
}
