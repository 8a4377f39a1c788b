#![allow(dead_code)]

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use dse_cli::config::ServiceConfig;
use dse_cli::server::{serve_on, AppState};
use dse_core::agent::{AgentState, StructuredReply};
use dse_core::design_space::{parse_space, DesignSpace, ParametersSet, Value as Literal};

pub const L2_LARGE: &str = include_str!("../../../../data/l2_large.dse");

pub fn space() -> DesignSpace {
    parse_space(L2_LARGE).unwrap()
}

pub fn cfg(size: &str, assoc: &str, mshrs: &str, tgts: &str, policy: &str) -> ParametersSet {
    [
        ("l2_size", size),
        ("l2_assoc", assoc),
        ("l2_mshrs", mshrs),
        ("l2_mshr_tgts", tgts),
        ("l2_policy", policy),
    ]
    .into_iter()
    .map(|(k, v)| (k, Literal::new(v).unwrap()))
    .collect()
}

pub fn smallest() -> ParametersSet {
    cfg("128KiB", "2", "16", "6", "LRURP")
}

/// ANA, one GEN of `concurrency` sets, ANA, EXIT on the smallest config.
pub fn one_gen_script(concurrency: usize) -> Vec<StructuredReply> {
    let sets = space().enumerate().take(concurrency).collect();
    vec![
        StructuredReply::ana(AgentState::Gen, "start small"),
        StructuredReply::gen(sets, AgentState::Ana, true, "first batch"),
        StructuredReply::ana(AgentState::Exit, "good enough"),
        StructuredReply::exit(smallest(), "cheapest"),
    ]
}

pub fn write_script(path: &Path, replies: &[StructuredReply]) {
    let raw: Vec<String> = replies.iter().map(StructuredReply::to_json).collect();
    std::fs::write(path, dse_core::agent::render_script(&raw)).unwrap();
}

pub struct Server {
    pub base: String,
}

/// Starts the service on an ephemeral port in a background runtime.
pub fn start(cfg: ServiceConfig) -> Server {
    let app = Arc::new(AppState::new(cfg).unwrap());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    std::thread::spawn(move || rt.block_on(serve_on(listener, app)).unwrap());
    Server {
        base: format!("http://{addr}"),
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

impl Server {
    pub fn get(&self, path: &str) -> (u16, Value) {
        let mut r = agent().get(&format!("{}{path}", self.base)).call().unwrap();
        let status = r.status().as_u16();
        (status, r.body_mut().read_json().unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut r = agent().post(&format!("{}{path}", self.base)).send_json(&body).unwrap();
        let status = r.status().as_u16();
        (status, r.body_mut().read_json().unwrap_or(Value::Null))
    }

    pub fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let mut r = agent().put(&format!("{}{path}", self.base)).send_json(&body).unwrap();
        let status = r.status().as_u16();
        (status, r.body_mut().read_json().unwrap_or(Value::Null))
    }

    /// Polls a session until `done` holds or ten seconds pass.
    pub fn wait(&self, id: &str, done: impl Fn(&Value) -> bool) -> Value {
        for _ in 0..1000 {
            let (_, v) = self.get(&format!("/sessions/{id}"));
            if done(&v) {
                return v;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let (_, v) = self.get(&format!("/sessions/{id}"));
        panic!("session {id} never reached the expected state: {v}");
    }
}

pub fn service_config(dir: &Path, script: &Path) -> ServiceConfig {
    let space = dir.join("space.dse");
    std::fs::write(&space, L2_LARGE).unwrap();
    let text = format!(
        "dsdb_path = \"db/dsdb.jsonl\"\nspace_path = \"space.dse\"\nreport_dir = \"report\"\n[llm]\nprovider = \"mock\"\nscript = {:?}\n",
        script.display().to_string()
    );
    let path = dir.join("service.toml");
    std::fs::write(&path, text).unwrap();
    ServiceConfig::load(&path).unwrap()
}

/// A fake OpenAI-compatible endpoint that serves canned replies.
pub struct FakeLlm {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<(HeaderMap, Value)>>>,
}

#[derive(Clone)]
struct FakeState {
    replies: Arc<Mutex<VecDeque<String>>>,
    requests: Arc<Mutex<Vec<(HeaderMap, Value)>>>,
    delay: Duration,
}

async fn completions(
    State(s): State<FakeState>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    s.requests.lock().unwrap().push((headers, body));
    tokio::time::sleep(s.delay).await;
    match s.replies.lock().unwrap().pop_front() {
        Some(content) => (
            StatusCode::OK,
            Json(json!({ "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }] })),
        ),
        None => (
            StatusCode::TOO_MANY_REQUESTS,
            Json(json!({ "error": { "message": "quota exceeded" } })),
        ),
    }
}

pub fn fake_llm(replies: Vec<String>, delay: Duration) -> FakeLlm {
    let requests = Arc::new(Mutex::new(Vec::new()));
    let state = FakeState {
        replies: Arc::new(Mutex::new(replies.into())),
        requests: requests.clone(),
        delay,
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(state);
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || rt.block_on(async { axum::serve(listener, app).await.unwrap() }));
    FakeLlm {
        base_url: format!("http://{addr}/v1"),
        requests,
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_dse"))
}
