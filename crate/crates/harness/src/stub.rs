//! Local stand-in for a chat-completion endpoint, for tests and dry runs.
//!
//! The stub knows the gold TVL for each question it may be asked and
//! answers according to its [`StubMode`]. A scripted list of HTTP statuses
//! can be served first to exercise retry handling.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};
use tvl_core::tvl::{parse_tvl, render_tvl, AreaRef};

use crate::retrieve::tokenize;
use crate::DatasetRecord;

pub const CORRUPT_AREA: &str = "Atlantis";
const EMBED_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubMode {
    /// Answer with the gold TVL.
    Echo,
    /// Gold TVL with the area replaced by [`CORRUPT_AREA`].
    AreaCorruptor,
    /// Gold TVL, except every n-th known question (in sorted order) gets prose.
    GarbageEvery(usize),
    /// The same completion for every request.
    Fixed(String),
}

impl std::str::FromStr for StubMode {
    type Err = String;

    fn from_str(s: &str) -> Result<StubMode, String> {
        match s {
            "echo" => Ok(StubMode::Echo),
            "area-corruptor" => Ok(StubMode::AreaCorruptor),
            _ => s
                .strip_prefix("garbage-every-")
                .and_then(|n| n.parse().ok())
                .filter(|n| *n > 0)
                .map(StubMode::GarbageEvery)
                .ok_or_else(|| format!("unknown stub mode `{s}` (echo, area-corruptor, garbage-every-N)")),
        }
    }
}

struct State {
    mode: StubMode,
    answers: HashMap<String, String>,
    garbage: BTreeSet<String>,
    script: Mutex<VecDeque<u16>>,
    require_key: Mutex<Option<String>>,
    hits: AtomicUsize,
}

pub struct StubServer {
    server: Arc<Server>,
    state: Arc<State>,
    handle: Option<JoinHandle<()>>,
    port: u16,
}

impl StubServer {
    /// Starts serving on an ephemeral localhost port. Later records win
    /// when two share a question.
    pub fn start(mode: StubMode, records: &[DatasetRecord]) -> std::io::Result<StubServer> {
        let answers: HashMap<String, String> =
            records.iter().map(|r| (r.question.trim().to_string(), r.tvl.clone())).collect();
        let garbage = match mode {
            StubMode::GarbageEvery(n) => {
                let mut qs: Vec<&String> = answers.keys().collect();
                qs.sort();
                qs.into_iter().skip(n - 1).step_by(n).cloned().collect()
            }
            _ => BTreeSet::new(),
        };
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(std::io::Error::other)?);
        let port = server.server_addr().to_ip().map(|a| a.port()).ok_or_else(|| std::io::Error::other("no ip address"))?;
        let state = Arc::new(State {
            mode,
            answers,
            garbage,
            script: Mutex::new(VecDeque::new()),
            require_key: Mutex::new(None),
            hits: AtomicUsize::new(0),
        });
        let (srv, st) = (server.clone(), state.clone());
        let handle = std::thread::spawn(move || {
            for req in srv.incoming_requests() {
                handle(&st, req);
            }
        });
        Ok(StubServer { server, state, handle: Some(handle), port })
    }

    /// Statuses returned, in order, before normal answers resume.
    pub fn with_script(self, statuses: &[u16]) -> StubServer {
        self.state.script.lock().unwrap().extend(statuses);
        self
    }

    /// Rejects requests without `Authorization: Bearer <key>` with 401.
    pub fn with_key(self, key: &str) -> StubServer {
        *self.state.require_key.lock().unwrap() = Some(key.to_string());
        self
    }

    /// Base URL, to be used as a model endpoint.
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}/v1", self.port)
    }

    pub fn hits(&self) -> usize {
        self.state.hits.load(Ordering::SeqCst)
    }

    /// Questions the stub answers with garbage.
    pub fn garbage_questions(&self) -> &BTreeSet<String> {
        &self.state.garbage
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn answer(state: &State, question: &str) -> String {
    let question = question.trim();
    let gold = match (&state.mode, state.answers.get(question)) {
        (StubMode::Fixed(text), _) => return text.clone(),
        (_, None) => return "Sorry, I do not know how to write that query.".into(),
        (_, Some(g)) => g,
    };
    match &state.mode {
        StubMode::AreaCorruptor => match parse_tvl(gold) {
            Ok(mut q) => {
                q.area = AreaRef::new(CORRUPT_AREA);
                render_tvl(&q)
            }
            Err(_) => gold.clone(),
        },
        StubMode::GarbageEvery(_) if state.garbage.contains(question) => {
            "Here is a chart of the data you asked about, grouped nicely.".into()
        }
        _ => gold.clone(),
    }
}

fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    for t in tokenize(text) {
        let h = t.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        v[(h % EMBED_DIM as u64) as usize] += 1.0;
    }
    v
}

fn json_response(status: u16, body: &Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_data(body.to_string().into_bytes()).with_status_code(status).with_header(header)
}

fn route(state: &State, url: &str, auth: Option<&str>, body: &str) -> (u16, Value) {
    if let Some(key) = state.require_key.lock().unwrap().as_deref() {
        if auth != Some(format!("Bearer {key}").as_str()) {
            return (401, json!({ "error": { "message": "invalid api key" } }));
        }
    }
    let req: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return (400, json!({ "error": { "message": e.to_string() } })),
    };
    if url.ends_with("/embeddings") {
        let inputs: Vec<&str> = match &req["input"] {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let data: Vec<Value> =
            inputs.iter().enumerate().map(|(i, t)| json!({ "index": i, "embedding": embed(t) })).collect();
        return (200, json!({ "object": "list", "data": data }));
    }
    if !url.ends_with("/chat/completions") {
        return (404, json!({ "error": { "message": format!("no route {url}") } }));
    }
    if let Some(status) = state.script.lock().unwrap().pop_front() {
        return (status, json!({ "error": { "message": "scripted failure" } }));
    }
    let question = req["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("");
    let content = answer(state, question);
    (
        200,
        json!({
            "id": "stub",
            "object": "chat.completion",
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": content }, "finish_reason": "stop" }],
        }),
    )
}

fn handle(state: &State, mut req: tiny_http::Request) {
    state.hits.fetch_add(1, Ordering::SeqCst);
    let mut body = String::new();
    let _ = req.as_reader().read_to_string(&mut body);
    let auth = req.headers().iter().find(|h| h.field.equiv("Authorization")).map(|h| h.value.as_str().to_string());
    let (status, value) = route(state, req.url(), auth.as_deref(), &body);
    let _ = req.respond(json_response(status, &value));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse() {
        assert_eq!("garbage-every-5".parse(), Ok(StubMode::GarbageEvery(5)));
        assert!("garbage-every-0".parse::<StubMode>().is_err());
        assert!("loud".parse::<StubMode>().is_err());
    }

    #[test]
    fn embedding_is_token_bag() {
        assert_eq!(embed("Map of Miyun"), embed("miyun map OF"));
        assert_eq!(embed("a b c").iter().sum::<f64>(), 3.0);
    }
}
