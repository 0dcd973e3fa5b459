//! Fixture-replay HTTP server standing in for the model endpoint.
//!
//! Routes match on a URL path suffix and/or a substring of the request body;
//! the first matching route answers. Each route replays its replies in order
//! and then keeps repeating the last one.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evalkit::{EmbeddingProvider, HashingEmbedder, SUGGESTION_METRICS, SUMMARY_METRICS};

pub const DOUBAO_OPERATION: &str = "Entered the concert page in the music ticketing app, viewed details and popular reviews for the 2025 Leon Tour Concert Hangzhou stop, clicked 'Book Now', read the ticket-purchasing guide";
pub const DOUBAO_INTENT: &str = "Book tickets for the 2025 Leon Tour Concert Hangzhou stop";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockReply {
    #[serde(default = "ok")]
    pub status: u16,
    /// Assistant text, wrapped in a chat-completions envelope.
    #[serde(default)]
    pub content: Option<String>,
    /// Sent verbatim.
    #[serde(default)]
    pub json: Option<Value>,
    /// Sent verbatim, for non-JSON bodies.
    #[serde(default)]
    pub raw: Option<String>,
    /// Answer `/embeddings` with a hashing embedding of this dimension.
    #[serde(default)]
    pub hash_embedding: Option<usize>,
    #[serde(default)]
    pub delay_ms: u64,
}

fn ok() -> u16 {
    200
}

impl MockReply {
    fn empty(status: u16) -> Self {
        Self {
            status,
            content: None,
            json: None,
            raw: None,
            hash_embedding: None,
            delay_ms: 0,
        }
    }

    pub fn content(text: impl Into<String>) -> Self {
        Self {
            content: Some(text.into()),
            ..Self::empty(200)
        }
    }

    pub fn json(value: Value) -> Self {
        Self {
            json: Some(value),
            ..Self::empty(200)
        }
    }

    pub fn status(code: u16) -> Self {
        Self {
            json: Some(json!({ "error": { "message": format!("mock status {code}") } })),
            ..Self::empty(code)
        }
    }

    pub fn hash_embedding(dim: usize) -> Self {
        Self {
            hash_embedding: Some(dim),
            ..Self::empty(200)
        }
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    fn body(&self, request: &str) -> String {
        if let Some(text) = &self.content {
            return json!({
                "id": "mock",
                "object": "chat.completion",
                "choices": [{ "index": 0, "message": { "role": "assistant", "content": text }, "finish_reason": "stop" }],
            })
            .to_string();
        }
        if let Some(v) = &self.json {
            return v.to_string();
        }
        if let Some(dim) = self.hash_embedding {
            let input = serde_json::from_str::<Value>(request)
                .ok()
                .and_then(|v| v["input"].as_str().map(str::to_owned))
                .unwrap_or_default();
            let embedding = HashingEmbedder { dim, seed: 0 }
                .embed(&input)
                .unwrap_or_else(|_| vec![0.0; dim]);
            return json!({ "object": "list", "data": [{ "index": 0, "embedding": embedding }] }).to_string();
        }
        self.raw.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRoute {
    /// Matches when the request path ends with this.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub body_contains: Option<String>,
    pub replies: Vec<MockReply>,
}

impl MockRoute {
    pub fn new(path: Option<&str>, body_contains: Option<&str>, replies: Vec<MockReply>) -> Self {
        Self {
            path: path.map(str::to_owned),
            body_contains: body_contains.map(str::to_owned),
            replies,
        }
    }

    fn matches(&self, path: &str, body: &str) -> bool {
        self.path.as_deref().is_none_or(|p| path.ends_with(p))
            && self.body_contains.as_deref().is_none_or(|s| body.contains(s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    pub routes: Vec<MockRoute>,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn route(mut self, route: MockRoute) -> Self {
        self.routes.push(route);
        self
    }

    /// Canned answers for the five bundled templates plus `/embeddings`,
    /// keyed on each template's first line.
    pub fn standard() -> Self {
        let all_twos = |metrics: [&str; 5]| {
            Value::Object(metrics.iter().map(|m| (m.to_string(), json!(2))).collect()).to_string()
        };
        let summary = json!({ "Operation": DOUBAO_OPERATION, "Intent": DOUBAO_INTENT }).to_string();
        Self::default()
            .route(MockRoute::new(
                Some("embeddings"),
                None,
                vec![MockReply::hash_embedding(256)],
            ))
            .route(MockRoute::new(
                None,
                Some("Task: trajectory intent summarization."),
                vec![MockReply::content(summary)],
            ))
            .route(MockRoute::new(
                None,
                Some("Task: operation suggestion."),
                vec![MockReply::content(
                    json!({ "Suggestions": ["Select the Hangzhou show date and seat area", "Add a ticket holder and pay"] })
                        .to_string(),
                )],
            ))
            .route(MockRoute::new(
                None,
                Some("Task: search suggestion."),
                vec![MockReply::content(
                    json!({ "Suggestions": ["Leon Tour Hangzhou seat map", "Hangzhou Olympic Sports Center transport"] })
                        .to_string(),
                )],
            ))
            .route(MockRoute::new(
                None,
                Some("Task: summary evaluation."),
                vec![MockReply::content(all_twos(SUMMARY_METRICS))],
            ))
            .route(MockRoute::new(
                None,
                Some("Task: suggestion evaluation."),
                vec![MockReply::content(all_twos(SUGGESTION_METRICS))],
            ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRequest {
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

struct State {
    routes: Vec<(MockRoute, AtomicUsize)>,
    log: Mutex<Vec<LoggedRequest>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl State {
    fn reply_for(&self, path: &str, body: &str) -> Option<MockReply> {
        let (route, cursor) = self.routes.iter().find(|(r, _)| r.matches(path, body))?;
        let i = cursor.fetch_add(1, Ordering::SeqCst);
        route.replies.get(i.min(route.replies.len().checked_sub(1)?)).cloned()
    }

    fn handle(&self, mut req: tiny_http::Request) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let mut body = String::new();
        let _ = req.as_reader().read_to_string(&mut body);
        let path = req.url().split('?').next().unwrap_or("").to_owned();
        let authorization = req
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_owned());
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(LoggedRequest {
            path: path.clone(),
            body: body.clone(),
            authorization,
        });
        let reply = self.reply_for(&path, &body).unwrap_or_else(|| MockReply {
            json: Some(json!({ "error": { "message": format!("no mock route for {path}") } })),
            ..MockReply::empty(404)
        });
        if reply.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(reply.delay_ms));
        }
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = tiny_http::Response::from_string(reply.body(&body))
            .with_status_code(reply.status)
            .with_header(header);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let _ = req.respond(response);
    }
}

/// A running mock endpoint; shuts down on drop.
pub struct MockServer {
    base_url: String,
    server: Arc<tiny_http::Server>,
    state: Arc<State>,
    acceptor: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral port on localhost.
    pub fn start(fixture: MockFixture) -> Result<Self> {
        Self::bind("127.0.0.1:0", fixture)
    }

    pub fn bind(addr: &str, fixture: MockFixture) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Endpoint(format!("mock bind {addr}: {e}")))?;
        let port = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Endpoint("mock server has no IP address".into()))?
            .port();
        let server = Arc::new(server);
        let state = Arc::new(State {
            routes: fixture.routes.into_iter().map(|r| (r, AtomicUsize::new(0))).collect(),
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let acceptor = {
            let (server, state) = (Arc::clone(&server), Arc::clone(&state));
            std::thread::spawn(move || {
                // `recv` fails once `unblock` is called from drop.
                while let Ok(req) = server.recv() {
                    let state = Arc::clone(&state);
                    std::thread::spawn(move || state.handle(req));
                }
            })
        };
        Ok(Self {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            server,
            state,
            acceptor: Some(acceptor),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Highest number of requests being handled at once.
    pub fn peak_concurrency(&self) -> usize {
        self.state.peak.load(Ordering::SeqCst)
    }

    /// Blocks until the acceptor thread exits, which is never in normal use.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}
