//! Local chat-completion server for tests and offline runs.
//!
//! Replies come from a handler closure; the server counts requests and
//! records the highest number of requests it had in flight at once.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    /// Zero-based arrival index.
    pub index: usize,
    pub body: serde_json::Value,
    pub authorization: Option<String>,
}

impl MockRequest {
    /// The prompt sent as the single user message.
    pub fn prompt(&self) -> &str {
        self.body
            .pointer("/messages/0/content")
            .and_then(|v| v.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockReply {
    /// A 200 response whose `choices[0].message.content` is `content`.
    pub fn completion(content: &str) -> Self {
        let body = serde_json::json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
        });
        Self {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: format!("{{\"error\": \"status {status}\"}}"),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

type Handler = dyn Fn(&MockRequest) -> MockReply + Send + Sync;

struct Shared {
    handler: Box<Handler>,
    arrivals: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<MockRequest>>,
}

pub struct MockServer {
    server: Arc<tiny_http::Server>,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    url: String,
}

impl MockServer {
    /// Bind to an ephemeral localhost port with `threads` handler threads.
    pub fn start<F>(threads: usize, handler: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest) -> MockReply + Send + Sync + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("no ip address"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            handler: Box::new(handler),
            arrivals: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        });
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || {
                    while let Ok(mut req) = server.recv() {
                        let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        shared.max_in_flight.fetch_max(now, Ordering::SeqCst);
                        let mut text = String::new();
                        let _ = req.as_reader().read_to_string(&mut text);
                        let mreq = MockRequest {
                            index: shared.arrivals.fetch_add(1, Ordering::SeqCst),
                            body: serde_json::from_str(&text).unwrap_or(serde_json::Value::Null),
                            authorization: req
                                .headers()
                                .iter()
                                .find(|h| h.field.equiv("Authorization"))
                                .map(|h| h.value.to_string()),
                        };
                        let reply = (shared.handler)(&mreq);
                        shared.log.lock().expect("log lock").push(mreq);
                        if !reply.delay.is_zero() {
                            std::thread::sleep(reply.delay);
                        }
                        let header =
                            tiny_http::Header::from_bytes("Content-Type", "application/json")
                                .expect("static header");
                        let resp = tiny_http::Response::from_string(reply.body)
                            .with_status_code(reply.status)
                            .with_header(header);
                        shared.in_flight.fetch_sub(1, Ordering::SeqCst);
                        let _ = req.respond(resp);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            shared,
            workers,
            url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> usize {
        self.shared.arrivals.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.shared.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn log(&self) -> Vec<MockRequest> {
        self.shared.log.lock().expect("log lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
