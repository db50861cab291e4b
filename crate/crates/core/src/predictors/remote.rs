//! Chat-completion HTTP backend.
//!
//! Request: `POST <endpoint>` with
//! `{"model": ..., "messages": [{"role": "user", "content": <prompt>}], "temperature": ...}`
//! and `Authorization: Bearer $<auth_env>` when an auth variable is set.
//! The answer text is read from `choices[0].message.content`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PredictError, PredictionMeta, PredictionOutput, PredictionRequest, Predictor};
use crate::outparse::{parse_lenient, parse_strict};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Name used in reports; defaults to the model name.
    pub name: Option<String>,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub concurrency_cap: usize,
    /// Environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub backoff_base_s: f64,
    pub backoff_cap_s: f64,
    pub lenient: bool,
    /// Seeds the backoff jitter.
    pub seed: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            name: None,
            endpoint: String::new(),
            model_name: String::new(),
            temperature: 0.0,
            timeout_s: 60.0,
            max_retries: 3,
            concurrency_cap: 4,
            auth_env: None,
            backoff_base_s: 0.5,
            backoff_cap_s: 30.0,
            lenient: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemoteError {
    #[error("invalid remote config: {0}")]
    Config(String),
    #[error("auth variable {0} is not set")]
    MissingAuth(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("response has no choices[0].message.content: {0}")]
    BadResponse(String),
}

impl RemoteError {
    /// Stable code for prediction files.
    pub fn code(&self) -> &'static str {
        match self {
            RemoteError::Config(_) => "config",
            RemoteError::MissingAuth(_) => "missing_auth",
            RemoteError::Timeout { .. } => "timeout",
            RemoteError::Status { .. } => "http_status",
            RemoteError::Transport { .. } => "transport",
            RemoteError::BadResponse(_) => "bad_response",
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), RemoteError> {
        if self.concurrency_cap < 1 {
            return Err(RemoteError::Config("concurrency_cap must be >= 1".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(RemoteError::Config("timeout_s must be > 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(RemoteError::Config("temperature must be >= 0".into()));
        }
        if self.endpoint.is_empty() {
            return Err(RemoteError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Full-jitter delay before retry number `retry` (1-based): uniform in
/// `[0, min(cap, base * 2^(retry - 1))]`.
pub fn backoff_delay(base_s: f64, cap_s: f64, retry: u32, u: f64) -> Duration {
    let ceiling = (base_s * 2f64.powi(retry.saturating_sub(1).min(60) as i32)).min(cap_s);
    Duration::from_secs_f64(ceiling * u)
}

enum Attempt {
    Done(String),
    Retry(RemoteError),
    Fatal(RemoteError),
}

pub struct RemoteChat {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

impl RemoteChat {
    pub fn new(cfg: RemoteConfig) -> Result<Self, RemoteError> {
        cfg.validate()?;
        let token = match &cfg.auth_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| RemoteError::MissingAuth(var.clone()))?)
            }
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build();
        Ok(Self { cfg, agent, token })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn attempt(&self, prompt: &str, attempts: u32) -> Attempt {
        let body = serde_json::json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        });
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let value: serde_json::Value = match resp.into_json() {
                    Ok(v) => v,
                    Err(e) => return Attempt::Fatal(RemoteError::BadResponse(e.to_string())),
                };
                match value
                    .pointer("/choices/0/message/content")
                    .and_then(|c| c.as_str())
                {
                    Some(text) => Attempt::Done(text.to_string()),
                    None => Attempt::Fatal(RemoteError::BadResponse(value.to_string())),
                }
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                let err = RemoteError::Status {
                    status,
                    body,
                    attempts,
                };
                if status == 429 || (500..600).contains(&status) {
                    Attempt::Retry(err)
                } else {
                    Attempt::Fatal(err)
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if is_timeout(&t) {
                    Attempt::Retry(RemoteError::Timeout { attempts })
                } else {
                    Attempt::Retry(RemoteError::Transport { message, attempts })
                }
            }
        }
    }

    /// Send one prompt with retries. Returns the answer text and attempts.
    pub fn complete(&self, prompt: &str, key: &str) -> Result<(String, u32), RemoteError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(prompt, attempts) {
                Attempt::Done(text) => return Ok((text, attempts)),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempts > self.cfg.max_retries {
                        return Err(e);
                    }
                    let mut rng = seeding::rng_for(
                        self.cfg.seed,
                        &[b"backoff", key.as_bytes(), &attempts.to_le_bytes()],
                    );
                    let delay = backoff_delay(
                        self.cfg.backoff_base_s,
                        self.cfg.backoff_cap_s,
                        attempts,
                        rng.gen(),
                    );
                    log::debug!("retry {attempts} for {key} in {delay:?}: {e}");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut src: Option<&(dyn Error + 'static)> = t.source();
    while let Some(e) = src {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        src = e.source();
    }
    t.to_string().contains("timed out")
}

impl Predictor for RemoteChat {
    fn name(&self) -> &str {
        self.cfg.name.as_deref().unwrap_or(&self.cfg.model_name)
    }

    fn uses_network(&self) -> bool {
        true
    }

    fn predict(&self, req: &PredictionRequest) -> Result<PredictionOutput, PredictError> {
        let ex = req.example;
        let key = format!("{}/{}", ex.participant_id, ex.scenario_id);
        let start = Instant::now();
        let (text, attempts) = self.complete(&ex.text, &key)?;
        let meta = PredictionMeta {
            backend: self.name().to_string(),
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
            attempts,
            flags: vec![],
        };
        let expected = ex.expected();
        let parsed = if self.cfg.lenient {
            parse_lenient(&text, &expected)
        } else {
            parse_strict(&text, &expected)
        };
        match parsed {
            Ok(set) => Ok(PredictionOutput { set, meta }),
            Err(error) => Err(PredictError::Parse { error, meta }),
        }
    }

    /// At most `concurrency_cap` requests in flight; results keep input order.
    fn predict_batch(
        &self,
        reqs: &[PredictionRequest],
    ) -> Vec<Result<PredictionOutput, PredictError>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<PredictionOutput, PredictError>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.cfg.concurrency_cap.min(reqs.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.predict(&reqs[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .expect("slot lock")
                    .expect("every slot filled")
            })
            .collect()
    }
}
