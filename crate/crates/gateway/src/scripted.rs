//! Recording test double: replays scripted replies, then delegates to an
//! inner transport. Every request is recorded.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::json;

use crate::transport::{HttpRequest, HttpResponse, Transport, TransportError};

#[derive(Debug, Clone)]
pub enum ScriptedReply {
    Status(u16, String),
    Timeout,
}

impl ScriptedReply {
    pub fn status(code: u16) -> Self {
        ScriptedReply::Status(
            code,
            json!({"error": {"message": format!("scripted {code}")}}).to_string(),
        )
    }
}

pub struct ScriptedTransport {
    script: Mutex<VecDeque<ScriptedReply>>,
    inner: Option<Arc<dyn Transport>>,
    requests: Mutex<Vec<HttpRequest>>,
    /// After this many delegated requests, every further request gets a 401.
    fail_after: Option<usize>,
    delegated: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(script: impl IntoIterator<Item = ScriptedReply>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            inner: None,
            requests: Mutex::new(Vec::new()),
            fail_after: None,
            delegated: AtomicUsize::new(0),
        }
    }

    pub fn wrapping(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner: Some(inner),
            ..Self::new([])
        }
    }

    pub fn with_script(self, script: impl IntoIterator<Item = ScriptedReply>) -> Self {
        *self.script.lock().expect("script") = script.into_iter().collect();
        self
    }

    pub fn fail_after(mut self, successes: usize) -> Self {
        self.fail_after = Some(successes);
        self
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.lock().expect("requests").clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().expect("requests").len()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.requests
            .lock()
            .expect("requests")
            .push(request.clone());
        if let Some(reply) = self.script.lock().expect("script").pop_front() {
            return match reply {
                ScriptedReply::Status(status, body) => Ok(HttpResponse { status, body }),
                ScriptedReply::Timeout => Err(TransportError::Timeout),
            };
        }
        if let Some(limit) = self.fail_after {
            if self.delegated.fetch_add(1, Ordering::SeqCst) >= limit {
                return Ok(HttpResponse {
                    status: 401,
                    body: json!({"error": {"message": "scripted interruption"}}).to_string(),
                });
            }
        }
        match &self.inner {
            Some(inner) => inner.send(request),
            None => Ok(HttpResponse {
                status: 500,
                body: json!({"error": {"message": "script exhausted"}}).to_string(),
            }),
        }
    }
}
