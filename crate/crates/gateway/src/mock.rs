//! Deterministic offline provider speaking the same wire protocol as the
//! hosted APIs.
//!
//! Chat contract:
//! - a user message containing `[[ENTAILMENT]]`, `[[NEUTRAL]]` or
//!   `[[CONTRADICTION]]` is answered with that bare label;
//! - otherwise an entailment prompt is answered with the label at index
//!   `stable_hash(user) % 3`;
//! - a generation prompt is answered with
//!   `MOCK TWEET <hash> <consequence clause of the requested label>`.
//!
//! Embeddings delegate to the offline hashed n-gram embedder. Fine-tune jobs
//! are minted as `mock-ft-<file hash>` and advance one state per poll:
//! queued, running, then succeeded.

use std::collections::HashMap;
use std::sync::Mutex;

use factgpt_core::domain::sha256_hex;
use factgpt_core::matcher::HashedNgramEmbedder;
use factgpt_core::promptkit::{generation_target, label_consequence, ENTAILMENT_SYSTEM};
use factgpt_core::EntailmentLabel;
use serde_json::{json, Value};

use crate::transport::{Body, HttpRequest, HttpResponse, Method, Transport, TransportError};

pub const MOCK_PROVIDER_ID: &str = "mock";

/// First 8 bytes of SHA-256, big-endian.
pub fn stable_hash(text: &str) -> u64 {
    let hex = sha256_hex(text.as_bytes());
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

fn short_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())[..12].to_string()
}

/// The reply the mock gives to a (system, user) chat exchange.
pub fn mock_reply(system: &str, user: &str) -> String {
    for label in EntailmentLabel::ALL {
        if user.contains(&format!("[[{}]]", label.as_str())) {
            return label.as_str().to_string();
        }
    }
    if system == ENTAILMENT_SYSTEM {
        let index = (stable_hash(user) % 3) as usize;
        return EntailmentLabel::ALL[index].as_str().to_string();
    }
    if let Some(label) = generation_target(system) {
        let hash = &sha256_hex(format!("{system}\n{user}").as_bytes())[..8];
        return format!("MOCK TWEET {hash} {}", label_consequence(label));
    }
    format!("MOCK RESPONSE {}", &sha256_hex(user.as_bytes())[..8])
}

#[derive(Debug, Clone)]
struct MockJob {
    model: String,
    file_hash: String,
    epochs: u64,
    polls: u32,
}

#[derive(Default)]
struct MockState {
    files: HashMap<String, String>,
    jobs: HashMap<String, MockJob>,
}

#[derive(Default)]
pub struct MockProvider {
    embedder: HashedNgramEmbedder,
    state: Mutex<MockState>,
}

fn error(status: u16, message: &str) -> HttpResponse {
    HttpResponse::json(status, &json!({"error": {"message": message}}))
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    fn chat(&self, body: &Value) -> HttpResponse {
        let Some(messages) = body["messages"].as_array() else {
            return error(400, "messages must be an array");
        };
        let content_of = |role: &str| {
            messages
                .iter()
                .rev()
                .find(|m| m["role"] == role)
                .and_then(|m| m["content"].as_str())
                .unwrap_or("")
        };
        let reply = mock_reply(content_of("system"), content_of("user"));
        HttpResponse::json(
            200,
            &json!({
                "id": format!("mock-chat-{}", short_hash(&reply)),
                "object": "chat.completion",
                "model": body["model"],
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": reply},
                    "finish_reason": "stop"
                }]
            }),
        )
    }

    fn embeddings(&self, body: &Value) -> HttpResponse {
        let inputs: Vec<&str> = match &body["input"] {
            Value::String(s) => vec![s.as_str()],
            Value::Array(items) => items.iter().filter_map(Value::as_str).collect(),
            _ => return error(400, "input must be a string or array of strings"),
        };
        let data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .map(|(i, text)| json!({"index": i, "object": "embedding", "embedding": self.embedder.embed_text(text)}))
            .collect();
        HttpResponse::json(
            200,
            &json!({"object": "list", "model": body["model"], "data": data}),
        )
    }

    fn upload(&self, request: &HttpRequest) -> HttpResponse {
        let Body::Multipart(form) = &request.body else {
            return error(400, "file upload must be multipart");
        };
        let file_hash = short_hash(&form.file_content);
        let file_id = format!("file-{file_hash}");
        self.state
            .lock()
            .expect("mock state")
            .files
            .insert(file_id.clone(), file_hash);
        HttpResponse::json(
            200,
            &json!({"id": file_id, "object": "file", "purpose": "fine-tune", "bytes": form.file_content.len()}),
        )
    }

    fn job_json(id: &str, job: &MockJob) -> Value {
        let status = match job.polls {
            0 | 1 => "queued",
            2 => "running",
            _ => "succeeded",
        };
        let model = (status == "succeeded").then(|| format!("mock-ft-model-{}", job.file_hash));
        json!({
            "id": id,
            "object": "fine_tuning.job",
            "model": job.model,
            "status": status,
            "fine_tuned_model": model,
            "hyperparameters": {"n_epochs": job.epochs}
        })
    }

    fn create_job(&self, body: &Value) -> HttpResponse {
        let mut state = self.state.lock().expect("mock state");
        let Some(file_hash) = body["training_file"]
            .as_str()
            .and_then(|id| state.files.get(id))
            .cloned()
        else {
            return error(400, "unknown training_file");
        };
        let job_id = format!("mock-ft-{file_hash}");
        let job = state.jobs.entry(job_id.clone()).or_insert_with(|| MockJob {
            model: body["model"].as_str().unwrap_or("").to_string(),
            file_hash,
            epochs: body["hyperparameters"]["n_epochs"].as_u64().unwrap_or(3),
            polls: 0,
        });
        HttpResponse::json(200, &Self::job_json(&job_id, job))
    }

    fn poll_job(&self, job_id: &str) -> HttpResponse {
        let mut state = self.state.lock().expect("mock state");
        match state.jobs.get_mut(job_id) {
            Some(job) => {
                job.polls = job.polls.saturating_add(1);
                HttpResponse::json(200, &Self::job_json(job_id, job))
            }
            None => error(404, &format!("no fine-tuning job {job_id}")),
        }
    }
}

impl Transport for MockProvider {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let empty = Value::Null;
        let body = request.json().unwrap_or(&empty);
        let response = match (request.method, request.path.as_str()) {
            (Method::Post, "/chat/completions") => self.chat(body),
            (Method::Post, "/embeddings") => self.embeddings(body),
            (Method::Post, "/files") => self.upload(request),
            (Method::Post, "/fine_tuning/jobs") => self.create_job(body),
            (Method::Get, path) if path.starts_with("/fine_tuning/jobs/") => {
                self.poll_job(&path["/fine_tuning/jobs/".len()..])
            }
            _ => error(404, "unknown endpoint"),
        };
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use factgpt_core::promptkit::{build_entailment_prompt, build_generation_prompt};

    #[test]
    fn sentinel_wins() {
        let p = build_entailment_prompt("tweet [[NEUTRAL]]", "claim").unwrap();
        assert_eq!(mock_reply(&p.system, &p.user), "NEUTRAL");
    }

    #[test]
    fn entailment_reply_is_a_label() {
        let p = build_entailment_prompt("some tweet", "some claim").unwrap();
        let reply = mock_reply(&p.system, &p.user);
        assert!(reply.parse::<EntailmentLabel>().is_ok());
        assert_eq!(reply, mock_reply(&p.system, &p.user));
    }

    #[test]
    fn generation_reply_echoes_frame() {
        let p = build_generation_prompt("claim text", EntailmentLabel::Contradiction).unwrap();
        let reply = mock_reply(&p.system, &p.user);
        assert!(reply.starts_with("MOCK TWEET "));
        assert!(reply.ends_with("then CLAIM is false."));
    }
}
