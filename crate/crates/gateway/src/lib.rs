//! Provider client for chat completions, embeddings and hosted fine-tuning
//! over the chat-completions JSON wire protocol, plus a deterministic mock
//! provider used for offline runs and tests.

pub mod audit;
pub mod client;
pub mod config;
pub mod error;
pub mod limiter;
pub mod mock;
pub mod scripted;
pub mod transport;

use std::sync::Arc;

use factgpt_core::matcher::{Embedder, MatchError};

pub use client::{FineTuneJob, Gateway, JobStatus, API_BASE_ENV, API_KEY_ENV, DEFAULT_EPOCHS};
pub use config::{GenerationConfig, ProviderProfile, ProviderSettings, RetryPolicy};
pub use error::GatewayError;

pub const REMOTE_EMBEDDER_ID: &str = "remote";

/// Matcher embedder backed by the provider embeddings endpoint.
pub struct RemoteEmbedder {
    gateway: Arc<Gateway>,
    model_id: String,
}

impl RemoteEmbedder {
    pub fn new(gateway: Arc<Gateway>, model_id: impl Into<String>) -> Self {
        Self {
            gateway,
            model_id: model_id.into(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        REMOTE_EMBEDDER_ID
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, MatchError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.gateway
            .embed_remote(texts, &self.model_id)
            .map_err(|e| MatchError::Provider(e.to_string()))
    }
}
