use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use factgpt_core::finetune::validate_finetune_jsonl;
use factgpt_core::PromptMessages;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::AuditLog;
use crate::config::{GenerationConfig, ProviderProfile, ProviderSettings, RetryPolicy};
use crate::error::GatewayError;
use crate::limiter::{InFlightBudget, TokenBucket};
use crate::mock::MockProvider;
use crate::transport::{
    Body, HttpRequest, HttpTransport, MultipartForm, Transport, TransportError,
};

pub const API_KEY_ENV: &str = "FACTGPT_API_KEY";
pub const API_BASE_ENV: &str = "FACTGPT_API_BASE";
pub const DEFAULT_EPOCHS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobStatus::Succeeded | JobStatus::Failed | JobStatus::Cancelled
        )
    }

    fn from_provider(status: &str) -> Option<Self> {
        Some(match status {
            "validating_files" | "queued" | "pending" | "created" => JobStatus::Queued,
            "running" => JobStatus::Running,
            "succeeded" => JobStatus::Succeeded,
            "failed" => JobStatus::Failed,
            "cancelled" => JobStatus::Cancelled,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub job_id: String,
    pub base_model: String,
    pub status: JobStatus,
    pub epochs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_tuned_model_id: Option<String>,
}

impl FineTuneJob {
    fn from_provider(value: &Value, fallback_epochs: u32) -> Result<Self, GatewayError> {
        let malformed =
            |what: &str| GatewayError::MalformedResponse(format!("fine-tune job lacks {what}"));
        let job_id = value["id"]
            .as_str()
            .ok_or_else(|| malformed("id"))?
            .to_string();
        let raw_status = value["status"]
            .as_str()
            .ok_or_else(|| malformed("status"))?;
        let status = JobStatus::from_provider(raw_status).ok_or_else(|| {
            GatewayError::MalformedResponse(format!("unknown job status {raw_status:?}"))
        })?;
        let epochs = value["hyperparameters"]["n_epochs"]
            .as_u64()
            .map(|e| e as u32)
            .unwrap_or(fallback_epochs);
        let fine_tuned_model_id = match status {
            JobStatus::Succeeded => Some(
                value["fine_tuned_model"]
                    .as_str()
                    .ok_or_else(|| malformed("fine_tuned_model"))?
                    .to_string(),
            ),
            _ => None,
        };
        Ok(Self {
            job_id,
            base_model: value["model"].as_str().unwrap_or_default().to_string(),
            status,
            epochs,
            fine_tuned_model_id,
        })
    }
}

/// Shareable client for one provider. All calls go through the same rate
/// limiter and in-flight budget.
pub struct Gateway {
    profile: ProviderProfile,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    rate: Option<TokenBucket>,
    budget: InFlightBudget,
    audit: Option<AuditLog>,
    jobs: Mutex<HashMap<String, FineTuneJob>>,
}

impl Gateway {
    pub fn new(profile: ProviderProfile, transport: Arc<dyn Transport>) -> Self {
        Self {
            profile,
            transport,
            retry: RetryPolicy::default(),
            rate: None,
            budget: InFlightBudget::new(16),
            audit: None,
            jobs: Mutex::new(HashMap::new()),
        }
    }

    pub fn mock() -> Self {
        Self::new(ProviderProfile::mock(), Arc::new(MockProvider::new()))
    }

    /// Live client. The API key comes from `FACTGPT_API_KEY` when not given.
    pub fn live(profile: ProviderProfile, api_key: Option<String>, timeout: Duration) -> Self {
        let key = api_key.or_else(|| std::env::var(API_KEY_ENV).ok());
        let transport = HttpTransport::new(profile.base_url.clone(), key, timeout);
        Self::new(profile, Arc::new(transport))
    }

    /// Mock or live client as described by `settings`.
    pub fn from_settings(settings: &ProviderSettings) -> Result<Self, GatewayError> {
        let profile = settings.resolve_profile()?;
        if settings.is_mock() {
            return Ok(Self::new(profile, Arc::new(MockProvider::new())));
        }
        Ok(Self::live(
            profile,
            None,
            Duration::from_secs(settings.timeout_secs.max(1)),
        ))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.rate = Some(TokenBucket::per_minute(requests_per_minute));
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.budget = InFlightBudget::new(limit);
        self
    }

    pub fn with_audit_log(mut self, path: &Path) -> std::io::Result<Self> {
        self.audit = Some(AuditLog::open(path)?);
        Ok(self)
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    /// Sends with retries on 429, 5xx and timeouts. Returns the parsed JSON
    /// body of the first 2xx response.
    fn execute(&self, request: &HttpRequest, max_retries: u32) -> Result<Value, GatewayError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let result = {
                if let Some(rate) = &self.rate {
                    rate.acquire();
                }
                let _permit = self.budget.acquire();
                self.transport.send(request)
            };
            if let Some(audit) = &self.audit {
                audit.record(
                    request,
                    attempt,
                    result
                        .as_ref()
                        .map(|r| (r.status, r.body.as_str()))
                        .map_err(|e| e.to_string()),
                );
            }
            let retryable = match result {
                Ok(response) if (200..300).contains(&response.status) => {
                    return serde_json::from_str(&response.body)
                        .map_err(|e| GatewayError::MalformedResponse(e.to_string()));
                }
                Ok(response) => match response.status {
                    401 | 403 => return Err(GatewayError::Auth(response.body)),
                    429 => GatewayError::RateLimited { attempts: attempt },
                    s if s >= 500 => GatewayError::Provider {
                        status: s,
                        body: response.body,
                    },
                    s => {
                        return Err(GatewayError::Provider {
                            status: s,
                            body: response.body,
                        })
                    }
                },
                Err(TransportError::Timeout) => GatewayError::Timeout { attempts: attempt },
                Err(TransportError::Io(msg)) => return Err(GatewayError::Transport(msg)),
            };
            if attempt > max_retries {
                return Err(retryable);
            }
            log::debug!(
                "retrying {} after {retryable} (attempt {attempt})",
                request.path
            );
            std::thread::sleep(self.retry.delay(attempt));
        }
    }

    /// Content of the first choice's assistant message. Prompt text is sent
    /// unmodified; only the temperature is adjusted to the provider floor.
    pub fn chat_complete(
        &self,
        messages: &PromptMessages,
        config: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        config.validate()?;
        let mut body = json!({
            "model": config.model_id,
            "messages": [
                {"role": "system", "content": messages.system},
                {"role": "user", "content": messages.user},
            ],
            "temperature": self.profile.effective_temperature(config.temperature),
        });
        if let Some(max_tokens) = config.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        let mut request = HttpRequest::post_json("/chat/completions", body);
        request.timeout = Some(config.request_timeout);
        let response = self.execute(&request, config.max_retries)?;
        response["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::MalformedResponse("missing choices[0].message.content".into())
            })
    }

    pub fn embed_remote(
        &self,
        texts: &[&str],
        model_id: &str,
    ) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let request =
            HttpRequest::post_json("/embeddings", json!({"model": model_id, "input": texts}));
        let response = self.execute(&request, self.retry.max_retries)?;
        let data = response["data"]
            .as_array()
            .ok_or_else(|| GatewayError::MalformedResponse("missing data array".into()))?;
        let mut indexed = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::MalformedResponse("missing embedding".into()))?
                .iter()
                .map(|x| {
                    x.as_f64().ok_or_else(|| {
                        GatewayError::MalformedResponse("non-numeric embedding".into())
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            indexed.push((index, vector));
        }
        indexed.sort_by_key(|(i, _)| *i);
        if indexed.len() != texts.len() || indexed.iter().enumerate().any(|(i, (j, _))| i != *j) {
            return Err(GatewayError::MalformedResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                indexed.len()
            )));
        }
        Ok(indexed.into_iter().map(|(_, v)| v).collect())
    }

    /// Validates the training file locally, uploads it and creates a job.
    /// Nothing is sent when validation fails.
    pub fn submit_finetune(
        &self,
        training_jsonl: &str,
        base_model: &str,
        epochs: Option<u32>,
    ) -> Result<FineTuneJob, GatewayError> {
        validate_finetune_jsonl(training_jsonl)?;
        let epochs = epochs.unwrap_or(DEFAULT_EPOCHS);
        if epochs == 0 {
            return Err(GatewayError::InvalidConfig(
                "epochs must be positive".into(),
            ));
        }
        let upload = HttpRequest {
            body: Body::Multipart(MultipartForm {
                fields: vec![("purpose".into(), "fine-tune".into())],
                file_field: "file".into(),
                file_name: "training.jsonl".into(),
                file_content: training_jsonl.to_string(),
            }),
            ..HttpRequest::post_json("/files", Value::Null)
        };
        let file = self.execute(&upload, self.retry.max_retries)?;
        let file_id = file["id"]
            .as_str()
            .ok_or_else(|| GatewayError::MalformedResponse("upload response lacks id".into()))?;
        let create = HttpRequest::post_json(
            "/fine_tuning/jobs",
            json!({"model": base_model, "training_file": file_id, "hyperparameters": {"n_epochs": epochs}}),
        );
        let mut job =
            FineTuneJob::from_provider(&self.execute(&create, self.retry.max_retries)?, epochs)?;
        if job.base_model.is_empty() {
            job.base_model = base_model.to_string();
        }
        Ok(job)
    }

    /// Current job state. Terminal states are cached and returned unchanged.
    pub fn poll_finetune(&self, job_id: &str) -> Result<FineTuneJob, GatewayError> {
        if let Some(job) = self.jobs.lock().expect("job cache").get(job_id) {
            return Ok(job.clone());
        }
        let request = HttpRequest::get(format!("/fine_tuning/jobs/{job_id}"));
        let job = match self.execute(&request, self.retry.max_retries) {
            Err(GatewayError::Provider { status: 404, .. }) => {
                return Err(GatewayError::UnknownJob(job_id.to_string()))
            }
            other => FineTuneJob::from_provider(&other?, DEFAULT_EPOCHS)?,
        };
        if job.status.is_terminal() {
            self.jobs
                .lock()
                .expect("job cache")
                .insert(job_id.to_string(), job.clone());
        }
        Ok(job)
    }

    /// Polls until the job reaches a terminal state or `max_polls` is spent.
    pub fn wait_for_finetune(
        &self,
        job_id: &str,
        interval: Duration,
        max_polls: u32,
    ) -> Result<FineTuneJob, GatewayError> {
        let mut job = self.poll_finetune(job_id)?;
        let mut polls = 1;
        while !job.status.is_terminal() && polls < max_polls {
            std::thread::sleep(interval);
            job = self.poll_finetune(job_id)?;
            polls += 1;
        }
        Ok(job)
    }
}
