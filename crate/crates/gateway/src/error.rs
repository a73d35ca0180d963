use factgpt_core::finetune::FineTuneValidationError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Validation(#[from] FineTuneValidationError),
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("unknown fine-tuning job {0:?}")]
    UnknownJob(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
