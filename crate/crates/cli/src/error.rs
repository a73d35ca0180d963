use std::path::Path;

use factgpt_core::annotate::AggregateError;
use factgpt_core::domain::DecodeError;
use factgpt_core::evalkit::EvalError;
use factgpt_core::matcher::MatchError;
use factgpt_gateway::GatewayError;
use factgpt_pipeline::{ClassifyError, SynthError};
use factgpt_service::{ServiceError, StoreError};
use serde_json::{json, Value};
use thiserror::Error;

/// Exit code 1 for bad input or configuration, 2 for provider failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Provider(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Provider(_) => "provider",
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code()}})
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {err}", path.display()))
    }

    pub fn decode(path: &Path, err: DecodeError) -> Self {
        CliError::Validation(format!("{}: {err}", path.display()))
    }
}

impl From<GatewayError> for CliError {
    fn from(err: GatewayError) -> Self {
        match err {
            GatewayError::InvalidConfig(_)
            | GatewayError::Validation(_)
            | GatewayError::EmptyBatch => CliError::Validation(err.to_string()),
            _ => CliError::Provider(err.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        match err {
            SynthError::Gateway(e) => e.into(),
            SynthError::AllCellsFailed(_) => CliError::Provider(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(err: ClassifyError) -> Self {
        match err {
            ClassifyError::Gateway(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(err: MatchError) -> Self {
        match err {
            MatchError::Provider(_) => CliError::Provider(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<AggregateError> for CliError {
    fn from(err: AggregateError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(err: ServiceError) -> Self {
        match err {
            ServiceError::Gateway(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}
