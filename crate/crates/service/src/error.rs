use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use crate::store::StoreError;

/// Error body shared by every endpoint: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn body(&self) -> Value {
        json!({"code": self.code, "message": self.message, "detail": self.detail})
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let message = err.to_string();
        match err {
            StoreError::UnknownPair(pair_id) => {
                ApiError::not_found(message).with_detail(json!({"pair_id": pair_id}))
            }
            StoreError::AlreadyAdjudicated { pair_id, status } => {
                ApiError::new(StatusCode::CONFLICT, "already_adjudicated", message)
                    .with_detail(json!({"pair_id": pair_id, "status": status}))
            }
            StoreError::MissingLabel
            | StoreError::NothingToConfirm(_)
            | StoreError::MissingReviewer => ApiError::bad_request(message),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                log::error!("store failure: {message}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", message)
            }
        }
    }
}

/// Parses a request body, reporting serde's position on failure.
pub fn parse_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string())
            .with_detail(json!({"line": e.line(), "column": e.column()}))
    })
}
