//! The HTTP boundary. Everything above this trait speaks the provider wire
//! protocol in JSON; implementations decide where the bytes go.

use std::io::Read;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipartForm {
    pub fields: Vec<(String, String)>,
    pub file_field: String,
    pub file_name: String,
    pub file_content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Empty,
    Json(Value),
    Multipart(MultipartForm),
}

/// A request relative to the provider base URL, e.g. `/chat/completions`.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: Method,
    pub path: String,
    pub body: Body,
    pub timeout: Option<Duration>,
}

impl HttpRequest {
    pub fn post_json(path: impl Into<String>, body: Value) -> Self {
        Self {
            method: Method::Post,
            path: path.into(),
            body: Body::Json(body),
            timeout: None,
        }
    }

    pub fn get(path: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            path: path.into(),
            body: Body::Empty,
            timeout: None,
        }
    }

    pub fn json(&self) -> Option<&Value> {
        match &self.body {
            Body::Json(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn json(status: u16, body: &Value) -> Self {
        Self {
            status,
            body: body.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

const BOUNDARY: &str = "factgpt-form-boundary-7d1c9a";

pub fn encode_multipart(form: &MultipartForm) -> Vec<u8> {
    let mut out = String::new();
    for (name, value) in &form.fields {
        out.push_str(&format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n"
        ));
    }
    out.push_str(&format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{}\"; filename=\"{}\"\r\nContent-Type: application/jsonl\r\n\r\n",
        form.file_field, form.file_name
    ));
    out.push_str(&form.file_content);
    out.push_str(&format!("\r\n--{BOUNDARY}--\r\n"));
    out.into_bytes()
}

/// Live transport over HTTP(S) with bearer-token authentication.
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        default_timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(default_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }
}

fn map_ureq(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        other => TransportError::Io(other.to_string()),
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let url = self.url(&request.path);
        let auth = self.api_key.as_ref().map(|k| format!("Bearer {k}"));
        let response = match (&request.method, &request.body) {
            (Method::Get, _) => {
                let mut builder = self.agent.get(&url);
                if let Some(auth) = &auth {
                    builder = builder.header("Authorization", auth);
                }
                if let Some(t) = request.timeout {
                    builder = builder.config().timeout_global(Some(t)).build();
                }
                builder.call()
            }
            (Method::Post, body) => {
                let mut builder = self.agent.post(&url);
                if let Some(auth) = &auth {
                    builder = builder.header("Authorization", auth);
                }
                if let Some(t) = request.timeout {
                    builder = builder.config().timeout_global(Some(t)).build();
                }
                match body {
                    Body::Empty => builder.send_empty(),
                    Body::Json(value) => builder
                        .header("Content-Type", "application/json")
                        .send(value.to_string().as_bytes()),
                    Body::Multipart(form) => builder
                        .header(
                            "Content-Type",
                            &format!("multipart/form-data; boundary={BOUNDARY}"),
                        )
                        .send(&encode_multipart(form)[..]),
                }
            }
        }
        .map_err(map_ureq)?;
        let status = response.status().as_u16();
        let mut body = String::new();
        response
            .into_body()
            .into_reader()
            .read_to_string(&mut body)
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}
