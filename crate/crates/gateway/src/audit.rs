//! Append-only JSON-lines log of every request/response exchange.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde_json::{json, Map, Value};

use crate::transport::{Body, HttpRequest, Method};

const SECRET_KEYS: &[&str] = &[
    "api_key",
    "apikey",
    "authorization",
    "token",
    "password",
    "secret",
];

/// Replaces the value of any credential-looking key with "[REDACTED]".
pub fn redact(value: &Value) -> Value {
    match value {
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| {
                    if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                        (k.clone(), Value::String("[REDACTED]".into()))
                    } else {
                        (k.clone(), redact(v))
                    }
                })
                .collect::<Map<_, _>>(),
        ),
        Value::Array(items) => Value::Array(items.iter().map(redact).collect()),
        other => other.clone(),
    }
}

pub struct AuditLog {
    writer: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(
        &self,
        request: &HttpRequest,
        attempt: u32,
        outcome: Result<(u16, &str), String>,
    ) {
        let request_body = match &request.body {
            Body::Empty => Value::Null,
            Body::Json(v) => redact(v),
            Body::Multipart(form) => json!({
                "fields": form.fields,
                "file_name": form.file_name,
                "file_bytes": form.file_content.len(),
            }),
        };
        let (status, response) = match outcome {
            Ok((status, body)) => (
                Value::from(status),
                serde_json::from_str::<Value>(body)
                    .map(|v| redact(&v))
                    .unwrap_or_else(|_| Value::String(body.to_string())),
            ),
            Err(err) => (Value::Null, json!({"transport_error": err})),
        };
        let line = json!({
            "method": match request.method { Method::Get => "GET", Method::Post => "POST" },
            "path": request.path,
            "attempt": attempt,
            "request": request_body,
            "status": status,
            "response": response,
        });
        let mut writer = self.writer.lock().expect("audit writer");
        if writeln!(writer, "{line}")
            .and_then(|_| writer.flush())
            .is_err()
        {
            log::warn!("failed to append to audit log");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_secrets_are_redacted() {
        let v =
            json!({"model": "m", "auth": {"api_key": "sk-123"}, "list": [{"Authorization": "x"}]});
        let r = redact(&v);
        assert_eq!(r["auth"]["api_key"], "[REDACTED]");
        assert_eq!(r["list"][0]["Authorization"], "[REDACTED]");
        assert_eq!(r["model"], "m");
    }
}
