//! Chat-format fine-tuning records: one system/user/assistant triple per line,
//! where the assistant turn is the bare label token.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::EntailmentLabel;
use crate::promptkit::{PromptMessages, ENTAILMENT_SYSTEM};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FineTuneRecord {
    pub system: String,
    pub user: String,
    pub assistant: EntailmentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct WireRecord {
    messages: Vec<ChatMessage>,
}

impl FineTuneRecord {
    pub fn new(prompt: PromptMessages, label: EntailmentLabel) -> Self {
        Self {
            system: prompt.system,
            user: prompt.user,
            assistant: label,
        }
    }

    pub fn to_line(&self) -> String {
        let wire = WireRecord {
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: self.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: self.user.clone(),
                },
                ChatMessage {
                    role: "assistant".into(),
                    content: self.assistant.as_str().into(),
                },
            ],
        };
        serde_json::to_string(&wire).expect("fine-tune records always serialize")
    }

    /// Parses and checks one line against the record schema.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let wire: WireRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let [system, user, assistant] = wire.messages.as_slice() else {
            return Err(format!(
                "expected 3 messages, found {}",
                wire.messages.len()
            ));
        };
        for (message, role) in [(system, "system"), (user, "user"), (assistant, "assistant")] {
            if message.role != role {
                return Err(format!("expected role {role:?}, found {:?}", message.role));
            }
        }
        if system.content != ENTAILMENT_SYSTEM {
            return Err("system message is not the entailment prompt".into());
        }
        let body = user
            .content
            .strip_prefix("TWEET: ")
            .ok_or("user message must start with \"TWEET: \"")?;
        if !body.contains("\nCLAIM: ") {
            return Err("user message lacks a CLAIM line".into());
        }
        let label = assistant
            .content
            .parse::<EntailmentLabel>()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            system: system.content.clone(),
            user: user.content.clone(),
            assistant: label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fine-tune file line {line}: {message}")]
pub struct FineTuneValidationError {
    pub line: usize,
    pub message: String,
}

pub fn encode_finetune_jsonl(records: &[FineTuneRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

/// Validates a whole training file, failing on the first bad line.
/// Blank lines are ignored; a file with no records is rejected.
pub fn validate_finetune_jsonl(text: &str) -> Result<Vec<FineTuneRecord>, FineTuneValidationError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record =
            FineTuneRecord::parse_line(line).map_err(|message| FineTuneValidationError {
                line: idx + 1,
                message,
            })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(FineTuneValidationError {
            line: 0,
            message: "training file contains no records".into(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::build_entailment_prompt;

    fn record(label: EntailmentLabel) -> FineTuneRecord {
        FineTuneRecord::new(build_entailment_prompt("tweet", "claim").unwrap(), label)
    }

    #[test]
    fn wire_shape() {
        let line = record(EntailmentLabel::Entailment).to_line();
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        let roles: Vec<_> = value["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(roles, ["system", "user", "assistant"]);
        assert_eq!(value["messages"][2]["content"], "ENTAILMENT");
        assert_eq!(value.as_object().unwrap().len(), 1);
    }

    #[test]
    fn validation_round_trip() {
        let records: Vec<_> = EntailmentLabel::ALL.into_iter().map(record).collect();
        let text = encode_finetune_jsonl(&records);
        assert_eq!(validate_finetune_jsonl(&text).unwrap(), records);
    }

    #[test]
    fn bad_line_is_named() {
        let good = record(EntailmentLabel::Neutral).to_line();
        let bad = good.replace("\"NEUTRAL\"", "\"MAYBE\"");
        let text = format!("{good}\n{bad}\n");
        assert_eq!(validate_finetune_jsonl(&text).unwrap_err().line, 2);
        assert_eq!(validate_finetune_jsonl("{}\n").unwrap_err().line, 1);
        assert!(validate_finetune_jsonl("").is_err());
    }
}
