//! Entailment classification of (post, claim) pairs against a chat model.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use factgpt_core::domain::{decode_records, encode_line};
use factgpt_core::promptkit::{build_entailment_prompt, PromptError};
use factgpt_core::{Claim, EntailmentLabel, Execution, PairCandidate, Post, Prediction};
use factgpt_gateway::config::CLASSIFICATION_TEMPERATURE;
use factgpt_gateway::{Gateway, GatewayError, GenerationConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no label token in response {0:?}")]
pub struct Unparseable(pub String);

/// First whole-word label token, case-insensitive. The flag is set when a
/// different label token also appears later in the response.
pub fn parse_label(raw_response: &str) -> Result<(EntailmentLabel, bool), Unparseable> {
    let mut found = raw_response
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter_map(|word| word.to_uppercase().parse::<EntailmentLabel>().ok());
    let first = found
        .next()
        .ok_or_else(|| Unparseable(raw_response.to_string()))?;
    let ambiguous = found.any(|label| label != first);
    Ok((first, ambiguous))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub model_id: String,
    pub temperature: f64,
    pub parallelism: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    3
}

impl ClassifyConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: CLASSIFICATION_TEMPERATURE,
            parallelism: 4,
            max_retries: default_retries(),
        }
    }

    fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            max_retries: self.max_retries,
            ..GenerationConfig::new(self.model_id.clone(), self.temperature)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("pair {pair_id:?} references unknown {kind} {id:?}")]
    Unresolved {
        pair_id: String,
        kind: &'static str,
        id: String,
    },
}

/// A pair with both texts looked up.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPair {
    pub pair_id: String,
    pub tweet_text: String,
    pub claim_text: String,
}

pub fn resolve_pairs(
    pairs: &[PairCandidate],
    posts: &[Post],
    claims: &[Claim],
) -> Result<Vec<ResolvedPair>, ClassifyError> {
    let posts: HashMap<&str, &str> = posts
        .iter()
        .map(|p| (p.id.as_str(), p.text.as_str()))
        .collect();
    let claims: HashMap<&str, &str> = claims
        .iter()
        .map(|c| (c.id.as_str(), c.text.as_str()))
        .collect();
    pairs
        .iter()
        .map(|pair| {
            let unresolved = |kind, id: &str| ClassifyError::Unresolved {
                pair_id: pair.pair_id.clone(),
                kind,
                id: id.to_string(),
            };
            Ok(ResolvedPair {
                pair_id: pair.pair_id.clone(),
                tweet_text: posts
                    .get(pair.post_id.as_str())
                    .ok_or_else(|| unresolved("post", &pair.post_id))?
                    .to_string(),
                claim_text: claims
                    .get(pair.claim_id.as_str())
                    .ok_or_else(|| unresolved("claim", &pair.claim_id))?
                    .to_string(),
            })
        })
        .collect()
}

/// Asks the model about one pair. An unparseable reply is still a
/// prediction, with `label: None`.
pub fn classify_pair(
    gateway: &Gateway,
    pair_id: &str,
    tweet_text: &str,
    claim_text: &str,
    config: &ClassifyConfig,
) -> Result<Prediction, ClassifyError> {
    let prompt = build_entailment_prompt(tweet_text, claim_text)?;
    let raw_response = gateway.chat_complete(&prompt, &config.generation_config())?;
    let (label, ambiguous) = match parse_label(&raw_response) {
        Ok((label, ambiguous)) => (Some(label), ambiguous),
        Err(_) => (None, false),
    };
    Ok(Prediction {
        pair_id: pair_id.to_string(),
        model_id: config.model_id.clone(),
        label,
        raw_response,
        ambiguous,
    })
}

/// JSON-lines record of finished predictions, appended as pairs complete and
/// flushed every `flush_every` records.
pub struct Checkpoint {
    path: PathBuf,
    flush_every: usize,
    done: HashMap<String, Prediction>,
    writer: Mutex<(BufWriter<File>, usize)>,
}

impl Checkpoint {
    pub fn open(path: &Path, flush_every: usize) -> std::io::Result<Self> {
        let mut done = HashMap::new();
        if path.exists() {
            let decoded = decode_records::<Prediction>(&std::fs::read_to_string(path)?);
            for err in &decoded.errors {
                log::warn!("ignoring checkpoint {}: {err}", path.display());
            }
            for p in decoded.records {
                done.insert(p.pair_id.clone(), p);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            flush_every: flush_every.max(1),
            done,
            writer: Mutex::new((BufWriter::new(file), 0)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn completed(&self, pair_id: &str, model_id: &str) -> Option<&Prediction> {
        self.done.get(pair_id).filter(|p| p.model_id == model_id)
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    fn record(&self, prediction: &Prediction) -> std::io::Result<()> {
        let mut guard = self.writer.lock().expect("checkpoint writer");
        let (writer, pending) = &mut *guard;
        writeln!(writer, "{}", encode_line(prediction))?;
        *pending += 1;
        if *pending >= self.flush_every {
            writer.flush()?;
            *pending = 0;
        }
        Ok(())
    }

    pub fn flush(&self) -> std::io::Result<()> {
        let mut guard = self.writer.lock().expect("checkpoint writer");
        guard.1 = 0;
        guard.0.flush()
    }
}

pub type PairOutcome = Result<Prediction, ClassifyError>;

/// One outcome per input pair, in input order. Pairs already present in the
/// checkpoint are answered from it without a request.
pub fn classify_batch(
    gateway: &Gateway,
    pairs: &[ResolvedPair],
    config: &ClassifyConfig,
    checkpoint: Option<&Checkpoint>,
) -> Vec<PairOutcome> {
    let execution = Execution::with_threads(config.parallelism);
    let outcomes = execution.map(pairs, |pair| {
        if let Some(done) = checkpoint.and_then(|c| c.completed(&pair.pair_id, &config.model_id)) {
            return Ok(done.clone());
        }
        let prediction = classify_pair(
            gateway,
            &pair.pair_id,
            &pair.tweet_text,
            &pair.claim_text,
            config,
        )?;
        if let Some(checkpoint) = checkpoint {
            if let Err(err) = checkpoint.record(&prediction) {
                log::warn!("checkpoint write failed: {err}");
            }
        }
        Ok(prediction)
    });
    if let Some(checkpoint) = checkpoint {
        if let Err(err) = checkpoint.flush() {
            log::warn!("checkpoint flush failed: {err}");
        }
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntailmentLabel::*;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_label("ENTAILMENT"), Ok((Entailment, false)));
        assert_eq!(
            parse_label("contradiction. It is not neutral."),
            Ok((Contradiction, true))
        );
        assert!(parse_label("The tweet supports the claim.").is_err());
        assert!(parse_label("NEUTRALITY").is_err());
        assert_eq!(
            parse_label("Neutral, definitely NEUTRAL"),
            Ok((Neutral, false))
        );
        assert!(parse_label("").is_err());
    }

    #[test]
    fn classification_defaults() {
        let c = ClassifyConfig::new("m");
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.parallelism, 4);
    }
}
