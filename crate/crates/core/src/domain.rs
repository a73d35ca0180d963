//! Domain records shared by every stage of the pipeline, and the JSON-lines
//! codec used to move them between files, processes and the HTTP service.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Relationship between a post and a claim, read as "if the post is true, then ...".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl EntailmentLabel {
    /// Canonical label order, used for matrix indices and report rows.
    pub const ALL: [EntailmentLabel; 3] = [
        EntailmentLabel::Entailment,
        EntailmentLabel::Neutral,
        EntailmentLabel::Contradiction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntailmentLabel::Entailment => "ENTAILMENT",
            EntailmentLabel::Neutral => "NEUTRAL",
            EntailmentLabel::Contradiction => "CONTRADICTION",
        }
    }

    pub fn index(self) -> usize {
        match self {
            EntailmentLabel::Entailment => 0,
            EntailmentLabel::Neutral => 1,
            EntailmentLabel::Contradiction => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for EntailmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entailment label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for EntailmentLabel {
    type Err = UnknownLabel;

    /// Accepts only the exact uppercase tokens.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ENTAILMENT" => Ok(EntailmentLabel::Entailment),
            "NEUTRAL" => Ok(EntailmentLabel::Neutral),
            "CONTRADICTION" => Ok(EntailmentLabel::Contradiction),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// A false claim that professional fact-checkers have already debunked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debunked_on: Option<NaiveDate>,
}

impl Claim {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            source: None,
            debunked_on: None,
        }
    }
}

/// A social media post to be matched against the claim store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl Post {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            created_at: None,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    pub pair_id: String,
    pub post_id: String,
    pub claim_id: String,
    pub token_score: f64,
    pub semantic_score: f64,
    pub combined_score: f64,
}

impl PairCandidate {
    /// Pair ids are derived from the two member ids so re-running a pairing
    /// over the same corpora yields the same identifiers.
    pub fn make_id(post_id: &str, claim_id: &str) -> String {
        format!("{post_id}::{claim_id}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub claim_id: String,
    pub target_label: EntailmentLabel,
    pub tweet_text: String,
    pub generator_model: String,
    pub created_at: DateTime<Utc>,
}

/// A model's answer for one pair. `label` is `None` when the raw response
/// contained no label token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub model_id: String,
    pub label: Option<EntailmentLabel>,
    pub raw_response: String,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub annotator_id: String,
    pub label: EntailmentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSet {
    pub pair_id: String,
    pub votes: Vec<Vote>,
}

impl VoteSet {
    pub fn from_labels(pair_id: impl Into<String>, labels: &[EntailmentLabel]) -> Self {
        Self {
            pair_id: pair_id.into(),
            votes: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Vote {
                    annotator_id: format!("a{}", i + 1),
                    label,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Decided(EntailmentLabel),
    Tie(BTreeSet<EntailmentLabel>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub pair_id: String,
    pub outcome: Outcome,
}

impl GoldLabel {
    pub fn decided(pair_id: impl Into<String>, label: EntailmentLabel) -> Self {
        Self {
            pair_id: pair_id.into(),
            outcome: Outcome::Decided(label),
        }
    }
}

/// A record type carried in a JSON-lines file.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Checks the invariants serde cannot express.
    fn validate(&self) -> Result<(), String>;
}

fn non_empty(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("field `{field}` must be non-empty"))
    } else {
        Ok(())
    }
}

impl Record for Claim {
    const KIND: &'static str = "claim";
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("text", &self.text)
    }
}

impl Record for Post {
    const KIND: &'static str = "post";
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("text", &self.text)
    }
}

impl Record for PairCandidate {
    const KIND: &'static str = "pair";
    fn validate(&self) -> Result<(), String> {
        non_empty("pair_id", &self.pair_id)?;
        non_empty("post_id", &self.post_id)?;
        non_empty("claim_id", &self.claim_id)?;
        if !(0.0..=1.0).contains(&self.token_score) {
            return Err(format!("token_score {} outside [0, 1]", self.token_score));
        }
        if !(-1.0..=1.0).contains(&self.semantic_score) {
            return Err(format!(
                "semantic_score {} outside [-1, 1]",
                self.semantic_score
            ));
        }
        if !self.combined_score.is_finite() {
            return Err("combined_score must be finite".into());
        }
        Ok(())
    }
}

impl Record for SyntheticExample {
    const KIND: &'static str = "synthetic example";
    fn validate(&self) -> Result<(), String> {
        non_empty("claim_id", &self.claim_id)?;
        non_empty("tweet_text", &self.tweet_text)?;
        non_empty("generator_model", &self.generator_model)
    }
}

impl Record for Prediction {
    const KIND: &'static str = "prediction";
    fn validate(&self) -> Result<(), String> {
        non_empty("pair_id", &self.pair_id)?;
        non_empty("model_id", &self.model_id)
    }
}

impl Record for VoteSet {
    const KIND: &'static str = "vote set";
    fn validate(&self) -> Result<(), String> {
        non_empty("pair_id", &self.pair_id)?;
        if self.votes.is_empty() {
            return Err("vote set has no votes".into());
        }
        let mut seen = HashSet::new();
        for vote in &self.votes {
            non_empty("annotator_id", &vote.annotator_id)?;
            if !seen.insert(vote.annotator_id.as_str()) {
                return Err(format!("annotator {:?} voted twice", vote.annotator_id));
            }
        }
        Ok(())
    }
}

impl Record for GoldLabel {
    const KIND: &'static str = "gold label";
    fn validate(&self) -> Result<(), String> {
        non_empty("pair_id", &self.pair_id)?;
        match &self.outcome {
            Outcome::Tie(labels) if labels.len() < 2 => {
                Err("a tie must carry at least two labels".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

/// A rejected input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct DecodeError {
    pub line: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub records: Vec<T>,
    pub errors: Vec<DecodeError>,
}

impl<T> Decoded<T> {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    /// Returns the records, or the first error if any line was rejected.
    pub fn into_strict(self) -> Result<Vec<T>, DecodeError> {
        match self.errors.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(self.records),
        }
    }
}

/// Serializes records as JSON-lines, one object per physical line.
pub fn encode_records<T: Record>(records: &[T]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&encode_line(record));
        out.push('\n');
    }
    out
}

pub fn encode_line<T: Serialize>(record: &T) -> String {
    serde_json::to_string(record).expect("domain records always serialize")
}

/// Parses JSON-lines text. Blank lines are skipped; bad lines are reported
/// and skipped so one corrupt line does not discard a whole file.
pub fn decode_records<T: Record>(text: &str) -> Decoded<T> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(raw) {
            Ok(record) => match record.validate() {
                Ok(()) => records.push(record),
                Err(msg) => errors.push(DecodeError {
                    line,
                    kind: DecodeErrorKind::SchemaViolation(msg),
                }),
            },
            Err(err) => {
                let kind = if err.is_data() {
                    DecodeErrorKind::SchemaViolation(err.to_string())
                } else {
                    DecodeErrorKind::MalformedJson(err.to_string())
                };
                errors.push(DecodeError { line, kind });
            }
        }
    }
    Decoded { records, errors }
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifier derived from whitespace-trimmed content, used when ingested
/// records arrive without an id.
pub fn content_id(prefix: &str, text: &str) -> String {
    let digest = sha256_hex(text.trim().as_bytes());
    format!("{prefix}-{}", &digest[..16])
}
