//! Directory-backed persistence: JSON-lines files for claims, review items and
//! reports, plus an append-only adjudication log.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use factgpt_core::domain::{decode_records, encode_line, sha256_hex, DecodeError, Record};
use factgpt_core::evalkit::EvalReport;
use factgpt_core::{Claim, EntailmentLabel, GoldLabel, PairCandidate, Prediction};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const CLAIMS_FILE: &str = "claims.jsonl";
pub const REVIEW_ITEMS_FILE: &str = "review_items.jsonl";
pub const ADJUDICATIONS_FILE: &str = "adjudications.jsonl";
pub const REPORTS_FILE: &str = "reports.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("pair {pair_id:?} is already {status}")]
    AlreadyAdjudicated {
        pair_id: String,
        status: ReviewStatus,
    },
    #[error("override requires a label")]
    MissingLabel,
    #[error("pair {0:?} has no model label to confirm")]
    NothingToConfirm(String),
    #[error("reviewer must not be empty")]
    MissingReviewer,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corrupt { path: PathBuf, source: DecodeError },
}

/// A pair waiting for (or past) human review, with everything needed to show it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub pair: PairCandidate,
    pub post_text: String,
    #[serde(default)]
    pub prediction: Option<Prediction>,
}

impl Record for ReviewItem {
    const KIND: &'static str = "review_item";
    fn validate(&self) -> Result<(), String> {
        self.pair.validate()?;
        if self.post_text.trim().is_empty() {
            return Err("post_text must not be empty".into());
        }
        match &self.prediction {
            Some(p) if p.pair_id != self.pair.pair_id => Err(format!(
                "prediction is for {:?}, not {:?}",
                p.pair_id, self.pair.pair_id
            )),
            Some(p) => p.validate(),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Confirm,
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Confirmed,
    Overridden,
}

impl std::fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Confirmed => "confirmed",
            ReviewStatus::Overridden => "overridden",
        })
    }
}

impl std::str::FromStr for ReviewStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pending" => Ok(ReviewStatus::Pending),
            "confirmed" => Ok(ReviewStatus::Confirmed),
            "overridden" => Ok(ReviewStatus::Overridden),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// One line of the adjudication log. `label` is the resulting gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub sequence: u64,
    pub pair_id: String,
    pub decision: Decision,
    pub label: EntailmentLabel,
    pub model_label: Option<EntailmentLabel>,
    pub reviewer: String,
}

impl Adjudication {
    pub fn status(&self) -> ReviewStatus {
        match self.decision {
            Decision::Confirm => ReviewStatus::Confirmed,
            Decision::Override => ReviewStatus::Overridden,
        }
    }
}

impl Record for Adjudication {
    const KIND: &'static str = "adjudication";
    fn validate(&self) -> Result<(), String> {
        if self.pair_id.is_empty() || self.reviewer.trim().is_empty() {
            return Err("pair_id and reviewer must not be empty".into());
        }
        if self.decision == Decision::Confirm && self.model_label != Some(self.label) {
            return Err("a confirmation must keep the model label".into());
        }
        Ok(())
    }
}

/// A persisted evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub report: EvalReport,
    pub manifest: Value,
}

impl Record for ReportEntry {
    const KIND: &'static str = "report";
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub ingested: usize,
    pub skipped_duplicates: usize,
}

#[derive(Debug, Clone)]
pub struct AdjudicationRequest {
    pub pair_id: String,
    pub decision: Decision,
    pub label: Option<EntailmentLabel>,
    pub reviewer: String,
    pub force: bool,
}

/// Applies the review rules to one submission. Returns the gold label.
pub fn resolve_decision(
    item: &ReviewItem,
    current: Option<&Adjudication>,
    request: &AdjudicationRequest,
) -> Result<EntailmentLabel, StoreError> {
    if request.reviewer.trim().is_empty() {
        return Err(StoreError::MissingReviewer);
    }
    if let Some(current) = current {
        if !request.force {
            return Err(StoreError::AlreadyAdjudicated {
                pair_id: item.pair.pair_id.clone(),
                status: current.status(),
            });
        }
    }
    match request.decision {
        Decision::Override => request.label.ok_or(StoreError::MissingLabel),
        Decision::Confirm => item
            .prediction
            .as_ref()
            .and_then(|p| p.label)
            .ok_or_else(|| StoreError::NothingToConfirm(item.pair.pair_id.clone())),
    }
}

/// Review items best first: combined score descending, then pair id.
pub fn sort_review_items(items: &mut [ReviewItem]) {
    items.sort_by(|a, b| {
        b.pair
            .combined_score
            .total_cmp(&a.pair.combined_score)
            .then_with(|| a.pair.pair_id.cmp(&b.pair.pair_id))
    });
}

/// Key used to spot the same claim text under a different id.
pub fn claim_fingerprint(text: &str) -> String {
    let normalized = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    sha256_hex(normalized.as_bytes())
}

/// Persistence used by the service. Writers are serialized per store;
/// readers see a consistent snapshot.
pub trait Storage: Send + Sync {
    fn claims(&self) -> Vec<Claim>;
    /// Skips claims whose id or normalized text is already present.
    fn ingest_claims(&self, claims: Vec<Claim>) -> Result<IngestSummary, StoreError>;
    /// All review items, best first.
    fn review_items(&self) -> Vec<ReviewItem>;
    fn review_item(&self, pair_id: &str) -> Option<ReviewItem>;
    /// Adds items whose pair id is new; returns how many were added.
    fn add_review_items(&self, items: Vec<ReviewItem>) -> Result<usize, StoreError>;
    /// Full log in append order.
    fn adjudications(&self) -> Vec<Adjudication>;
    fn adjudicate(&self, request: &AdjudicationRequest) -> Result<Adjudication, StoreError>;
    fn latest_report(&self) -> Option<ReportEntry>;
    fn append_report(&self, entry: &ReportEntry) -> Result<(), StoreError>;

    /// Latest adjudication per pair.
    fn current_adjudications(&self) -> BTreeMap<String, Adjudication> {
        self.adjudications()
            .into_iter()
            .map(|a| (a.pair_id.clone(), a))
            .collect()
    }

    /// One decided gold label per adjudicated pair, ordered by pair id.
    fn gold_labels(&self) -> Vec<GoldLabel> {
        self.current_adjudications()
            .into_values()
            .map(|a| GoldLabel::decided(a.pair_id, a.label))
            .collect()
    }
}

#[derive(Default)]
struct State {
    claims: Vec<Claim>,
    claim_ids: HashSet<String>,
    claim_fingerprints: HashSet<String>,
    items: HashMap<String, ReviewItem>,
    adjudications: Vec<Adjudication>,
    current: HashMap<String, usize>,
    latest_report: Option<ReportEntry>,
}

pub struct FileStore {
    dir: PathBuf,
    state: RwLock<State>,
}

fn load<T: Record>(path: &Path) -> Result<Vec<T>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_records(&text)
        .into_strict()
        .map_err(|source| StoreError::Corrupt {
            path: path.to_path_buf(),
            source,
        })
}

impl FileStore {
    /// Opens (creating if needed) the store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut state = State::default();
        for claim in load::<Claim>(&dir.join(CLAIMS_FILE))? {
            state.claim_ids.insert(claim.id.clone());
            state
                .claim_fingerprints
                .insert(claim_fingerprint(&claim.text));
            state.claims.push(claim);
        }
        for item in load::<ReviewItem>(&dir.join(REVIEW_ITEMS_FILE))? {
            state.items.entry(item.pair.pair_id.clone()).or_insert(item);
        }
        for adjudication in load::<Adjudication>(&dir.join(ADJUDICATIONS_FILE))? {
            state
                .current
                .insert(adjudication.pair_id.clone(), state.adjudications.len());
            state.adjudications.push(adjudication);
        }
        state.latest_report = load::<ReportEntry>(&dir.join(REPORTS_FILE))?.pop();
        Ok(Self {
            dir,
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append<T: Serialize>(&self, file: &str, records: &[T]) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(file);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut text = String::new();
        for record in records {
            text.push_str(&encode_line(record));
            text.push('\n');
        }
        let mut handle = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        handle.write_all(text.as_bytes()).map_err(io)?;
        handle.flush().map_err(io)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("store lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().expect("store lock poisoned")
    }
}

impl Storage for FileStore {
    fn claims(&self) -> Vec<Claim> {
        self.read().claims.clone()
    }

    fn ingest_claims(&self, claims: Vec<Claim>) -> Result<IngestSummary, StoreError> {
        let mut state = self.write();
        let total = claims.len();
        let mut fresh: Vec<Claim> = Vec::new();
        let mut batch_ids = HashSet::new();
        let mut batch_fingerprints = HashSet::new();
        for claim in claims {
            let fingerprint = claim_fingerprint(&claim.text);
            let duplicate = state.claim_ids.contains(&claim.id)
                || state.claim_fingerprints.contains(&fingerprint)
                || batch_ids.contains(&claim.id)
                || batch_fingerprints.contains(&fingerprint);
            if !duplicate {
                batch_ids.insert(claim.id.clone());
                batch_fingerprints.insert(fingerprint);
                fresh.push(claim);
            }
        }
        let skipped_duplicates = total - fresh.len();
        self.append(CLAIMS_FILE, &fresh)?;
        for claim in &fresh {
            state.claim_ids.insert(claim.id.clone());
            state
                .claim_fingerprints
                .insert(claim_fingerprint(&claim.text));
        }
        let ingested = fresh.len();
        state.claims.extend(fresh);
        Ok(IngestSummary {
            ingested,
            skipped_duplicates,
        })
    }

    fn review_items(&self) -> Vec<ReviewItem> {
        let mut items: Vec<_> = self.read().items.values().cloned().collect();
        sort_review_items(&mut items);
        items
    }

    fn review_item(&self, pair_id: &str) -> Option<ReviewItem> {
        self.read().items.get(pair_id).cloned()
    }

    fn add_review_items(&self, items: Vec<ReviewItem>) -> Result<usize, StoreError> {
        let mut state = self.write();
        let mut fresh: Vec<ReviewItem> = Vec::new();
        for item in items {
            let id = &item.pair.pair_id;
            if !state.items.contains_key(id) && !fresh.iter().any(|f| &f.pair.pair_id == id) {
                fresh.push(item);
            }
        }
        self.append(REVIEW_ITEMS_FILE, &fresh)?;
        let added = fresh.len();
        for item in fresh {
            state.items.insert(item.pair.pair_id.clone(), item);
        }
        Ok(added)
    }

    fn adjudications(&self) -> Vec<Adjudication> {
        self.read().adjudications.clone()
    }

    fn adjudicate(&self, request: &AdjudicationRequest) -> Result<Adjudication, StoreError> {
        let mut state = self.write();
        let item = state
            .items
            .get(&request.pair_id)
            .ok_or_else(|| StoreError::UnknownPair(request.pair_id.clone()))?;
        let current = state
            .current
            .get(&request.pair_id)
            .map(|&i| &state.adjudications[i]);
        let label = resolve_decision(item, current, request)?;
        let adjudication = Adjudication {
            sequence: state.adjudications.len() as u64 + 1,
            pair_id: request.pair_id.clone(),
            decision: request.decision,
            label,
            model_label: item.prediction.as_ref().and_then(|p| p.label),
            reviewer: request.reviewer.trim().to_string(),
        };
        self.append(ADJUDICATIONS_FILE, std::slice::from_ref(&adjudication))?;
        let index = state.adjudications.len();
        state.current.insert(adjudication.pair_id.clone(), index);
        state.adjudications.push(adjudication.clone());
        Ok(adjudication)
    }

    fn latest_report(&self) -> Option<ReportEntry> {
        self.read().latest_report.clone()
    }

    fn append_report(&self, entry: &ReportEntry) -> Result<(), StoreError> {
        let mut state = self.write();
        self.append(REPORTS_FILE, std::slice::from_ref(entry))?;
        state.latest_report = Some(entry.clone());
        Ok(())
    }
}
