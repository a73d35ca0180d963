//! Balanced synthetic training data: one generated tweet per (claim, label)
//! cell, a label-stratified train/validation split, chat-format export, and
//! the resumable generate -> split -> export -> fine-tune pipeline.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use factgpt_core::domain::{decode_records, encode_records, sha256_hex, DecodeError};
use factgpt_core::finetune::{encode_finetune_jsonl, FineTuneRecord};
use factgpt_core::promptkit::{build_entailment_prompt, build_generation_prompt, PromptError};
use factgpt_core::{Claim, EntailmentLabel, Execution, SyntheticExample};
use factgpt_gateway::{FineTuneJob, Gateway, GatewayError, GenerationConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use factgpt_core::finetune::{validate_finetune_jsonl, FineTuneValidationError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no claims to generate from")]
    NoClaims,
    #[error("need at least 2 examples to split, got {0}")]
    TooFewExamples(usize),
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("example references unknown claim {0:?}")]
    UnresolvedClaim(String),
    #[error("every generation cell failed ({} failures)", .0.len())]
    AllCellsFailed(Vec<CellFailure>),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: DecodeError },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub claim_id: String,
    pub label: EntailmentLabel,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub examples: Vec<SyntheticExample>,
    pub failures: Vec<CellFailure>,
}

impl GenerationOutcome {
    pub fn is_balanced(&self) -> bool {
        let counts = label_counts(&self.examples);
        counts
            .values()
            .all(|&c| c == counts[&EntailmentLabel::Entailment])
    }
}

pub fn label_counts(examples: &[SyntheticExample]) -> BTreeMap<EntailmentLabel, usize> {
    let mut counts: BTreeMap<_, _> = EntailmentLabel::ALL.into_iter().map(|l| (l, 0)).collect();
    for e in examples {
        *counts.entry(e.target_label).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    /// Attempts per cell, counting the first; transport retries happen inside each attempt.
    pub cell_attempts: u32,
    pub execution: Execution,
    pub created_at: DateTime<Utc>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            cell_attempts: 2,
            execution: Execution::default(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }
}

fn generate_cell(
    gateway: &Gateway,
    claim: &Claim,
    label: EntailmentLabel,
    config: &GenerationConfig,
    attempts: u32,
) -> Result<String, String> {
    let prompt = build_generation_prompt(&claim.text, label).map_err(|e| e.to_string())?;
    let mut last = String::new();
    for _ in 0..attempts.max(1) {
        match gateway.chat_complete(&prompt, config) {
            Ok(text) if !text.trim().is_empty() => return Ok(text.trim().to_string()),
            Ok(_) => last = "empty generation".into(),
            Err(e @ GatewayError::Auth(_)) => return Err(e.to_string()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

/// Three tweets per claim, one per label, emitted in claim order then label
/// order. Cells that keep failing are reported and left out.
pub fn generate_balanced_set(
    gateway: &Gateway,
    claims: &[Claim],
    config: &GenerationConfig,
    options: &GenerationOptions,
) -> Result<GenerationOutcome, SynthError> {
    if claims.is_empty() {
        return Err(SynthError::NoClaims);
    }
    config.validate()?;
    let cells: Vec<(&Claim, EntailmentLabel)> = claims
        .iter()
        .flat_map(|c| EntailmentLabel::ALL.into_iter().map(move |l| (c, l)))
        .collect();
    let results = options.execution.map(&cells, |(claim, label)| {
        generate_cell(gateway, claim, *label, config, options.cell_attempts)
    });
    let mut outcome = GenerationOutcome {
        examples: Vec::with_capacity(cells.len()),
        failures: Vec::new(),
    };
    for ((claim, label), result) in cells.into_iter().zip(results) {
        match result {
            Ok(tweet_text) => outcome.examples.push(SyntheticExample {
                claim_id: claim.id.clone(),
                target_label: label,
                tweet_text,
                generator_model: config.model_id.clone(),
                created_at: options.created_at,
            }),
            Err(error) => outcome.failures.push(CellFailure {
                claim_id: claim.id.clone(),
                label,
                error,
            }),
        }
    }
    if outcome.examples.is_empty() {
        return Err(SynthError::AllCellsFailed(outcome.failures));
    }
    if !outcome.failures.is_empty() {
        log::warn!(
            "{} generation cells failed; the synthetic set is no longer balanced",
            outcome.failures.len()
        );
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

const EPS: f64 = 1e-9;

/// Training-set size per label: floors of each label's share, with the
/// remainder of `floor(n * fraction)` handed out by largest fractional part.
pub fn train_quotas(sizes: &[usize; 3], fraction: f64) -> [usize; 3] {
    let total: usize = sizes.iter().sum();
    let target = (total as f64 * fraction + EPS).floor() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&n| n as f64 * fraction).collect();
    let mut quotas = [0usize; 3];
    for i in 0..3 {
        quotas[i] = (exact[i] + EPS).floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quotas[a] as f64;
        let rb = exact[b] - quotas[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(quotas.iter().sum());
    for &i in order.iter().cycle().take(3 * 3) {
        if remaining == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            remaining -= 1;
        }
    }
    quotas
}

/// Seeded, label-stratified split. Each label group is shuffled and cut, and
/// the groups are concatenated in label order.
pub fn split_train_validation(
    examples: &[SyntheticExample],
    config: &SplitConfig,
) -> Result<(Vec<SyntheticExample>, Vec<SyntheticExample>), SynthError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(SynthError::InvalidFraction(config.train_fraction));
    }
    if examples.len() < 2 {
        return Err(SynthError::TooFewExamples(examples.len()));
    }
    let mut groups: [Vec<&SyntheticExample>; 3] = Default::default();
    for e in examples {
        groups[e.target_label.index()].push(e);
    }
    let sizes = [groups[0].len(), groups[1].len(), groups[2].len()];
    let quotas = train_quotas(&sizes, config.train_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (group, quota) in groups.iter_mut().zip(quotas) {
        group.shuffle(&mut rng);
        train.extend(group[..quota].iter().map(|e| (*e).clone()));
        validation.extend(group[quota..].iter().map(|e| (*e).clone()));
    }
    Ok((train, validation))
}

/// One chat record per example, in order, using the same prompt the
/// classifier sends at inference time.
pub fn export_finetune_jsonl(
    examples: &[SyntheticExample],
    claims: &[Claim],
) -> Result<String, SynthError> {
    let by_id: HashMap<&str, &str> = claims
        .iter()
        .map(|c| (c.id.as_str(), c.text.as_str()))
        .collect();
    let records = examples
        .iter()
        .map(|e| {
            let claim = by_id
                .get(e.claim_id.as_str())
                .ok_or_else(|| SynthError::UnresolvedClaim(e.claim_id.clone()))?;
            Ok(FineTuneRecord::new(
                build_entailment_prompt(&e.tweet_text, claim)?,
                e.target_label,
            ))
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(encode_finetune_jsonl(&records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub per_label: BTreeMap<EntailmentLabel, usize>,
    pub train: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub synthetic: String,
    pub train: String,
    pub validation: String,
    pub finetune_train: String,
    pub finetune_validation: String,
    pub job: String,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        Self {
            synthetic: "synthetic.jsonl".into(),
            train: "train.jsonl".into(),
            validation: "validation.jsonl".into(),
            finetune_train: "finetune_train.jsonl".into(),
            finetune_validation: "finetune_validation.jsonl".into(),
            job: "job.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub generator_model: String,
    pub base_model: String,
    pub seed: u64,
    pub train_fraction: f64,
    pub counts: Counts,
    pub artifact_paths: ArtifactPaths,
    pub claims_sha256: String,
    pub failures: Vec<CellFailure>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Split,
    Export,
    Submit,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub split: SplitConfig,
    pub epochs: Option<u32>,
    pub generation: GenerationOptions,
    /// `None` returns right after submission.
    pub wait: Option<(Duration, u32)>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            epochs: None,
            generation: GenerationOptions::default(),
            wait: Some((Duration::from_secs(30), 240)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub job: FineTuneJob,
    pub manifest: PipelineManifest,
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_records<T: factgpt_core::Record>(path: &Path) -> Result<Vec<T>, SynthError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    decode_records::<T>(&text)
        .into_strict()
        .map_err(|source| SynthError::Decode {
            path: path.to_path_buf(),
            source,
        })
}

fn write_text(path: &Path, text: &str) -> Result<(), SynthError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Runs generate -> split -> export -> submit inside `work_dir`, skipping any
/// stage whose artifact already exists. The validation part is written but
/// never submitted.
pub fn run_finetune_pipeline(
    gateway: &Gateway,
    claims: &[Claim],
    generation: &GenerationConfig,
    base_model: &str,
    work_dir: &Path,
    options: &PipelineOptions,
) -> Result<PipelineOutcome, SynthError> {
    std::fs::create_dir_all(work_dir).map_err(io_err(work_dir))?;
    let paths = ArtifactPaths::default();
    let at = |name: &str| work_dir.join(name);
    let (mut executed, mut skipped) = (Vec::new(), Vec::new());

    let synthetic_path = at(&paths.synthetic);
    let mut failures = Vec::new();
    let examples: Vec<SyntheticExample> = if synthetic_path.exists() {
        skipped.push(Stage::Generate);
        read_records(&synthetic_path)?
    } else {
        let outcome = generate_balanced_set(gateway, claims, generation, &options.generation)?;
        write_text(&synthetic_path, &encode_records(&outcome.examples))?;
        failures = outcome.failures;
        executed.push(Stage::Generate);
        outcome.examples
    };

    let (train_path, validation_path) = (at(&paths.train), at(&paths.validation));
    let (train, validation) = if train_path.exists() && validation_path.exists() {
        skipped.push(Stage::Split);
        (read_records(&train_path)?, read_records(&validation_path)?)
    } else {
        let (train, validation) = split_train_validation(&examples, &options.split)?;
        write_text(&train_path, &encode_records(&train))?;
        write_text(&validation_path, &encode_records(&validation))?;
        executed.push(Stage::Split);
        (train, validation)
    };

    let ft_train_path = at(&paths.finetune_train);
    let ft_validation_path = at(&paths.finetune_validation);
    let training_file = if ft_train_path.exists() && ft_validation_path.exists() {
        skipped.push(Stage::Export);
        std::fs::read_to_string(&ft_train_path).map_err(io_err(&ft_train_path))?
    } else {
        let text = export_finetune_jsonl(&train, claims)?;
        write_text(&ft_train_path, &text)?;
        write_text(
            &ft_validation_path,
            &export_finetune_jsonl(&validation, claims)?,
        )?;
        executed.push(Stage::Export);
        text
    };

    let job_path = at(&paths.job);
    let mut job: FineTuneJob = if job_path.exists() {
        skipped.push(Stage::Submit);
        let text = std::fs::read_to_string(&job_path).map_err(io_err(&job_path))?;
        serde_json::from_str(&text).map_err(|source| SynthError::Json {
            path: job_path.clone(),
            source,
        })?
    } else {
        executed.push(Stage::Submit);
        gateway.submit_finetune(&training_file, base_model, options.epochs)?
    };
    if let Some((interval, max_polls)) = options.wait {
        if !job.status.is_terminal() {
            job = gateway.wait_for_finetune(&job.job_id, interval, max_polls)?;
        }
    }
    let job_json = serde_json::to_string_pretty(&job).expect("job serializes");
    write_text(&job_path, &(job_json + "\n"))?;

    let manifest = PipelineManifest {
        generator_model: generation.model_id.clone(),
        base_model: base_model.to_string(),
        seed: options.split.seed,
        train_fraction: options.split.train_fraction,
        counts: Counts {
            total: examples.len(),
            per_label: label_counts(&examples),
            train: train.len(),
            validation: validation.len(),
        },
        artifact_paths: paths,
        claims_sha256: sha256_hex(encode_records(claims).as_bytes()),
        failures,
        created_at: Utc::now(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&at("manifest.json"), &(manifest_json + "\n"))?;
    Ok(PipelineOutcome {
        job,
        manifest,
        executed,
        skipped,
    })
}
