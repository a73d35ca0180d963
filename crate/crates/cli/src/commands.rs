use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use factgpt_core::annotate::{aggregate_all, distribution_report};
use factgpt_core::domain::{encode_records, sha256_hex};
use factgpt_core::evalkit::{evaluate, render_report, NamedReport, ScoringPolicy};
use factgpt_core::finetune::validate_finetune_jsonl;
use factgpt_core::matcher::{EmbedderRegistry, MatchError, Matcher};
use factgpt_core::{
    Claim, EntailmentLabel, Execution, GoldLabel, PairCandidate, Post, Prediction,
    SyntheticExample, VoteSet,
};
use factgpt_gateway::{FineTuneJob, Gateway, GenerationConfig, JobStatus, RemoteEmbedder};
use factgpt_pipeline::synthgen::{label_counts, PipelineOptions};
use factgpt_pipeline::{
    classify_batch, export_finetune_jsonl, generate_balanced_set, resolve_pairs,
    run_finetune_pipeline, split_train_validation, Checkpoint, ClassifyConfig, GenerationOptions,
    SplitConfig,
};
use factgpt_service::api::claim_from_value;
use factgpt_service::store::{claim_fingerprint, ReportEntry, ReviewItem};
use factgpt_service::{FileStore, ServiceConfig, Storage};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::run::Run;
use crate::settings::{pick, FileConfig, Settings};
use crate::{
    AggregateArgs, ClassifyArgs, Cli, Command, EvaluateArgs, ExportArgs, FinetuneArgs,
    GenerateArgs, IngestClaimsArgs, MatcherArgs, Outcome, PairArgs, ReportArgs, ServeArgs,
};

pub fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let file = match &g.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(
        g.provider.clone(),
        g.profile.clone(),
        g.api_base.clone(),
        g.seed,
        file,
    );
    settings.provider.resolve_profile()?;
    let ctx = Ctx {
        settings,
        dry_run: g.dry_run,
    };
    match cli.command {
        Command::IngestClaims(args) => ctx.ingest_claims(args),
        Command::Pair(args) => ctx.pair(args),
        Command::Generate(args) => ctx.generate(args),
        Command::ExportFinetune(args) => ctx.export_finetune(args),
        Command::Finetune(args) => ctx.finetune(args),
        Command::Classify(args) => ctx.classify(args),
        Command::Aggregate(args) => ctx.aggregate(args),
        Command::Evaluate(args) => ctx.evaluate(args),
        Command::Report(args) => ctx.report(args),
        Command::Serve(args) => ctx.serve(args),
    }
}

fn done(summary: Value) -> Outcome {
    Outcome {
        summary,
        stdout: None,
    }
}

fn label_histogram<'a>(labels: impl Iterator<Item = Option<EntailmentLabel>> + 'a) -> Value {
    let mut counts: BTreeMap<String, usize> = EntailmentLabel::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), 0))
        .collect();
    for label in labels {
        let key = label.map_or("UNPARSEABLE".to_string(), |l| l.as_str().to_string());
        *counts.entry(key).or_default() += 1;
    }
    json!(counts)
}

/// Timestamp stamped on synthetic examples: SOURCE_DATE_EPOCH when set, the
/// Unix epoch for mock runs, otherwise now.
fn synthetic_timestamp(mock: bool) -> DateTime<Utc> {
    if let Some(secs) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
    {
        if let Some(at) = Utc.timestamp_opt(secs, 0).single() {
            return at;
        }
    }
    if mock {
        DateTime::<Utc>::UNIX_EPOCH
    } else {
        Utc::now()
    }
}

/// Drops claims whose id or normalized text was already seen; first wins.
fn dedupe_claims(claims: Vec<Claim>) -> (Vec<Claim>, usize) {
    let total = claims.len();
    let mut ids = HashSet::new();
    let mut fingerprints = HashSet::new();
    let unique: Vec<Claim> = claims
        .into_iter()
        .filter(|c| {
            let fingerprint = claim_fingerprint(&c.text);
            if ids.contains(&c.id) || fingerprints.contains(&fingerprint) {
                return false;
            }
            ids.insert(c.id.clone());
            fingerprints.insert(fingerprint);
            true
        })
        .collect();
    let skipped = total - unique.len();
    (unique, skipped)
}

fn job_summary(job: &FineTuneJob) -> Value {
    serde_json::to_value(job).expect("job serializes")
}

fn check_job(job: &FineTuneJob, waited: bool) -> Result<(), CliError> {
    match job.status {
        JobStatus::Failed | JobStatus::Cancelled => Err(CliError::Provider(format!(
            "fine-tuning job {} ended as {:?}",
            job.job_id, job.status
        ))),
        status if waited && !status.is_terminal() => Err(CliError::Provider(format!(
            "fine-tuning job {} still {:?} after the last poll",
            job.job_id, status
        ))),
        _ => Ok(()),
    }
}

struct Ctx {
    settings: Settings,
    dry_run: bool,
}

impl Ctx {
    fn run(&self, command: &'static str, config: Value) -> Run {
        Run::new(
            command,
            self.dry_run,
            &self.settings.provider.provider,
            config,
        )
    }

    fn gateway(&self) -> Result<Arc<Gateway>, CliError> {
        Ok(Arc::new(Gateway::from_settings(&self.settings.provider)?))
    }

    fn provider_config(&self) -> Value {
        json!({
            "provider": self.settings.provider.provider,
            "profile": if self.settings.is_mock() { None } else { Some(&self.settings.provider.profile) },
            "api_base": self.settings.provider.api_base,
        })
    }

    fn ingest_claims(&self, args: IngestClaimsArgs) -> Result<Outcome, CliError> {
        let store_dir = self.settings.store_dir(args.store_dir);
        if args.out.is_none() && store_dir.is_none() {
            return Err(CliError::validation(
                "nothing to do: pass --out and/or --store-dir",
            ));
        }
        let mut run = self.run("ingest-claims", json!({"store_dir": store_dir}));
        let text = run.read(&args.input)?;
        let mut claims = Vec::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = |msg: String| {
                CliError::validation(format!(
                    "{}: line {}: {msg}",
                    args.input.display(),
                    index + 1
                ))
            };
            let value: Value =
                serde_json::from_str(line).map_err(|e| at(format!("malformed JSON: {e}")))?;
            claims.push(claim_from_value(value).map_err(|e| at(format!("schema violation: {e}")))?);
        }
        let read = claims.len();
        let (unique, skipped) = dedupe_claims(claims);
        let mut summary =
            json!({"read": read, "unique": unique.len(), "skipped_duplicates": skipped});
        if let Some(out) = &args.out {
            run.write(out, &encode_records(&unique))?;
        }
        if let (Some(dir), false) = (&store_dir, self.dry_run) {
            let result = FileStore::open(dir)?.ingest_claims(unique)?;
            summary["store"] = serde_json::to_value(result).expect("summary serializes");
        }
        let primary = args.out.clone();
        Ok(done(run.finish(primary.as_deref(), summary)?))
    }

    fn matcher_registry(
        &self,
        args: &MatcherArgs,
    ) -> Result<(factgpt_core::matcher::MatcherConfig, EmbedderRegistry), CliError> {
        let config = self.settings.matcher(
            args.alpha,
            args.top_k,
            args.min_combined_score,
            args.embedder_id.clone(),
        );
        config.validate()?;
        let mut registry = EmbedderRegistry::default();
        let model = self.settings.embedding_model(args.embedding_model.clone());
        registry.register(Arc::new(RemoteEmbedder::new(self.gateway()?, model)));
        registry.get(&config.embedder_id)?;
        Ok((config, registry))
    }

    fn pair(&self, args: PairArgs) -> Result<Outcome, CliError> {
        let (config, registry) = self.matcher_registry(&args.matcher)?;
        let mut run = self.run(
            "pair",
            json!({"matcher": config, "provider": self.provider_config()}),
        );
        let posts: Vec<Post> = run.read_records(&args.posts)?;
        let claims: Vec<Claim> = run.read_records(&args.claims)?;
        if claims.is_empty() {
            return Err(MatchError::EmptyClaimStore.into());
        }
        let mut summary = json!({"posts": posts.len(), "claims": claims.len()});
        if !self.dry_run {
            let pairs = Matcher::new(config, &registry)?.pair_candidates(&posts, &claims)?;
            summary["pairs"] = json!(pairs.len());
            run.write(&args.out, &encode_records(&pairs))?;
        }
        Ok(done(run.finish(Some(&args.out), summary)?))
    }

    fn generate(&self, args: GenerateArgs) -> Result<Outcome, CliError> {
        let model = self.settings.generator_model(args.generator_model);
        let parallelism = self.settings.parallelism(args.parallelism);
        let config = GenerationConfig::for_generation(model.clone());
        config.validate()?;
        let mut run = self.run(
            "generate",
            json!({"generator_model": model, "parallelism": parallelism, "temperature": config.temperature, "provider": self.provider_config()}),
        );
        let claims: Vec<Claim> = run.read_records(&args.claims)?;
        if claims.is_empty() {
            return Err(CliError::validation(format!(
                "{}: no claims",
                args.claims.display()
            )));
        }
        if self.dry_run {
            let summary = json!({"claims": claims.len(), "cells": claims.len() * 3});
            return Ok(done(run.finish(None, summary)?));
        }
        let gateway = self.gateway()?;
        let options = GenerationOptions {
            execution: Execution::with_threads(parallelism),
            created_at: synthetic_timestamp(self.settings.is_mock()),
            ..GenerationOptions::default()
        };
        let outcome = generate_balanced_set(&gateway, &claims, &config, &options)?;
        run.write(&args.out, &encode_records(&outcome.examples))?;
        let failures = outcome.failures.len();
        for failure in &outcome.failures {
            log::warn!(
                "no {:?} example for claim {}: {}",
                failure.label,
                failure.claim_id,
                failure.error
            );
        }
        let summary = json!({
            "claims": claims.len(),
            "examples": outcome.examples.len(),
            "per_label": label_counts(&outcome.examples),
            "failures": outcome.failures,
        });
        let summary = run.finish(Some(&args.out), summary)?;
        if failures > 0 {
            return Err(CliError::Provider(format!(
                "{failures} generation cells failed; {} lists them",
                crate::run::manifest_path(&args.out).display()
            )));
        }
        Ok(done(summary))
    }

    fn export_finetune(&self, args: ExportArgs) -> Result<Outcome, CliError> {
        let split = SplitConfig {
            train_fraction: self.settings.train_fraction(args.train_fraction),
            seed: self.settings.seed,
        };
        let mut run = self.run("export-finetune", json!({"split": split}));
        let examples: Vec<SyntheticExample> = run.read_records(&args.examples)?;
        let claims: Vec<Claim> = run.read_records(&args.claims)?;
        let (train, validation) = split_train_validation(&examples, &split)?;
        let ft_train = export_finetune_jsonl(&train, &claims)?;
        let ft_validation = export_finetune_jsonl(&validation, &claims)?;
        let out = |name: &str| args.out_dir.join(name);
        run.write(&out("train.jsonl"), &encode_records(&train))?;
        run.write(&out("validation.jsonl"), &encode_records(&validation))?;
        run.write(&out("finetune_train.jsonl"), &ft_train)?;
        run.write(&out("finetune_validation.jsonl"), &ft_validation)?;
        let summary = json!({
            "examples": examples.len(),
            "train": train.len(),
            "validation": validation.len(),
            "train_per_label": label_counts(&train),
            "validation_per_label": label_counts(&validation),
        });
        Ok(done(
            run.finish(Some(&out("finetune_train.jsonl")), summary)?,
        ))
    }

    fn finetune(&self, args: FinetuneArgs) -> Result<Outcome, CliError> {
        let base_model = self.settings.base_model(args.base_model.clone());
        let epochs = args.epochs.or(self.settings.file.epochs);
        let interval =
            Duration::from_secs(self.settings.poll_interval_secs(args.poll_interval_secs));
        let max_polls = self.settings.max_polls(args.max_polls);
        let wait = (!args.no_wait).then_some((interval, max_polls));
        match (&args.training_file, &args.claims, &args.work_dir) {
            (Some(file), _, _) => {
                self.finetune_file(file, args.out.as_deref(), &base_model, epochs, wait)
            }
            (None, Some(claims), Some(work_dir)) => {
                self.finetune_pipeline(&args, claims, work_dir, &base_model, epochs, wait)
            }
            _ => Err(CliError::validation(
                "pass --training-file, or --claims with --work-dir",
            )),
        }
    }

    fn finetune_file(
        &self,
        file: &Path,
        out: Option<&Path>,
        base_model: &str,
        epochs: Option<u32>,
        wait: Option<(Duration, u32)>,
    ) -> Result<Outcome, CliError> {
        let mut run = self.run(
            "finetune",
            json!({"base_model": base_model, "epochs": epochs, "wait": wait.is_some(), "provider": self.provider_config()}),
        );
        let text = run.read(file)?;
        let records = validate_finetune_jsonl(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", file.display())))?;
        if self.dry_run {
            return Ok(done(run.finish(None, json!({"records": records.len()}))?));
        }
        let gateway = self.gateway()?;
        let mut job = gateway.submit_finetune(&text, base_model, epochs)?;
        if let Some((interval, max_polls)) = wait {
            job = gateway.wait_for_finetune(&job.job_id, interval, max_polls)?;
        }
        if let Some(out) = out {
            run.write(
                out,
                &(serde_json::to_string_pretty(&job).expect("job serializes") + "\n"),
            )?;
        }
        check_job(&job, wait.is_some())?;
        let mut summary = run.finish(out, job_summary(&job))?;
        summary["job"] = job_summary(&job);
        Ok(Outcome {
            stdout: Some(format!(
                "{}\n",
                job.fine_tuned_model_id.as_deref().unwrap_or(&job.job_id)
            )),
            summary,
        })
    }

    fn finetune_pipeline(
        &self,
        args: &FinetuneArgs,
        claims_path: &Path,
        work_dir: &Path,
        base_model: &str,
        epochs: Option<u32>,
        wait: Option<(Duration, u32)>,
    ) -> Result<Outcome, CliError> {
        let generator_model = self.settings.generator_model(args.generator_model.clone());
        let split = SplitConfig {
            train_fraction: self.settings.train_fraction(args.train_fraction),
            seed: self.settings.seed,
        };
        let mut run = self.run(
            "finetune",
            json!({
                "generator_model": generator_model,
                "base_model": base_model,
                "epochs": epochs,
                "split": split,
                "wait": wait.is_some(),
                "provider": self.provider_config(),
            }),
        );
        let claims: Vec<Claim> = run.read_records(claims_path)?;
        let generation = GenerationConfig::for_generation(generator_model);
        generation.validate()?;
        if self.dry_run {
            return Ok(done(run.finish(
                None,
                json!({"claims": claims.len(), "work_dir": work_dir}),
            )?));
        }
        let gateway = self.gateway()?;
        let options = PipelineOptions {
            split,
            epochs,
            generation: GenerationOptions {
                execution: Execution::with_threads(self.settings.parallelism(args.parallelism)),
                created_at: synthetic_timestamp(self.settings.is_mock()),
                ..GenerationOptions::default()
            },
            wait,
        };
        let outcome = run_finetune_pipeline(
            &gateway,
            &claims,
            &generation,
            base_model,
            work_dir,
            &options,
        )?;
        for name in [
            "synthetic.jsonl",
            "train.jsonl",
            "validation.jsonl",
            "finetune_train.jsonl",
            "finetune_validation.jsonl",
            "job.json",
        ] {
            run.record_output(&work_dir.join(name))?;
        }
        check_job(&outcome.job, wait.is_some())?;
        let summary = json!({
            "job": job_summary(&outcome.job),
            "counts": outcome.manifest.counts,
            "executed": outcome.executed,
            "skipped": outcome.skipped,
        });
        let summary = run.finish(Some(&work_dir.join("job.json")), summary)?;
        Ok(Outcome {
            stdout: Some(format!(
                "{}\n",
                outcome
                    .job
                    .fine_tuned_model_id
                    .as_deref()
                    .unwrap_or(&outcome.job.job_id)
            )),
            summary,
        })
    }

    fn classify(&self, args: ClassifyArgs) -> Result<Outcome, CliError> {
        let model = self.settings.classifier_model(args.classifier_model);
        let config = ClassifyConfig {
            parallelism: self.settings.parallelism(args.parallelism),
            ..ClassifyConfig::new(model)
        };
        let store_dir = self.settings.store_dir(args.store_dir);
        let mut run = self.run(
            "classify",
            json!({"classifier": config, "checkpoint": args.checkpoint, "store_dir": store_dir, "provider": self.provider_config()}),
        );
        let pairs: Vec<PairCandidate> = run.read_records(&args.pairs)?;
        let posts: Vec<Post> = run.read_records(&args.posts)?;
        let claims: Vec<Claim> = run.read_records(&args.claims)?;
        let resolved = resolve_pairs(&pairs, &posts, &claims)?;
        if self.dry_run {
            return Ok(done(run.finish(None, json!({"pairs": pairs.len()}))?));
        }
        let checkpoint = match &args.checkpoint {
            Some(path) => Some(Checkpoint::open(path, 1).map_err(|e| CliError::io(path, e))?),
            None => None,
        };
        let resumed = checkpoint.as_ref().map_or(0, |c| {
            resolved
                .iter()
                .filter(|p| c.completed(&p.pair_id, &config.model_id).is_some())
                .count()
        });
        if resumed > 0 {
            log::info!(
                "{resumed} of {} pairs already in the checkpoint",
                resolved.len()
            );
        }
        let gateway = self.gateway()?;
        let outcomes = classify_batch(&gateway, &resolved, &config, checkpoint.as_ref());
        let mut predictions = Vec::with_capacity(outcomes.len());
        let mut first_error = None;
        let mut failed = 0;
        for outcome in outcomes {
            match outcome {
                Ok(p) => predictions.push(p),
                Err(e) => {
                    failed += 1;
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(err) = first_error {
            let err: CliError = err.into();
            let message = format!(
                "{failed} of {} pairs failed; first error: {err}",
                resolved.len()
            );
            return Err(match err {
                CliError::Provider(_) => CliError::Provider(message),
                CliError::Validation(_) => CliError::Validation(message),
            });
        }
        run.write(&args.out, &encode_records(&predictions))?;
        let mut summary = json!({
            "pairs": predictions.len(),
            "labels": label_histogram(predictions.iter().map(|p| p.label)),
            "ambiguous": predictions.iter().filter(|p| p.ambiguous).count(),
            "resumed_from_checkpoint": resumed,
        });
        if let Some(dir) = &store_dir {
            let post_text: HashMap<&str, &str> = posts
                .iter()
                .map(|p| (p.id.as_str(), p.text.as_str()))
                .collect();
            let items = pairs
                .iter()
                .zip(&predictions)
                .map(|(pair, prediction)| ReviewItem {
                    pair: pair.clone(),
                    post_text: post_text[pair.post_id.as_str()].to_string(),
                    prediction: Some(prediction.clone()),
                })
                .collect();
            let store = FileStore::open(dir)?;
            store.ingest_claims(claims.clone())?;
            summary["queued_for_review"] = json!(store.add_review_items(items)?);
        }
        Ok(done(run.finish(Some(&args.out), summary)?))
    }

    fn aggregate(&self, args: AggregateArgs) -> Result<Outcome, CliError> {
        let mut run = self.run("aggregate", json!({}));
        let vote_sets: Vec<VoteSet> = run.read_records(&args.votes)?;
        let gold = aggregate_all(&vote_sets)?;
        let table = distribution_report(&gold);
        let markdown = table.to_markdown();
        run.write(&args.out, &encode_records(&gold))?;
        if let Some(report) = &args.report {
            run.write(report, &markdown)?;
        }
        let summary = json!({
            "pairs": gold.len(),
            "total": table.total,
            "rows": table.rows.iter().map(|r| json!({
                "label": r.label,
                "count": r.count,
                "percentage": r.rendered_percentage(),
            })).collect::<Vec<_>>(),
        });
        let mut summary = run.finish(Some(&args.out), summary)?;
        let stdout = if args.report.is_none() {
            summary["markdown"] = json!(markdown);
            Some(markdown)
        } else {
            None
        };
        Ok(Outcome { summary, stdout })
    }

    fn evaluate(&self, args: EvaluateArgs) -> Result<Outcome, CliError> {
        let policy = ScoringPolicy {
            ties: pick(
                args.tie_policy,
                self.settings.file.tie_policy,
                Default::default(),
            ),
            unparseable: pick(
                args.unparseable_policy,
                self.settings.file.unparseable_policy,
                Default::default(),
            ),
        };
        let mut train_sets = HashMap::new();
        for entry in &args.train_set_from {
            let (model, source) = entry
                .split_once('=')
                .filter(|(m, s)| !m.is_empty() && !s.is_empty())
                .ok_or_else(|| {
                    CliError::validation(format!(
                        "--train-set-from expects MODEL=SOURCE, got {entry:?}"
                    ))
                })?;
            train_sets.insert(model.to_string(), source.to_string());
        }
        let store_dir = self.settings.store_dir(args.store_dir.clone());
        let mut run = self.run(
            "evaluate",
            json!({"policy": policy, "train_set_from": train_sets, "store_dir": store_dir}),
        );
        let gold_text = run.read(&args.gold)?;
        let gold: Vec<GoldLabel> = factgpt_core::decode_records(&gold_text)
            .into_strict()
            .map_err(|e| CliError::decode(&args.gold, e))?;
        let mut by_model: Vec<(String, Vec<Prediction>)> = Vec::new();
        let mut pred_hashes = Vec::new();
        for path in &args.preds {
            let text = run.read(path)?;
            pred_hashes.push(sha256_hex(text.as_bytes()));
            let preds: Vec<Prediction> = factgpt_core::decode_records(&text)
                .into_strict()
                .map_err(|e| CliError::decode(path, e))?;
            for p in preds {
                match by_model.iter_mut().find(|(m, _)| *m == p.model_id) {
                    Some((_, group)) => group.push(p),
                    None => by_model.push((p.model_id.clone(), vec![p])),
                }
            }
        }
        if by_model.is_empty() {
            return Err(CliError::validation("no predictions to evaluate"));
        }
        let mut named = Vec::new();
        for (model, preds) in &by_model {
            named.push(NamedReport {
                model: model.clone(),
                train_set_from: train_sets.get(model).cloned(),
                report: evaluate(&gold, preds, policy)?,
            });
        }
        let markdown = render_report(&named);
        run.write(&args.out, &markdown)?;
        if let Some(json_out) = &args.json_out {
            run.write(
                json_out,
                &(serde_json::to_string_pretty(&named).expect("reports serialize") + "\n"),
            )?;
        }
        if let (Some(dir), false) = (&store_dir, self.dry_run) {
            let store = FileStore::open(dir)?;
            for n in &named {
                store.append_report(&ReportEntry {
                    report: n.report.clone(),
                    manifest: json!({
                        "model": n.model,
                        "train_set_from": n.train_set_from,
                        "models": by_model.iter().map(|(m, _)| m).collect::<Vec<_>>(),
                        "gold_sha256": sha256_hex(gold_text.as_bytes()),
                        "predictions_sha256": pred_hashes,
                        "policy": policy,
                    }),
                })?;
            }
        }
        let summary = json!({"gold": gold.len(), "reports": named});
        Ok(done(run.finish(Some(&args.out), summary)?))
    }

    fn report(&self, args: ReportArgs) -> Result<Outcome, CliError> {
        let store_dir = self.settings.store_dir(args.store_dir.clone());
        let mut run = self.run("report", json!({"store_dir": store_dir}));
        let mut named: Vec<NamedReport> = Vec::new();
        for path in &args.reports {
            let text = run.read(path)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            let parsed = match value {
                Value::Array(_) => serde_json::from_value::<Vec<NamedReport>>(value),
                other => serde_json::from_value::<NamedReport>(other).map(|r| vec![r]),
            };
            named.extend(
                parsed.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?,
            );
        }
        if args.reports.is_empty() {
            let dir = store_dir
                .ok_or_else(|| CliError::validation("pass --reports FILE or --store-dir DIR"))?;
            let entry = FileStore::open(&dir)?.latest_report().ok_or_else(|| {
                CliError::validation(format!("{}: no stored report", dir.display()))
            })?;
            named.push(NamedReport {
                model: entry.manifest["model"]
                    .as_str()
                    .unwrap_or("latest")
                    .to_string(),
                train_set_from: entry.manifest["train_set_from"]
                    .as_str()
                    .map(str::to_string),
                report: entry.report,
            });
        }
        let markdown = render_report(&named);
        if let Some(out) = &args.out {
            run.write(out, &markdown)?;
        }
        let mut summary = run.finish(args.out.as_deref(), json!({"models": named.len()}))?;
        let stdout = if args.out.is_none() {
            summary["markdown"] = json!(markdown);
            Some(markdown)
        } else {
            None
        };
        Ok(Outcome { summary, stdout })
    }

    fn serve(&self, args: ServeArgs) -> Result<Outcome, CliError> {
        let f = &self.settings.file;
        let defaults = ServiceConfig::default();
        let matcher = self.settings.matcher(
            args.matcher.alpha,
            args.matcher.top_k,
            args.matcher.min_combined_score,
            args.matcher.embedder_id.clone(),
        );
        matcher.validate()?;
        let config = ServiceConfig {
            bind: pick(args.bind, f.bind.clone(), defaults.bind),
            port: pick(args.port, f.port, defaults.port),
            store_dir: pick(args.store_dir, f.store_dir.clone(), defaults.store_dir),
            matcher,
            provider: self.settings.provider.clone(),
            classifier_model: self.settings.classifier_model(args.classifier_model),
            embedding_model: self.settings.embedding_model(args.matcher.embedding_model),
            static_dir: args.static_dir.or_else(|| f.static_dir.clone()),
            cors_origin: args.cors_origin.or_else(|| f.cors_origin.clone()),
            public_api_base: None,
        };
        let summary = json!({"command": "serve", "dry_run": self.dry_run, "config": config});
        if self.dry_run {
            return Ok(done(summary));
        }
        let runtime =
            tokio::runtime::Runtime::new().map_err(|e| CliError::validation(e.to_string()))?;
        runtime.block_on(factgpt_service::serve(config))?;
        Ok(done(summary))
    }
}
