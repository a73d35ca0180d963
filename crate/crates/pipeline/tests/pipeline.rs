use std::sync::Arc;
use std::time::Duration;

use factgpt_core::finetune::validate_finetune_jsonl;
use factgpt_core::{
    decode_records, Claim, EntailmentLabel, Execution, Prediction, SyntheticExample,
};
use factgpt_gateway::mock::MockProvider;
use factgpt_gateway::scripted::{ScriptedReply, ScriptedTransport};
use factgpt_gateway::{Gateway, GenerationConfig, JobStatus, ProviderProfile, RetryPolicy};
use factgpt_pipeline::synthgen::{label_counts, Stage};
use factgpt_pipeline::{
    classify_batch, generate_balanced_set, run_finetune_pipeline, split_train_validation,
    Checkpoint, ClassifyConfig, GenerationOptions, PipelineOptions, ResolvedPair, SplitConfig,
};

fn claims(n: usize) -> Vec<Claim> {
    (0..n)
        .map(|i| Claim {
            id: format!("claim-{i:02}"),
            text: format!("Claim number {i} says vaccines contain item {i}."),
            source: None,
            debunked_on: None,
        })
        .collect()
}

fn pairs(n: usize) -> Vec<ResolvedPair> {
    (0..n)
        .map(|i| ResolvedPair {
            pair_id: format!("p{i}::c{i}"),
            tweet_text: format!("tweet number {i}"),
            claim_text: format!("claim number {i}"),
        })
        .collect()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(2),
    }
}

fn scripted(inner_failures: Option<usize>) -> (Arc<ScriptedTransport>, Gateway) {
    let mut transport = ScriptedTransport::wrapping(Arc::new(MockProvider::new()));
    if let Some(n) = inner_failures {
        transport = transport.fail_after(n);
    }
    let transport = Arc::new(transport);
    let gw = Gateway::new(ProviderProfile::mock(), transport.clone()).with_retry(fast_retry());
    (transport, gw)
}

fn no_wait_options() -> PipelineOptions {
    PipelineOptions {
        wait: Some((Duration::ZERO, 10)),
        ..PipelineOptions::default()
    }
}

#[test]
fn five_claims_make_a_balanced_split_and_a_finished_job() {
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::mock();
    let outcome = run_finetune_pipeline(
        &gw,
        &claims(5),
        &GenerationConfig::for_generation("gpt-4"),
        "gpt-3.5-turbo",
        dir.path(),
        &no_wait_options(),
    )
    .unwrap();
    assert_eq!(outcome.manifest.counts.total, 15);
    assert_eq!(outcome.manifest.counts.train, 12);
    assert_eq!(outcome.manifest.counts.validation, 3);
    assert!(outcome.manifest.counts.per_label.values().all(|&c| c == 5));
    assert_eq!(outcome.job.status, JobStatus::Succeeded);
    assert_eq!(outcome.job.epochs, 3);
    assert_eq!(
        outcome.executed,
        [Stage::Generate, Stage::Split, Stage::Export, Stage::Submit]
    );

    let train: Vec<SyntheticExample> =
        decode_records(&std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap())
            .into_strict()
            .unwrap();
    let counts = label_counts(&train);
    assert!(counts.values().all(|&c| c == 4), "{counts:?}");
    let ft = std::fs::read_to_string(dir.path().join("finetune_train.jsonl")).unwrap();
    assert_eq!(validate_finetune_jsonl(&ft).unwrap().len(), 12);
    let ft_val = std::fs::read_to_string(dir.path().join("finetune_validation.jsonl")).unwrap();
    assert_eq!(validate_finetune_jsonl(&ft_val).unwrap().len(), 3);
    for name in [
        "synthetic.jsonl",
        "validation.jsonl",
        "job.json",
        "manifest.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    for key in [
        "generator_model",
        "base_model",
        "seed",
        "train_fraction",
        "counts",
        "artifact_paths",
        "created_at",
    ] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
}

#[test]
fn rerun_skips_finished_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenerationConfig::for_generation("gpt-4");
    run_finetune_pipeline(
        &Gateway::mock(),
        &claims(3),
        &cfg,
        "base",
        dir.path(),
        &no_wait_options(),
    )
    .unwrap();
    let synthetic = std::fs::read(dir.path().join("synthetic.jsonl")).unwrap();

    let (transport, gw) = scripted(None);
    let again = run_finetune_pipeline(
        &gw,
        &claims(3),
        &cfg,
        "base",
        dir.path(),
        &no_wait_options(),
    )
    .unwrap();
    assert!(again.executed.is_empty());
    assert_eq!(
        again.skipped,
        [Stage::Generate, Stage::Split, Stage::Export, Stage::Submit]
    );
    assert_eq!(transport.request_count(), 0);
    assert_eq!(
        std::fs::read(dir.path().join("synthetic.jsonl")).unwrap(),
        synthetic
    );
}

#[test]
fn generation_is_seed_stable_and_execution_independent() {
    let cfg = GenerationConfig::for_generation("gpt-4");
    let seq = GenerationOptions {
        execution: Execution::Sequential,
        ..GenerationOptions::default()
    };
    let a = generate_balanced_set(&Gateway::mock(), &claims(7), &cfg, &seq).unwrap();
    let b = generate_balanced_set(
        &Gateway::mock(),
        &claims(7),
        &cfg,
        &GenerationOptions::default(),
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.is_balanced());
    assert_eq!(a.examples.len(), 21);
    let split = SplitConfig {
        train_fraction: 0.8,
        seed: 11,
    };
    assert_eq!(
        split_train_validation(&a.examples, &split).unwrap(),
        split_train_validation(&b.examples, &split).unwrap()
    );
}

#[test]
fn failing_cells_are_reported_not_fatal() {
    // Every attempt at the first cell hits a 400, which is not retried.
    let transport = Arc::new(
        ScriptedTransport::wrapping(Arc::new(MockProvider::new()))
            .with_script([ScriptedReply::status(400), ScriptedReply::status(400)]),
    );
    let gw = Gateway::new(ProviderProfile::mock(), transport).with_retry(fast_retry());
    let options = GenerationOptions {
        execution: Execution::Sequential,
        ..GenerationOptions::default()
    };
    let out = generate_balanced_set(
        &gw,
        &claims(2),
        &GenerationConfig::for_generation("g"),
        &options,
    )
    .unwrap();
    assert_eq!(out.examples.len(), 5);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].claim_id, "claim-00");
    assert_eq!(out.failures[0].label, EntailmentLabel::Entailment);
    assert!(!out.is_balanced());
}

#[test]
fn batch_keeps_input_order() {
    let gw = Gateway::mock();
    let input = pairs(10);
    let mut config = ClassifyConfig::new("clf");
    config.parallelism = 4;
    let out = classify_batch(&gw, &input, &config, None);
    let ids: Vec<_> = out
        .iter()
        .map(|r| r.as_ref().unwrap().pair_id.clone())
        .collect();
    let expected: Vec<_> = input.iter().map(|p| p.pair_id.clone()).collect();
    assert_eq!(ids, expected);
    config.parallelism = 1;
    let seq: Vec<_> = classify_batch(&gw, &input, &config, None)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    assert_eq!(seq, out.into_iter().map(Result::unwrap).collect::<Vec<_>>());
}

#[test]
fn interrupted_batch_resumes_without_repeating_work() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.jsonl");
    let input = pairs(10);
    let config = ClassifyConfig::new("clf");

    let (_, broken) = scripted(Some(5));
    let checkpoint = Checkpoint::open(&path, 1).unwrap();
    let first = classify_batch(&broken, &input, &config, Some(&checkpoint));
    assert_eq!(first.iter().filter(|r| r.is_ok()).count(), 5);
    drop(checkpoint);

    let (transport, healthy) = scripted(None);
    let checkpoint = Checkpoint::open(&path, 1).unwrap();
    assert_eq!(checkpoint.len(), 5);
    let second = classify_batch(&healthy, &input, &config, Some(&checkpoint));
    assert_eq!(transport.request_count(), 5);
    let resumed: Vec<Prediction> = second.into_iter().map(Result::unwrap).collect();
    let fresh: Vec<Prediction> = classify_batch(&Gateway::mock(), &input, &config, None)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    assert_eq!(resumed, fresh);
}

#[test]
fn temperatures_follow_task_and_provider_floor() {
    let temperature_of = |gw_profile: ProviderProfile, run: &dyn Fn(&Gateway)| {
        let transport = Arc::new(ScriptedTransport::wrapping(Arc::new(MockProvider::new())));
        let gw = Gateway::new(gw_profile, transport.clone());
        run(&gw);
        transport
            .requests()
            .iter()
            .map(|r| r.json().unwrap()["temperature"].as_f64().unwrap())
            .collect::<Vec<_>>()
    };
    let generate = |gw: &Gateway| {
        let options = GenerationOptions::default();
        generate_balanced_set(
            gw,
            &claims(1),
            &GenerationConfig::for_generation("g"),
            &options,
        )
        .unwrap();
    };
    let classify = |gw: &Gateway| {
        classify_batch(gw, &pairs(2), &ClassifyConfig::new("c"), None);
    };
    assert_eq!(temperature_of(ProviderProfile::mock(), &generate), [1.0; 3]);
    assert_eq!(temperature_of(ProviderProfile::mock(), &classify), [0.0; 2]);
    let floored = ProviderProfile::new("floored", "http://unused", 0.01);
    assert_eq!(temperature_of(floored.clone(), &classify), [0.01; 2]);
    assert_eq!(temperature_of(floored, &generate), [1.0; 3]);
}
