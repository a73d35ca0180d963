use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use factgpt_core::evalkit::{evaluate, ScoringPolicy};
use factgpt_core::{EntailmentLabel, GoldLabel, PairCandidate, Prediction};
use factgpt_gateway::scripted::ScriptedTransport;
use factgpt_gateway::{Gateway, ProviderProfile, RetryPolicy};
use factgpt_service::store::{ReportEntry, ReviewItem};
use factgpt_service::{router, AppState, FileStore, ServiceConfig, Storage};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const FIG4_TWEET: &str =
    "omg my dad got vaccinated yesterday and I just connected him to bluetooth";
const FIG4_CLAIM: &str = "Vaccininated people emit Bluetooth signals.";

struct Harness {
    app: Router,
    store: Arc<FileStore>,
    dir: TempDir,
}

fn harness_with(gateway: Gateway) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        store_dir: dir.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    let store = Arc::new(FileStore::open(dir.path()).unwrap());
    let state = AppState::new(&config, store.clone(), Arc::new(gateway)).unwrap();
    Harness {
        app: router(state, &config).unwrap(),
        store,
        dir,
    }
}

fn harness() -> Harness {
    harness_with(Gateway::mock())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX)
        .await
        .unwrap();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn assert_envelope(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].is_string());
    assert!(body.get("detail").is_some());
}

fn sample_claims() -> Value {
    json!([
        {"id": "c-bt", "text": FIG4_CLAIM, "source": "factcheck.example", "debunked_on": "2021-06-01"},
        {"id": "c-5g", "text": "5G towers spread the coronavirus."},
        {"id": "c-mag", "text": "Vaccines make your arm magnetic."},
        {"id": "c-dna", "text": "mRNA vaccines alter human DNA."},
    ])
}

fn queued(i: usize, label: Option<EntailmentLabel>) -> ReviewItem {
    let pair_id = PairCandidate::make_id(&format!("post-{i:02}"), "c-5g");
    ReviewItem {
        pair: PairCandidate {
            pair_id: pair_id.clone(),
            post_id: format!("post-{i:02}"),
            claim_id: "c-5g".into(),
            token_score: 0.5,
            semantic_score: 0.5,
            combined_score: (i % 4) as f64 / 4.0,
        },
        post_text: format!("post number {i}"),
        prediction: Some(Prediction {
            pair_id,
            model_id: "m".into(),
            label,
            raw_response: label.map_or("no idea".into(), |l| l.as_str().to_string()),
            ambiguous: false,
        }),
    }
}

async fn seeded(n: usize) -> Harness {
    let h = harness();
    call(&h.app, "POST", "/v1/claims", Some(sample_claims())).await;
    let items = (0..n)
        .map(|i| queued(i, Some(EntailmentLabel::ALL[i % 3])))
        .collect();
    assert_eq!(h.store.add_review_items(items).unwrap(), n);
    h
}

#[tokio::test]
async fn claim_ingest_is_idempotent_and_validated() {
    let h = harness();
    let two = json!([{"id": "a", "text": "First claim."}, {"text": "Second claim without an id."}]);
    let (status, body) = call(&h.app, "POST", "/v1/claims", Some(two.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"ingested": 2, "skipped_duplicates": 0}));
    let (_, body) = call(&h.app, "POST", "/v1/claims", Some(two)).await;
    assert_eq!(body, json!({"ingested": 0, "skipped_duplicates": 2}));

    // Same text under a new id is still a duplicate.
    let (_, body) = call(
        &h.app,
        "POST",
        "/v1/claims",
        Some(json!([{"id": "z", "text": "  first   CLAIM. "}])),
    )
    .await;
    assert_eq!(body, json!({"ingested": 0, "skipped_duplicates": 1}));

    let bad = json!([{"id": "ok", "text": "fine"}, {"id": "bad", "text": "   "}]);
    let (status, body) = call(&h.app, "POST", "/v1/claims", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "schema_violation");
    assert!(
        body["message"].as_str().unwrap().contains("index 1"),
        "{body}"
    );
    assert_eq!(body["detail"]["errors"][0]["index"], 1);
    assert_eq!(h.store.claims().len(), 2);

    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/claims",
        Some(json!({"not": "an array"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "invalid_json");
}

#[tokio::test]
async fn match_requires_claims() {
    let h = harness();
    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": "anything"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_envelope(&body, "empty_claim_store");
}

#[tokio::test]
async fn match_ranks_and_optionally_classifies() {
    let h = harness();
    call(&h.app, "POST", "/v1/claims", Some(sample_claims())).await;

    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": FIG4_TWEET, "top_k": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let candidates = body["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0]["claim"]["id"], "c-bt");
    assert!(candidates[0].get("label").is_none());

    let request = json!({"post_text": FIG4_TWEET, "top_k": 3, "classify": true});
    let (status, first) = call(&h.app, "POST", "/v1/match", Some(request.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&h.app, "POST", "/v1/match", Some(request)).await;
    assert_eq!(first, second);
    let candidates = first["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 3);
    for c in candidates {
        let label = c["label"].as_str().unwrap();
        assert!(label.parse::<EntailmentLabel>().is_ok());
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| c["combined_score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": "  "})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "bad_request");
    let (status, _) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": "x", "top_k": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn provider_failure_still_returns_candidates() {
    let down = Gateway::new(
        ProviderProfile::mock(),
        Arc::new(ScriptedTransport::new([])),
    )
    .with_retry(RetryPolicy {
        max_retries: 1,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(1),
    });
    let h = harness_with(down);
    call(&h.app, "POST", "/v1/claims", Some(sample_claims())).await;
    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": FIG4_TWEET, "top_k": 2, "classify": true})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_envelope(&body, "provider_error");
    let candidates = body["detail"]["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 2);
    assert!(candidates
        .iter()
        .all(|c| c["label"].is_null() && c.get("label").is_some()));
    assert_eq!(candidates[0]["claim"]["id"], "c-bt");
}

#[tokio::test]
async fn queue_pages_in_score_order() {
    let h = seeded(12).await;
    let (status, body) = call(
        &h.app,
        "GET",
        "/v1/review/queue?status=pending&limit=100",
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 12);
    let items = body["items"].as_array().unwrap();
    assert!(items.iter().all(|i| i["status"] == "pending"));
    let keys: Vec<(f64, String)> = items
        .iter()
        .map(|i| {
            (
                i["scores"]["combined_score"].as_f64().unwrap(),
                i["pair_id"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    for w in keys.windows(2) {
        assert!(
            w[0].0 > w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1),
            "{w:?}"
        );
    }
    assert_eq!(
        items[0]["claim"]["text"],
        "5G towers spread the coronavirus."
    );

    let mut seen = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let uri = match &cursor {
            Some(c) => format!("/v1/review/queue?limit=5&cursor={c}"),
            None => "/v1/review/queue?limit=5".to_string(),
        };
        let (status, page) = call(&h.app, "GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK);
        let page_items = page["items"].as_array().unwrap();
        assert!(page_items.len() <= 5);
        seen.extend(page_items.iter().map(|i| i["pair_id"].clone()));
        match page["next_cursor"].as_str() {
            Some(next) => cursor = Some(next.to_string()),
            None => break,
        }
    }
    let all: Vec<Value> = items.iter().map(|i| i["pair_id"].clone()).collect();
    assert_eq!(seen, all);

    for bad in [
        "limit=0",
        "limit=abc",
        "limit=100000",
        "cursor=-1",
        "cursor=99",
        "status=done",
        "page=2",
    ] {
        let (status, body) = call(&h.app, "GET", &format!("/v1/review/queue?{bad}"), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_envelope(&body, "bad_request");
    }
}

#[tokio::test]
async fn adjudication_rules_and_gold_export() {
    let h = seeded(4).await;
    let items = h.store.review_items();
    let (a, b) = (items[0].pair.pair_id.clone(), items[1].pair.pair_id.clone());
    let model_label = items[0].prediction.as_ref().unwrap().label.unwrap();

    let (status, body) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{a}"),
        Some(json!({"decision": "confirm", "reviewer": "r1"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "confirmed");
    assert_eq!(body["gold_label"], model_label.as_str());

    let (_, pending) = call(&h.app, "GET", "/v1/review/queue", None).await;
    assert!(pending["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|i| i["pair_id"] != a.as_str()));
    let (_, confirmed) = call(&h.app, "GET", "/v1/review/queue?status=confirmed", None).await;
    assert_eq!(confirmed["total"], 1);

    let (status, body) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{a}"),
        Some(json!({"decision": "confirm", "reviewer": "r2"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_envelope(&body, "already_adjudicated");
    assert_eq!(body["detail"]["status"], "confirmed");

    let (status, body) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{b}"),
        Some(json!({"decision": "override", "reviewer": "r1"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "bad_request");

    let override_neutral = json!({"decision": "override", "label": "NEUTRAL", "reviewer": "r1"});
    let (status, body) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{b}"),
        Some(override_neutral),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "overridden");
    assert_eq!(body["gold_label"], "NEUTRAL");

    let forced = json!({"decision": "override", "label": "CONTRADICTION", "reviewer": "r2"});
    let (status, body) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{a}?force=true"),
        Some(forced),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["gold_label"], "CONTRADICTION");
    assert_eq!(body["history"].as_array().unwrap().len(), 2);

    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/review/nope::nope",
        Some(json!({"decision": "confirm", "reviewer": "r"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
    let (status, _) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{b}"),
        Some(json!({"decision": "maybe", "reviewer": "r"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, export) = call(&h.app, "GET", "/v1/review/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let gold: Vec<GoldLabel> = factgpt_core::decode_records(export.as_str().unwrap())
        .into_strict()
        .unwrap();
    let mut expected = vec![
        GoldLabel::decided(a.clone(), EntailmentLabel::Contradiction),
        GoldLabel::decided(b.clone(), EntailmentLabel::Neutral),
    ];
    expected.sort_by(|x, y| x.pair_id.cmp(&y.pair_id));
    assert_eq!(gold, expected);

    // Everything survives a restart.
    let reopened = FileStore::open(h.dir.path()).unwrap();
    assert_eq!(reopened.gold_labels(), expected);
    assert_eq!(reopened.review_items().len(), 4);
}

#[tokio::test]
async fn unparseable_prediction_cannot_be_confirmed() {
    let h = harness();
    call(&h.app, "POST", "/v1/claims", Some(sample_claims())).await;
    h.store.add_review_items(vec![queued(0, None)]).unwrap();
    let id = h.store.review_items()[0].pair.pair_id.clone();
    let (status, _) = call(
        &h.app,
        "POST",
        &format!("/v1/review/{id}"),
        Some(json!({"decision": "confirm", "reviewer": "r"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_submissions_conflict_instead_of_overwriting() {
    let h = seeded(1).await;
    let id = h.store.review_items()[0].pair.pair_id.clone();
    let mut handles = Vec::new();
    for reviewer in 0..8 {
        let app = h.app.clone();
        let uri = format!("/v1/review/{id}");
        let body =
            json!({"decision": "override", "label": "NEUTRAL", "reviewer": format!("r{reviewer}")});
        handles.push(tokio::spawn(async move {
            call(&app, "POST", &uri, Some(body)).await.0
        }));
    }
    let mut statuses = Vec::new();
    for handle in handles {
        statuses.push(handle.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1);
    assert_eq!(
        statuses
            .iter()
            .filter(|s| **s == StatusCode::CONFLICT)
            .count(),
        7
    );
    assert_eq!(h.store.adjudications().len(), 1);
}

#[tokio::test]
async fn send_to_queue_from_match() {
    let h = harness();
    call(&h.app, "POST", "/v1/claims", Some(sample_claims())).await;
    let (_, matched) = call(
        &h.app,
        "POST",
        "/v1/match",
        Some(json!({"post_text": FIG4_TWEET, "classify": true})),
    )
    .await;
    let top = &matched["candidates"][0];
    let item = json!({
        "post_text": FIG4_TWEET,
        "claim_id": top["claim"]["id"],
        "token_score": top["token_score"],
        "semantic_score": top["semantic_score"],
        "combined_score": top["combined_score"],
        "label": top["label"],
    });
    let (status, body) = call(&h.app, "POST", "/v1/review/items", Some(item.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["added"], 1);
    assert_eq!(body["pair_ids"][0], top["pair_id"]);
    let (_, body) = call(&h.app, "POST", "/v1/review/items", Some(json!([item]))).await;
    assert_eq!(body["added"], 0);
    assert_eq!(body["already_queued"], 1);

    let (_, queue) = call(&h.app, "GET", "/v1/review/queue", None).await;
    assert_eq!(queue["items"][0]["prediction"]["label"], top["label"]);

    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/review/items",
        Some(json!({"post_text": "x", "claim_id": "missing", "token_score": 0.0, "semantic_score": 0.0, "combined_score": 0.0})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "schema_violation");
}

#[tokio::test]
async fn latest_report_round_trip() {
    let h = harness();
    let (status, body) = call(&h.app, "GET", "/v1/reports/latest", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "no_report");

    let gold = vec![
        GoldLabel::decided("p1", EntailmentLabel::Entailment),
        GoldLabel::decided("p2", EntailmentLabel::Neutral),
    ];
    let preds: Vec<Prediction> = gold
        .iter()
        .map(|g| Prediction {
            pair_id: g.pair_id.clone(),
            model_id: "m".into(),
            label: Some(EntailmentLabel::Entailment),
            raw_response: "ENTAILMENT".into(),
            ambiguous: false,
        })
        .collect();
    let report = evaluate(&gold, &preds, ScoringPolicy::default()).unwrap();
    for n in 0..2 {
        let entry = ReportEntry {
            report: report.clone(),
            manifest: json!({"models": ["m"], "run": n}),
        };
        h.store.append_report(&entry).unwrap();
    }
    let (status, body) = call(&h.app, "GET", "/v1/reports/latest", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["manifest"]["run"], 1);
    let expected = serde_json::to_value(&report).unwrap();
    let keys = |v: &Value| {
        v.as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(keys(&body["report"]), keys(&expected));
    assert_eq!(body["report"], expected);
}

#[tokio::test]
async fn ui_config_and_unknown_routes() {
    let h = harness();
    let (status, body) = call(&h.app, "GET", "/v1/ui-config", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["api_base"], "/v1");
    assert_eq!(body["legend_heading"], "If TWEET is true:");
    let texts: Vec<&str> = body["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["text"].as_str().unwrap())
        .collect();
    assert_eq!(
        texts,
        [
            "(ENTAILMENT) then CLAIM is also true.",
            "(NEUTRAL) CLAIM cannot be said to be true or false.",
            "(CONTRADICTION) then CLAIM is false.",
        ]
    );
    let (status, body) = call(&h.app, "GET", "/v1/nothing-here", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
}
