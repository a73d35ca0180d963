//! Request handlers for the /v1 API.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::NaiveDate;
use factgpt_core::domain::{content_id, encode_records, Record};
use factgpt_core::matcher::{MatchError, Matcher, ScoredClaim};
use factgpt_core::{Claim, EntailmentLabel, PairCandidate, Prediction};
use factgpt_pipeline::{classify_batch, ClassifyConfig, ResolvedPair};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{parse_body, ApiError};
use crate::store::{Adjudication, AdjudicationRequest, Decision, ReviewItem, ReviewStatus};
use crate::AppState;

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 500;

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

pub async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub async fn ui_config(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::to_value(&state.ui).expect("ui config serializes"))
}

#[derive(Debug, Deserialize)]
struct IncomingClaim {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    debunked_on: Option<NaiveDate>,
}

/// A claim as submitted for ingestion; a missing id is derived from the text.
pub fn claim_from_value(value: Value) -> Result<Claim, String> {
    let incoming: IncomingClaim = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let claim = Claim {
        id: incoming
            .id
            .unwrap_or_else(|| content_id("claim", &incoming.text)),
        text: incoming.text,
        source: incoming.source,
        debunked_on: incoming.debunked_on,
    };
    claim.validate().map(|_| claim)
}

/// Validates every element before touching the store, so a bad body ingests nothing.
pub fn parse_claims(body: &[u8]) -> ApiResult<Vec<Claim>> {
    let items: Vec<Value> = parse_body(body)?;
    let mut claims = Vec::with_capacity(items.len());
    let mut errors = Vec::new();
    for (index, item) in items.into_iter().enumerate() {
        match claim_from_value(item) {
            Ok(claim) => claims.push(claim),
            Err(error) => errors.push(json!({"index": index, "error": error})),
        }
    }
    if let Some(first) = errors.first() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "schema_violation",
            format!(
                "claim at index {}: {}",
                first["index"],
                first["error"].as_str().unwrap_or_default()
            ),
        )
        .with_detail(json!({"errors": errors})));
    }
    Ok(claims)
}

pub async fn ingest_claims(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let claims = parse_claims(&body)?;
    let store = state.store.clone();
    let summary = blocking(move || store.ingest_claims(claims)).await??;
    Ok(Json(
        serde_json::to_value(summary).expect("summary serializes"),
    ))
}

pub async fn list_claims(State(state): State<Arc<AppState>>) -> Json<Vec<Claim>> {
    Json(state.store.claims())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchRequest {
    post_text: String,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    classify: bool,
    #[serde(default)]
    model_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchCandidate {
    pub pair_id: String,
    pub claim: Claim,
    pub token_score: f64,
    pub semantic_score: f64,
    pub combined_score: f64,
    /// Absent unless classification was requested; null when it failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Option<EntailmentLabel>>,
}

fn match_error(err: MatchError) -> ApiError {
    match err {
        MatchError::EmptyClaimStore => ApiError::new(
            StatusCode::CONFLICT,
            "empty_claim_store",
            "the claim store is empty",
        ),
        MatchError::Provider(msg) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", msg),
        MatchError::InvalidConfig(msg) => ApiError::bad_request(msg),
        other => ApiError::internal(other.to_string()),
    }
}

pub async fn match_post(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    match match_inner(state, body).await {
        Ok(value) => Json(value).into_response(),
        Err(err) => err.into_response(),
    }
}

async fn match_inner(state: Arc<AppState>, body: Bytes) -> ApiResult<Value> {
    let request: MatchRequest = parse_body(&body)?;
    if request.post_text.trim().is_empty() {
        return Err(ApiError::bad_request("post_text must not be empty"));
    }
    let claims = state.store.claims();
    if claims.is_empty() {
        return Err(match_error(MatchError::EmptyClaimStore));
    }
    let mut config = state.matcher.clone();
    if let Some(top_k) = request.top_k {
        config.top_k = top_k;
    }
    let model_id = request
        .model_id
        .clone()
        .unwrap_or_else(|| state.classifier_model.clone());
    blocking(move || {
        let matcher = Matcher::new(config, &state.registry).map_err(match_error)?;
        let ranked = matcher
            .rank(&request.post_text, &claims)
            .map_err(match_error)?;
        let post_id = content_id("post", &request.post_text);
        let by_id: HashMap<&str, &Claim> = claims.iter().map(|c| (c.id.as_str(), c)).collect();
        let mut candidates: Vec<MatchCandidate> = ranked
            .into_iter()
            .map(
                |ScoredClaim {
                     claim_id,
                     token_score,
                     semantic_score,
                     combined_score,
                 }| MatchCandidate {
                    pair_id: PairCandidate::make_id(&post_id, &claim_id),
                    claim: (*by_id[claim_id.as_str()]).clone(),
                    token_score,
                    semantic_score,
                    combined_score,
                    label: None,
                },
            )
            .collect();
        if request.classify {
            let pairs: Vec<ResolvedPair> = candidates
                .iter()
                .map(|c| ResolvedPair {
                    pair_id: c.pair_id.clone(),
                    tweet_text: request.post_text.clone(),
                    claim_text: c.claim.text.clone(),
                })
                .collect();
            let classify = ClassifyConfig {
                parallelism: pairs.len().max(1),
                ..ClassifyConfig::new(model_id.clone())
            };
            let outcomes = classify_batch(&state.gateway, &pairs, &classify, None);
            if let Some(err) = outcomes.iter().find_map(|o| o.as_ref().err()) {
                for candidate in &mut candidates {
                    candidate.label = Some(None);
                }
                return Err(ApiError::new(
                    StatusCode::BAD_GATEWAY,
                    "provider_error",
                    err.to_string(),
                )
                .with_detail(json!({"post_id": post_id, "candidates": candidates})));
            }
            for (candidate, outcome) in candidates.iter_mut().zip(outcomes) {
                candidate.label = Some(outcome.expect("checked above").label);
            }
        }
        let mut response = json!({"post_id": post_id, "candidates": candidates});
        if request.classify {
            response["model_id"] = json!(model_id);
        }
        Ok(response)
    })
    .await?
}

#[derive(Debug, Clone, Serialize)]
pub struct Scores {
    pub token_score: f64,
    pub semantic_score: f64,
    pub combined_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueItem {
    pub pair_id: String,
    pub pair: PairCandidate,
    pub post_text: String,
    pub claim: Option<Claim>,
    pub prediction: Option<Prediction>,
    pub scores: Scores,
    pub status: ReviewStatus,
    pub gold_label: Option<EntailmentLabel>,
    pub history: Vec<Adjudication>,
}

fn queue_item(
    item: ReviewItem,
    claims: &HashMap<String, Claim>,
    history: Vec<Adjudication>,
) -> QueueItem {
    let current = history.last();
    QueueItem {
        pair_id: item.pair.pair_id.clone(),
        scores: Scores {
            token_score: item.pair.token_score,
            semantic_score: item.pair.semantic_score,
            combined_score: item.pair.combined_score,
        },
        claim: claims.get(&item.pair.claim_id).cloned(),
        status: current.map_or(ReviewStatus::Pending, Adjudication::status),
        gold_label: current.map(|a| a.label),
        pair: item.pair,
        post_text: item.post_text,
        prediction: item.prediction,
        history,
    }
}

fn history_by_pair(state: &AppState) -> HashMap<String, Vec<Adjudication>> {
    let mut map: HashMap<String, Vec<Adjudication>> = HashMap::new();
    for a in state.store.adjudications() {
        map.entry(a.pair_id.clone()).or_default().push(a);
    }
    map
}

fn claims_by_id(state: &AppState) -> HashMap<String, Claim> {
    state
        .store
        .claims()
        .into_iter()
        .map(|c| (c.id.clone(), c))
        .collect()
}

fn view_one(state: &AppState, pair_id: &str) -> ApiResult<QueueItem> {
    let item = state.store.review_item(pair_id).ok_or_else(|| {
        ApiError::not_found(format!("unknown pair {pair_id:?}"))
            .with_detail(json!({"pair_id": pair_id}))
    })?;
    let history = history_by_pair(state).remove(pair_id).unwrap_or_default();
    Ok(queue_item(item, &claims_by_id(state), history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRequest {
    /// `None` lists every status.
    pub status: Option<ReviewStatus>,
    pub limit: usize,
    pub offset: usize,
}

pub fn parse_page_request(query: &BTreeMap<String, String>) -> ApiResult<PageRequest> {
    for key in query.keys() {
        if !["status", "limit", "cursor"].contains(&key.as_str()) {
            return Err(ApiError::bad_request(format!(
                "unknown query parameter {key:?}"
            )));
        }
    }
    let status = match query.get("status").map(String::as_str) {
        None => Some(ReviewStatus::Pending),
        Some("all") => None,
        Some(s) => Some(s.parse().map_err(ApiError::bad_request)?),
    };
    let limit = match query.get("limit") {
        None => DEFAULT_PAGE_SIZE,
        Some(raw) => match raw.parse::<usize>() {
            Ok(n) if (1..=MAX_PAGE_SIZE).contains(&n) => n,
            _ => {
                return Err(ApiError::bad_request(format!(
                    "limit must be an integer in 1..={MAX_PAGE_SIZE}, got {raw:?}"
                )))
            }
        },
    };
    let offset = match query.get("cursor") {
        None => 0,
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("malformed cursor {raw:?}")))?,
    };
    Ok(PageRequest {
        status,
        limit,
        offset,
    })
}

pub async fn review_queue(
    State(state): State<Arc<AppState>>,
    Query(query): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let page = parse_page_request(&query)?;
    let claims = claims_by_id(&state);
    let mut histories = history_by_pair(&state);
    let items: Vec<QueueItem> = state
        .store
        .review_items()
        .into_iter()
        .map(|item| {
            let history = histories.remove(&item.pair.pair_id).unwrap_or_default();
            queue_item(item, &claims, history)
        })
        .filter(|view| page.status.map_or(true, |s| s == view.status))
        .collect();
    let total = items.len();
    if page.offset > total {
        return Err(ApiError::bad_request(format!(
            "cursor {} is past the end ({total} items)",
            page.offset
        )));
    }
    let end = (page.offset + page.limit).min(total);
    let next_cursor = (end < total).then(|| end.to_string());
    let items = &items[page.offset..end];
    Ok(Json(
        json!({"items": items, "next_cursor": next_cursor, "total": total}),
    ))
}

pub async fn get_review_item(
    State(state): State<Arc<AppState>>,
    Path(pair_id): Path<String>,
) -> ApiResult<Json<QueueItem>> {
    Ok(Json(view_one(&state, &pair_id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewSubmission {
    decision: Decision,
    #[serde(default)]
    label: Option<EntailmentLabel>,
    reviewer: String,
    #[serde(default)]
    force: bool,
}

#[derive(Debug, Deserialize)]
pub struct ForceQuery {
    #[serde(default)]
    force: Option<bool>,
}

pub async fn submit_review(
    State(state): State<Arc<AppState>>,
    Path(pair_id): Path<String>,
    Query(query): Query<ForceQuery>,
    body: Bytes,
) -> ApiResult<Json<QueueItem>> {
    let submission: ReviewSubmission = parse_body(&body)?;
    let request = AdjudicationRequest {
        pair_id: pair_id.clone(),
        decision: submission.decision,
        label: submission.label,
        reviewer: submission.reviewer,
        force: submission.force || query.force.unwrap_or(false),
    };
    let store = state.store.clone();
    blocking(move || store.adjudicate(&request)).await??;
    Ok(Json(view_one(&state, &pair_id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewReviewItem {
    #[serde(default)]
    post_id: Option<String>,
    post_text: String,
    claim_id: String,
    token_score: f64,
    semantic_score: f64,
    combined_score: f64,
    #[serde(default)]
    prediction: Option<Prediction>,
    /// Shorthand for a prediction carrying only a label.
    #[serde(default)]
    label: Option<EntailmentLabel>,
    #[serde(default)]
    model_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<NewReviewItem>),
    One(Box<NewReviewItem>),
}

/// Queues pairs for review (the "send to queue" action). Re-sending a pair
/// that is already queued leaves it untouched.
pub async fn add_review_items(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let incoming = match parse_body::<OneOrMany>(&body)? {
        OneOrMany::Many(items) => items,
        OneOrMany::One(item) => vec![*item],
    };
    let claims = claims_by_id(&state);
    let mut items = Vec::with_capacity(incoming.len());
    for (index, new) in incoming.into_iter().enumerate() {
        let invalid = |msg: String| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "schema_violation",
                format!("item at index {index}: {msg}"),
            )
            .with_detail(json!({"index": index}))
        };
        if !claims.contains_key(&new.claim_id) {
            return Err(invalid(format!("unknown claim {:?}", new.claim_id)));
        }
        let post_id = new
            .post_id
            .unwrap_or_else(|| content_id("post", &new.post_text));
        let pair_id = PairCandidate::make_id(&post_id, &new.claim_id);
        let prediction = new.prediction.or_else(|| {
            new.label.map(|label| Prediction {
                pair_id: pair_id.clone(),
                model_id: new
                    .model_id
                    .clone()
                    .unwrap_or_else(|| state.classifier_model.clone()),
                label: Some(label),
                raw_response: label.as_str().to_string(),
                ambiguous: false,
            })
        });
        let item = ReviewItem {
            pair: PairCandidate {
                pair_id,
                post_id,
                claim_id: new.claim_id,
                token_score: new.token_score,
                semantic_score: new.semantic_score,
                combined_score: new.combined_score,
            },
            post_text: new.post_text,
            prediction,
        };
        item.validate().map_err(invalid)?;
        items.push(item);
    }
    let pair_ids: Vec<String> = items.iter().map(|i| i.pair.pair_id.clone()).collect();
    let store = state.store.clone();
    let added = blocking(move || store.add_review_items(items)).await??;
    Ok(Json(
        json!({"added": added, "already_queued": pair_ids.len() - added, "pair_ids": pair_ids}),
    ))
}

/// Adjudicated pairs as gold-label JSON-lines.
pub async fn export_gold(State(state): State<Arc<AppState>>) -> Response {
    let body = encode_records(&state.store.gold_labels());
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub async fn latest_report(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let entry = state.store.latest_report().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "no_report",
            "no evaluation report has been stored",
        )
    })?;
    Ok(Json(
        serde_json::to_value(entry).expect("report serializes"),
    ))
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}
