//! HTTP facade over the matcher, classifier, review queue and stored
//! evaluation reports. Everything lives under `/v1`; errors use the
//! `{code, message, detail}` envelope.

pub mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use factgpt_core::matcher::{EmbedderRegistry, MatchError, MatcherConfig};
use factgpt_core::promptkit::label_consequence;
use factgpt_core::EntailmentLabel;
use factgpt_gateway::{Gateway, GatewayError, ProviderSettings, RemoteEmbedder};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use store::{FileStore, Storage, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub store_dir: PathBuf,
    pub matcher: MatcherConfig,
    pub provider: ProviderSettings,
    pub classifier_model: String,
    pub embedding_model: String,
    /// Built review UI assets, served for every non-API path.
    pub static_dir: Option<PathBuf>,
    /// `None` allows any origin.
    pub cors_origin: Option<String>,
    /// API base handed to the review UI; defaults to `/v1`.
    pub public_api_base: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            store_dir: PathBuf::from("factgpt-store"),
            matcher: MatcherConfig::default(),
            provider: ProviderSettings::default(),
            classifier_model: "gpt-4".into(),
            embedding_model: "text-embedding-ada-002".into(),
            static_dir: None,
            cors_origin: None,
            public_api_base: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Matcher(#[from] MatchError),
    #[error("invalid CORS origin {0:?}")]
    CorsOrigin(String),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelDefinition {
    pub label: EntailmentLabel,
    pub text: String,
    pub color: &'static str,
}

/// Served at `/v1/ui-config` so the review UI needs no build-time settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiConfig {
    pub api_base: String,
    pub provider: String,
    pub classifier_model: String,
    pub page_size: usize,
    pub legend_heading: &'static str,
    pub labels: Vec<LabelDefinition>,
    pub version: &'static str,
}

pub const LABEL_COLORS: [(EntailmentLabel, &str); 3] = [
    (EntailmentLabel::Entailment, "#2e7d32"),
    (EntailmentLabel::Neutral, "#757575"),
    (EntailmentLabel::Contradiction, "#c62828"),
];

impl UiConfig {
    pub fn from_config(config: &ServiceConfig) -> Self {
        Self {
            api_base: config
                .public_api_base
                .clone()
                .unwrap_or_else(|| "/v1".into()),
            provider: config.provider.provider.clone(),
            classifier_model: config.classifier_model.clone(),
            page_size: 10,
            legend_heading: "If TWEET is true:",
            labels: LABEL_COLORS
                .iter()
                .map(|&(label, color)| LabelDefinition {
                    label,
                    text: format!("({}) {}", label.as_str(), label_consequence(label)),
                    color,
                })
                .collect(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

pub struct AppState {
    pub store: Arc<dyn Storage>,
    pub gateway: Arc<Gateway>,
    pub registry: EmbedderRegistry,
    pub matcher: MatcherConfig,
    pub classifier_model: String,
    pub ui: UiConfig,
}

impl AppState {
    pub fn new(
        config: &ServiceConfig,
        store: Arc<dyn Storage>,
        gateway: Arc<Gateway>,
    ) -> Result<Self, ServiceError> {
        config.matcher.validate()?;
        let mut registry = EmbedderRegistry::default();
        registry.register(Arc::new(RemoteEmbedder::new(
            gateway.clone(),
            config.embedding_model.clone(),
        )));
        registry.get(&config.matcher.embedder_id)?;
        Ok(Self {
            store,
            gateway,
            registry,
            matcher: config.matcher.clone(),
            classifier_model: config.classifier_model.clone(),
            ui: UiConfig::from_config(config),
        })
    }

    /// Opens the store directory and connects to the configured provider.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let store = Arc::new(FileStore::open(&config.store_dir)?);
        let gateway = Arc::new(Gateway::from_settings(&config.provider)?);
        Self::new(config, store, gateway)
    }
}

pub fn router(state: AppState, config: &ServiceConfig) -> Result<Router, ServiceError> {
    let origin = match &config.cors_origin {
        None => AllowOrigin::from(Any),
        Some(origin) => AllowOrigin::exact(
            HeaderValue::from_str(origin).map_err(|_| ServiceError::CorsOrigin(origin.clone()))?,
        ),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let api = Router::new()
        .route("/v1/health", get(api::health))
        .route("/v1/ui-config", get(api::ui_config))
        .route("/v1/claims", post(api::ingest_claims).get(api::list_claims))
        .route("/v1/match", post(api::match_post))
        .route("/v1/review/queue", get(api::review_queue))
        .route("/v1/review/items", post(api::add_review_items))
        .route("/v1/review/export", get(api::export_gold))
        .route(
            "/v1/review/{pair_id}",
            get(api::get_review_item).post(api::submit_review),
        )
        .route("/v1/reports/latest", get(api::latest_report))
        .with_state(Arc::new(state));
    let app = match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api::not_found),
    };
    Ok(app.layer(cors))
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let app = router(AppState::from_config(&config)?, &config)?;
    let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port)).await?;
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("listening on http://{addr}/v1");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
