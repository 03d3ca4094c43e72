//! HTTP front door.
//!
//! - `POST /search` `{"query", "task_id"?}` → ranked lines plus session id
//! - `GET /session/{id}` → termination, cost ledger and audit trail
//! - `POST /evaluate` `{"suite", "results", "k"?, "strict_k"?}` with both
//!   files inlined as JSON Lines text → suite report
//! - `GET /paper/{id}/{tier}` with tier `meta`, `abstract` or `chunks`

use crate::commands::{build_engine, open_corpus, search_lines, Failure};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use litsearch_core::config::Config;
use litsearch_core::corpus::{Corpus, ReadError, Tier, WriteLock};
use litsearch_core::evalbench::{evaluate_suite, parse_results, parse_suite, PrecisionMode, SuiteError, Taxonomy, DEFAULT_K};
use litsearch_core::orchestrator::{AuditEvent, CostLedger, SearchEngine, Termination};
use litsearch_core::rerank::RankedLine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

pub struct AppState {
    pub engine: SearchEngine,
    pub taxonomy: Taxonomy,
    sessions: Mutex<BTreeMap<String, SessionView>>,
}

impl AppState {
    pub fn new(engine: SearchEngine) -> Self {
        Self {
            engine,
            taxonomy: Taxonomy::reference(),
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    fn corpus(&self) -> &Corpus {
        self.engine.corpus()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub query: String,
    pub termination: Termination,
    pub ledger: CostLedger,
    pub audit: Vec<AuditEvent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBody {
    pub query: String,
    #[serde(default)]
    pub task_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SearchReply {
    pub session_id: String,
    pub termination: Termination,
    pub cost_usd: String,
    pub ranked: Vec<RankedLine>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateBody {
    pub suite: String,
    pub results: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub strict_k: bool,
}

struct ApiError(StatusCode, Failure);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!(self.1))).into_response()
    }
}

fn bad_request(f: Failure) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, f)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/session/{id}", get(session))
        .route("/evaluate", post(evaluate))
        .route("/paper/{id}/{tier}", get(paper))
        .with_state(state)
}

async fn search(State(state): State<Arc<AppState>>, Json(body): Json<SearchBody>) -> Result<Json<SearchReply>, ApiError> {
    if body.query.trim().is_empty() {
        return Err(bad_request(Failure::usage("query must not be empty")));
    }
    let worker = state.clone();
    let (lines, session) = tokio::task::spawn_blocking(move || search_lines(&worker.engine, &body.query, body.task_id.as_deref()))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, Failure::operational("internal", e.to_string())))?
        .map_err(|f| ApiError(StatusCode::UNPROCESSABLE_ENTITY, f))?;
    let termination = session.termination.clone().expect("run_search always terminates");
    let view = SessionView {
        session_id: session.intent.session_id.clone(),
        query: session.intent.query.clone(),
        termination: termination.clone(),
        ledger: session.ledger.clone(),
        audit: session.audit.clone(),
    };
    state
        .sessions
        .lock()
        .expect("not poisoned")
        .insert(view.session_id.clone(), view);
    Ok(Json(SearchReply {
        session_id: session.intent.session_id,
        termination,
        cost_usd: session.ledger.total.to_string(),
        ranked: lines,
    }))
}

async fn session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    state
        .sessions
        .lock()
        .expect("not poisoned")
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, Failure::operational("unknown_session", format!("no session `{id}`"))))
}

async fn evaluate(State(state): State<Arc<AppState>>, Json(body): Json<EvaluateBody>) -> Result<Response, ApiError> {
    let k = body.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(bad_request(Failure::usage("k must be positive")));
    }
    let suite = parse_suite(body.suite.as_bytes(), Some(state.corpus()), &state.taxonomy).map_err(|e: SuiteError| bad_request(e.into()))?;
    let results = parse_results(body.results.as_bytes()).map_err(|e| bad_request(e.into()))?;
    let mode = if body.strict_k {
        PrecisionMode::StrictK
    } else {
        PrecisionMode::Returned
    };
    let report = evaluate_suite(&suite, &results, state.corpus(), &state.taxonomy, k, mode);
    Ok(Json(report).into_response())
}

async fn paper(State(state): State<Arc<AppState>>, UrlPath((id, tier)): UrlPath<(String, String)>) -> Result<Response, ApiError> {
    let tier: Tier = tier
        .parse()
        .map_err(|_| bad_request(Failure::usage(format!("unknown tier `{tier}`; use meta, abstract or chunks"))))?;
    match state.corpus().read_tier(&id, tier) {
        Ok(content) => Ok(Json(content).into_response()),
        Err(e @ ReadError::UnknownPaperId(_)) => Err(ApiError(StatusCode::NOT_FOUND, Failure::operational("unknown_paper", e.to_string()))),
        Err(e @ ReadError::TierEmpty { .. }) => Err(ApiError(StatusCode::NOT_FOUND, Failure::operational("tier_empty", e.to_string()))),
    }
}

/// Serve until interrupted. Holds the corpus serve lock for the whole run,
/// so ingest into the same directory is refused meanwhile.
pub fn run(config: Config, dir: &Path, bind: &str) -> Result<(), Failure> {
    let corpus = Arc::new(open_corpus(dir)?);
    let _lock = WriteLock::acquire_serve(dir)?;
    let engine = build_engine(&config, corpus)?;
    let state = Arc::new(AppState::new(engine));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::operational("io", e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::operational("io", format!("bind {bind}: {e}")))?;
        log::info!("listening on {bind}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::operational("io", e.to_string()))
    })
}
