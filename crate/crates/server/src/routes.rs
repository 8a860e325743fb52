use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use casegraph_core::config::Capability;
use casegraph_core::engine::Engine;
use casegraph_core::ids::JobId;
use casegraph_core::layout::LayoutParams;
use casegraph_core::orchestration::IngestRequest;
use casegraph_core::provenance::{ProvenanceEntry, GENESIS_HASH};
use casegraph_core::schema::{Attributes, ConfidenceGrade, TypePath};
use casegraph_core::search::{OntologyEdit, SearchMode, SearchQuery, SearchScope};
use casegraph_core::store::{
    AliasCluster, Disposition, EdgeCandidate, EdgeRecord, GraphView, NodeCandidate, NodeRecord, Receipt, TimeRange,
    ViewFilter,
};
use casegraph_core::ItemId;
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::auth::{ApiSession, TokenTable};
use crate::error::ApiError;

pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

/// Shared by every handler. All engine access goes through one lock, so
/// mutations are applied one at a time.
#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Mutex<Engine>>,
    pub tokens: Arc<TokenTable>,
}

impl AppState {
    pub fn new(engine: Engine, tokens: TokenTable) -> Self {
        AppState {
            engine: Arc::new(Mutex::new(engine)),
            tokens: Arc::new(tokens),
        }
    }
}

impl FromRequestParts<AppState> for ApiSession {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        state.tokens.authenticate(&parts.headers)
    }
}

// Extractors whose rejections use the error body.

pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e: JsonRejection| ApiError::bad_request(e.body_text()))
    }
}

pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|e: QueryRejection| ApiError::bad_request(e.body_text()))
    }
}

pub struct ApiPath<T>(pub T);

impl<T: DeserializeOwned + Send, S: Send + Sync> FromRequestParts<S> for ApiPath<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Path::<T>::from_request_parts(parts, state)
            .await
            .map(|p| ApiPath(p.0))
            .map_err(|e: PathRejection| ApiError::bad_request(e.body_text()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/ingest", post(ingest))
        .route("/jobs/{id}", get(job))
        .route("/graph/view", get(graph_view))
        .route("/graph/neighborhood", get(graph_neighborhood))
        .route("/search", post(search))
        .route("/nodes", post(create_node))
        .route("/edges", post(create_edge))
        .route("/items/{id}", get(item))
        .route("/items/{id}/hide", post(hide))
        .route("/items/{id}/review", post(review))
        .route("/items/{id}/annotate", post(annotate))
        .route("/items/{id}/rerun", post(rerun))
        .route("/items/{id}/trace", get(trace))
        .route("/items/{id}/actions", get(actions))
        .route("/actions/{module}/{action}", post(invoke_action))
        .route("/ontology", get(ontology).post(edit_ontology))
        .route("/layout", post(layout))
        .route("/report", get(report))
        .route("/documents/{id}", get(document))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

// ---------------------------------------------------------------------------
// Wire types

/// A node or an edge, tagged with `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "item", rename_all = "lowercase")]
pub enum WireItem {
    Node(NodeRecord),
    Edge(EdgeRecord),
}

impl WireItem {
    pub fn id(&self) -> ItemId {
        match self {
            WireItem::Node(n) => n.id,
            WireItem::Edge(e) => e.id,
        }
    }

    pub fn hidden(&self) -> bool {
        match self {
            WireItem::Node(n) => n.hidden,
            WireItem::Edge(e) => e.hidden,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub next_cursor: Option<u64>,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphPage {
    pub items: Vec<WireItem>,
    /// Sent with the first page only.
    #[serde(default)]
    pub clusters: Vec<AliasCluster>,
    pub next_cursor: Option<u64>,
    pub total: usize,
}

/// Items with keys above `cursor`, at most `limit` of them.
fn paginate<T>(mut keyed: Vec<(u64, T)>, cursor: Option<u64>, limit: usize) -> Page<T> {
    keyed.sort_by_key(|(k, _)| *k);
    let total = keyed.len();
    let mut rest = keyed.into_iter().filter(|(k, _)| cursor.is_none_or(|c| *k > c)).peekable();
    let mut items = Vec::new();
    let mut last = None;
    while items.len() < limit {
        let Some((k, v)) = rest.next() else { break };
        last = Some(k);
        items.push(v);
    }
    let next_cursor = if rest.peek().is_some() { last } else { None };
    Page {
        items,
        next_cursor,
        total,
    }
}

fn page_limit(engine: &Engine, requested: Option<usize>) -> usize {
    let max = engine.config().page_size;
    requested.unwrap_or(max).clamp(1, max)
}

fn graph_page(engine: &Engine, view: GraphView, cursor: Option<u64>, limit: Option<usize>) -> GraphPage {
    let store = engine.store();
    let keyed: Vec<(u64, WireItem)> = view
        .nodes
        .iter()
        .filter_map(|id| store.node(*id).cloned().map(WireItem::Node))
        .chain(view.edges.iter().filter_map(|id| store.edge(*id).cloned().map(WireItem::Edge)))
        .map(|w| (w.id().0, w))
        .collect();
    let page = paginate(keyed, cursor, page_limit(engine, limit));
    GraphPage {
        items: page.items,
        clusters: if cursor.is_none() { view.clusters } else { Vec::new() },
        next_cursor: page.next_cursor,
        total: page.total,
    }
}

/// View filter as query parameters. `types` is comma separated.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub include_hidden: bool,
    pub min_grade: Option<String>,
    pub types: Option<String>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub cross_match_only: bool,
}

impl FilterParams {
    fn to_filter(&self, session: &ApiSession) -> Result<ViewFilter, ApiError> {
        let mut filter = ViewFilter {
            include_hidden: session.may_see_hidden(self.include_hidden)?,
            cross_match_only: self.cross_match_only,
            ..ViewFilter::default()
        };
        if let Some(g) = &self.min_grade {
            filter.min_grade = Some(g.parse().map_err(|e| ApiError::bad_request(format!("min_grade: {e}")))?);
        }
        if let Some(types) = &self.types {
            for t in types.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let path = TypePath::parse(t).map_err(|e| ApiError::bad_request(format!("types: {e}")))?;
                filter.type_selection.insert(path);
            }
        }
        filter.time_range = match (self.from, self.to) {
            (Some(start), Some(end)) => Some(TimeRange { start, end }),
            (None, None) => None,
            _ => return Err(ApiError::bad_request("from and to must be given together")),
        };
        filter.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(filter)
    }
}

fn check_body_filter(filter: &ViewFilter, session: &ApiSession) -> Result<(), ApiError> {
    session.may_see_hidden(filter.include_hidden)?;
    filter.validate().map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct PageParams {
    pub cursor: Option<u64>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct HiddenParam {
    pub include_hidden: bool,
}

/// Unknown items and hidden items the caller may not see look the same.
fn require_visible(engine: &Engine, id: ItemId, see_hidden: bool) -> Result<(), ApiError> {
    let state = engine.store().state();
    let hidden = state
        .node(id)
        .map(|n| n.hidden)
        .or_else(|| state.edge(id).map(|e| e.hidden));
    match hidden {
        Some(false) => Ok(()),
        Some(true) if see_hidden => Ok(()),
        _ => Err(ApiError::not_found(format!("unknown item {id}")).with_details(json!({ "item": id }))),
    }
}

fn seqs_since(engine: &Engine, before: usize) -> Vec<u64> {
    (before as u64..engine.store().log().len() as u64).collect()
}

// ---------------------------------------------------------------------------
// Handlers

async fn healthz(State(app): State<AppState>) -> Json<Value> {
    let engine = app.engine.lock().await;
    let entries = engine.store().log().entries();
    let head = entries.last().map_or(GENESIS_HASH, |e| e.entry_hash.as_str());
    Json(json!({ "status": "ok", "head_hash": head, "entries": entries.len() }))
}

#[derive(Debug, Deserialize)]
pub struct IngestBody {
    pub media_type: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub base64: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    /// Run the cascade before answering instead of in the background.
    #[serde(default)]
    pub wait: bool,
}

async fn ingest(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(body): ApiJson<IngestBody>,
) -> Result<Response, ApiError> {
    session.require(Capability::Ingest)?;
    let bytes = match (body.text, body.base64) {
        (Some(text), None) => text.into_bytes(),
        (None, Some(b64)) => base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| ApiError::bad_request(format!("base64: {e}")))?,
        _ => return Err(ApiError::bad_request("give exactly one of text or base64")),
    };
    let mut request = IngestRequest::new(bytes, &body.media_type);
    request.source_name = body.name;
    request.timestamp = body.timestamp;

    let mut engine = app.engine.lock().await;
    let job = engine.submit(request, &session.actor)?;
    let document = engine.orchestrator().job(job).map(|j| j.document);
    if body.wait {
        engine.run_pending()?;
        let status = engine.orchestrator().job(job).map(|j| j.status);
        return Ok((StatusCode::OK, Json(json!({ "job": job.0, "document": document, "status": status }))).into_response());
    }
    drop(engine);
    let shared = app.engine.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = shared.blocking_lock().run_pending() {
            tracing::error!(%job, "cascade failed: {e}");
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job": job.0, "document": document, "status": "queued" })),
    )
        .into_response())
}

async fn job(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<u64>,
    ApiQuery(hidden): ApiQuery<HiddenParam>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(hidden.include_hidden)?;
    let engine = app.engine.lock().await;
    let job = engine
        .orchestrator()
        .job(JobId(id))
        .ok_or_else(|| ApiError::not_found(format!("unknown job {}", JobId(id))))?;
    let state = engine.store().state();
    let visible = |i: &ItemId| {
        see_hidden
            || state
                .node(*i)
                .map(|n| !n.hidden)
                .or_else(|| state.edge(*i).map(|e| !e.hidden))
                .unwrap_or(false)
    };
    let produced: Vec<ItemId> = job.produced.iter().copied().filter(visible).collect();
    Ok(Json(json!({
        "id": job.id.0,
        "status": job.status,
        "document": job.document,
        "media_type": job.media_type,
        "produced": produced,
        "cascade_depth": job.cascade_depth,
        "modules": job.modules,
        "warnings": job.warnings,
    })))
}

async fn graph_view(
    State(app): State<AppState>,
    session: ApiSession,
    ApiQuery(filter): ApiQuery<FilterParams>,
    ApiQuery(page): ApiQuery<PageParams>,
) -> Result<Json<GraphPage>, ApiError> {
    session.require(Capability::Read)?;
    let filter = filter.to_filter(&session)?;
    let engine = app.engine.lock().await;
    let view = engine.view(&filter)?;
    Ok(Json(graph_page(&engine, view, page.cursor, page.limit)))
}

#[derive(Debug, Deserialize)]
pub struct CenterParams {
    pub center: ItemId,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    1
}

async fn graph_neighborhood(
    State(app): State<AppState>,
    session: ApiSession,
    ApiQuery(center): ApiQuery<CenterParams>,
    ApiQuery(filter): ApiQuery<FilterParams>,
    ApiQuery(page): ApiQuery<PageParams>,
) -> Result<Json<GraphPage>, ApiError> {
    session.require(Capability::Read)?;
    let filter = filter.to_filter(&session)?;
    let engine = app.engine.lock().await;
    let view = engine
        .store()
        .neighborhood(center.center, center.k, &filter)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(Json(graph_page(&engine, view, page.cursor, page.limit)))
}

#[derive(Debug, Deserialize)]
pub struct SearchBody {
    pub text: String,
    #[serde(default)]
    pub modes: Option<Vec<SearchMode>>,
    #[serde(default)]
    pub fuzzy_max_edits: Option<usize>,
    #[serde(default)]
    pub ontology_max_depth: Option<usize>,
    #[serde(default)]
    pub decay: Option<f64>,
    #[serde(default)]
    pub scope: SearchScope,
    #[serde(default)]
    pub filter: ViewFilter,
    /// Rank position to continue from.
    #[serde(default)]
    pub cursor: Option<u64>,
    #[serde(default)]
    pub limit: Option<usize>,
}

async fn search(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(body): ApiJson<SearchBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    check_body_filter(&body.filter, &session)?;
    let mut engine = app.engine.lock().await;
    let defaults = SearchQuery::default();
    let query = SearchQuery {
        text: body.text,
        modes: body.modes.unwrap_or(defaults.modes),
        fuzzy_max_edits: body.fuzzy_max_edits.unwrap_or(defaults.fuzzy_max_edits),
        ontology_max_depth: body.ontology_max_depth.unwrap_or(defaults.ontology_max_depth),
        decay: body.decay.unwrap_or(engine.config().search_decay),
        scope: body.scope,
    };
    let hits = engine.search(&query, &body.filter, &session.actor)?;
    let limit = page_limit(&engine, body.limit);
    let page = paginate(
        hits.into_iter().enumerate().map(|(i, h)| (i as u64, h)).collect(),
        body.cursor,
        limit,
    );
    Ok(Json(json!({ "hits": page.items, "next_cursor": page.next_cursor, "total": page.total })))
}

#[derive(Debug, Deserialize)]
pub struct NodeBody {
    #[serde(rename = "type")]
    pub type_path: TypePath,
    pub label: String,
    #[serde(default)]
    pub attributes: Attributes,
}

async fn create_node(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(body): ApiJson<NodeBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    session.require(Capability::Annotate)?;
    let mut candidate = NodeCandidate::new(body.type_path, body.label);
    candidate.attributes = body.attributes;
    let mut engine = app.engine.lock().await;
    let before = engine.store().log().len();
    let out = engine
        .store_mut()
        .upsert_node(candidate, &session.actor)
        .map_err(casegraph_core::engine::EngineError::from)?;
    let seqs = seqs_since(&engine, before);
    let status = if out.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "id": out.id, "created": out.created, "seqs": seqs }))))
}

#[derive(Debug, Deserialize)]
pub struct EdgeBody {
    pub kind: String,
    pub from: ItemId,
    pub to: ItemId,
    #[serde(default)]
    pub grade: Option<ConfidenceGrade>,
    #[serde(default)]
    pub attributes: Attributes,
}

async fn create_edge(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(body): ApiJson<EdgeBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    session.require(Capability::Annotate)?;
    let mut candidate = EdgeCandidate::new(&body.kind, body.from, body.to);
    candidate.grade = body.grade;
    candidate.attributes = body.attributes;
    let mut engine = app.engine.lock().await;
    let before = engine.store().log().len();
    let id = engine
        .store_mut()
        .upsert_edge(candidate, &session.actor)
        .map_err(casegraph_core::engine::EngineError::from)?;
    let seqs = seqs_since(&engine, before);
    let grade = engine.store().edge(id).map(|e| e.grade);
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "grade": grade, "seqs": seqs }))))
}

async fn item(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiQuery(hidden): ApiQuery<HiddenParam>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(hidden.include_hidden)?;
    let engine = app.engine.lock().await;
    require_visible(&engine, id, see_hidden)?;
    let state = engine.store().state();
    let record = match (state.node(id), state.edge(id)) {
        (Some(n), _) => WireItem::Node(n.clone()),
        (_, Some(e)) => WireItem::Edge(e.clone()),
        _ => unreachable!("visibility checked"),
    };
    Ok(Json(json!({ "record": record, "annotations": state.annotations(id) })))
}

#[derive(Debug, Deserialize)]
pub struct HideBody {
    pub reason: String,
}

fn receipt_json(receipt: &Receipt) -> Json<Value> {
    Json(json!({ "seqs": receipt.seqs, "items": receipt.items }))
}

async fn hide(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiJson(body): ApiJson<HideBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Annotate)?;
    let mut engine = app.engine.lock().await;
    let receipt = engine
        .store_mut()
        .hide(id, &session.actor, &body.reason)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(receipt_json(&receipt))
}

#[derive(Debug, Deserialize)]
pub struct ReviewBody {
    pub grade: ConfidenceGrade,
}

async fn review(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiJson(body): ApiJson<ReviewBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Review)?;
    let mut engine = app.engine.lock().await;
    let receipt = engine
        .store_mut()
        .review(id, &session.actor, body.grade)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(receipt_json(&receipt))
}

#[derive(Debug, Deserialize)]
pub struct AnnotateBody {
    pub comment: String,
    #[serde(default)]
    pub disposition: Disposition,
}

async fn annotate(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiJson(body): ApiJson<AnnotateBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Annotate)?;
    let mut engine = app.engine.lock().await;
    let receipt = engine
        .store_mut()
        .annotate(id, &session.actor, &body.comment, body.disposition)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(receipt_json(&receipt))
}

#[derive(Debug, Deserialize)]
pub struct RerunBody {
    pub module: String,
    #[serde(default)]
    pub parameters: Value,
}

async fn rerun(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiJson(body): ApiJson<RerunBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Ingest)?;
    let mut engine = app.engine.lock().await;
    let before = engine.store().log().len();
    let report = engine.rerun(id, &body.module, body.parameters, &session.actor)?;
    let seqs = seqs_since(&engine, before);
    Ok(Json(json!({ "report": report, "seqs": seqs })))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct TraceParams {
    pub include_hidden: bool,
    pub cursor: Option<u64>,
    pub limit: Option<usize>,
}

async fn trace(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiQuery(params): ApiQuery<TraceParams>,
) -> Result<Json<Page<ProvenanceEntry>>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(params.include_hidden)?;
    let engine = app.engine.lock().await;
    require_visible(&engine, id, see_hidden)?;
    let entries = engine.trace(id)?;
    let limit = page_limit(&engine, params.limit);
    Ok(Json(paginate(
        entries.into_iter().map(|e| (e.seq, e)).collect(),
        params.cursor,
        limit,
    )))
}

async fn actions(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiQuery(hidden): ApiQuery<HiddenParam>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(hidden.include_hidden)?;
    let engine = app.engine.lock().await;
    require_visible(&engine, id, see_hidden)?;
    let offers = engine
        .orchestrator()
        .list_context_actions(engine.store().state(), id, see_hidden)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(Json(json!({ "actions": offers })))
}

#[derive(Debug, Deserialize)]
pub struct ActionBody {
    pub item: ItemId,
    #[serde(default)]
    pub include_hidden: bool,
}

async fn invoke_action(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath((module, action)): ApiPath<(String, String)>,
    ApiJson(body): ApiJson<ActionBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(body.include_hidden)?;
    let engine = app.engine.lock().await;
    require_visible(&engine, body.item, see_hidden)?;
    let result = engine
        .orchestrator()
        .invoke_action(engine.store().state(), &module, &action, body.item)
        .map_err(casegraph_core::engine::EngineError::from)?;
    Ok(Json(json!({ "module": module, "action": action, "item": body.item, "result": result })))
}

async fn ontology(State(app): State<AppState>, session: ApiSession) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let engine = app.engine.lock().await;
    let o = engine.ontology();
    Ok(Json(json!({
        "version": o.version(),
        "concepts": o.concepts().collect::<Vec<_>>(),
        "links": o.links().collect::<Vec<_>>(),
    })))
}

async fn edit_ontology(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(edit): ApiJson<OntologyEdit>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Admin)?;
    let mut engine = app.engine.lock().await;
    let before = engine.store().log().len();
    let version = engine.edit_ontology(edit, &session.actor)?;
    let seqs = seqs_since(&engine, before);
    Ok(Json(json!({ "version": version, "seqs": seqs })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct LayoutBody {
    pub filter: ViewFilter,
    pub params: Option<LayoutParams>,
}

async fn layout(
    State(app): State<AppState>,
    session: ApiSession,
    ApiJson(body): ApiJson<LayoutBody>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    check_body_filter(&body.filter, &session)?;
    let engine = app.engine.lock().await;
    let positions = engine.layout(&body.filter, body.params.as_ref())?;
    Ok(Json(json!({ "positions": positions })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct ReportParams {
    /// Comma separated item ids.
    pub items: String,
    pub format: Option<String>,
    pub title: Option<String>,
    pub include_hidden: bool,
}

async fn report(
    State(app): State<AppState>,
    session: ApiSession,
    ApiQuery(params): ApiQuery<ReportParams>,
) -> Result<Response, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(params.include_hidden)?;
    let selection: Vec<ItemId> = params
        .items
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ItemId>().map_err(|_| ApiError::bad_request(format!("bad item id {s:?}"))))
        .collect::<Result<_, _>>()?;
    let engine = app.engine.lock().await;
    let blocked: Vec<ItemId> = selection
        .iter()
        .copied()
        .filter(|id| require_visible(&engine, *id, see_hidden).is_err())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !blocked.is_empty() {
        return Err(ApiError::not_found(format!("{} unknown item(s)", blocked.len()))
            .with_details(json!({ "unknown": blocked })));
    }
    let bundle = engine.report(&selection, params.title.as_deref())?;
    match params.format.as_deref().unwrap_or("json") {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], bundle.to_json()).into_response()),
        "html" => Ok(Html(bundle.to_html()).into_response()),
        other => Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    }
}

async fn document(
    State(app): State<AppState>,
    session: ApiSession,
    ApiPath(id): ApiPath<ItemId>,
    ApiQuery(hidden): ApiQuery<HiddenParam>,
) -> Result<Json<Value>, ApiError> {
    session.require(Capability::Read)?;
    let see_hidden = session.may_see_hidden(hidden.include_hidden)?;
    let engine = app.engine.lock().await;
    require_visible(&engine, id, see_hidden)?;
    let node = engine.store().node(id).ok_or_else(|| ApiError::not_found(format!("unknown item {id}")))?;
    if !node.is_document() {
        return Err(ApiError::bad_request(format!("{id} is not a document")));
    }
    let text = engine.document_text(id).ok();
    let mentions = engine.document_mentions(id, see_hidden)?;
    // Entities grouped by label, most mentioned first.
    let mut counts: BTreeMap<ItemId, (String, String, usize)> = BTreeMap::new();
    for m in &mentions {
        counts
            .entry(m.node)
            .or_insert_with(|| (m.surface.clone(), m.label.to_string(), 0))
            .2 += 1;
    }
    let mut grouped: Vec<(String, std::cmp::Reverse<usize>, ItemId, String)> = counts
        .into_iter()
        .map(|(node, (surface, label, count))| (label, std::cmp::Reverse(count), node, surface))
        .collect();
    grouped.sort();
    let entities: Vec<Value> = grouped
        .into_iter()
        .map(|(label, count, node, surface)| json!({ "node": node, "label": label, "surface": surface, "count": count.0 }))
        .collect();
    Ok(Json(json!({
        "id": id,
        "label": node.label,
        "type": node.type_path,
        "hidden": node.hidden,
        "text": text,
        "mentions": mentions,
        "entities": entities,
    })))
}
