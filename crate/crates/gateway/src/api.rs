use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use kcroute_core::index::ingest_records;
use kcroute_core::scoring::FallbackUse;
use kcroute_core::{route, Error, IndexStats, RoutingConfig, TagSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::state::{AppState, Snapshot};

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::AlphaMismatch { .. } | Error::Conflict(_) => StatusCode::CONFLICT,
            Error::EmptyPool => StatusCode::UNPROCESSABLE_ENTITY,
            Error::TaggerUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::TaggerParse(_) => StatusCode::BAD_GATEWAY,
            Error::Io(_) | Error::EmbeddingUnavailable(_) | Error::Format(_) | Error::Version { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<TagSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Restricts the enabled pool to these ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<String>>,
    /// Sent to the chosen model's endpoint in pass-through mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<Value>,
}

impl RouteRequest {
    pub fn config(&self, defaults: &RoutingConfig) -> RoutingConfig {
        RoutingConfig {
            alpha: self.alpha.unwrap_or(defaults.alpha),
            beta: self.beta.unwrap_or(defaults.beta),
            gamma: self.gamma.unwrap_or(defaults.gamma),
            delta: self.delta.unwrap_or(defaults.delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreView {
    pub ks: f64,
    pub cs: f64,
    pub mixed: f64,
    pub cost_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub model_id: String,
    pub breakdown: BTreeMap<String, ScoreView>,
    /// Substitutions made while scoring each model.
    pub fallbacks_used: BTreeMap<String, Vec<FallbackUse>>,
    pub index_version: u64,
    pub tags_used: TagSet,
    pub tagging_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forwarded: Option<Value>,
}

/// Default pool narrowed to `requested`. Unknown ids are an error; disabled
/// ones drop out.
pub fn resolve_pool(snapshot: &Snapshot, requested: Option<&[String]>) -> Result<Vec<String>, Error> {
    let enabled = snapshot.default_pool();
    let Some(requested) = requested else {
        return Ok(enabled);
    };
    if let Some(unknown) = requested.iter().find(|m| !snapshot.index.models.contains_key(*m)) {
        return Err(Error::UnknownModel(unknown.clone()));
    }
    Ok(enabled.into_iter().filter(|m| requested.contains(m)).collect())
}

pub(crate) async fn route_handler(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<RouteResponse>> {
    let req: RouteRequest = parse_body(&body)?;
    let snapshot = state.snapshot();

    let (raw_tags, tagging_cost) =
        match (&req.text, &req.tags) {
            (Some(_), Some(_)) => {
                return Err(ApiError::bad_request(
                    "give either \"text\" or \"tags\", not both",
                ))
            }
            (None, None) => return Err(ApiError::bad_request("body needs \"text\" or \"tags\"")),
            (None, Some(tags)) => (tags.clone(), 0.0),
            (Some(text), None) => {
                let tagger = state.tagger.clone().ok_or_else(|| {
                    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no tagger is configured")
                })?;
                let permit =
                    state.tagger_permits.clone().acquire_owned().await.map_err(|_| {
                        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "tagger is shutting down")
                    })?;
                let text = text.clone();
                let tagged = tokio::task::spawn_blocking(move || {
                    let _permit = permit;
                    tagger.tag(&text)
                })
                .await
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
                (tagged.tags, tagged.cost)
            }
        };

    let tags = snapshot.index.canonicalize_tags(&raw_tags);
    let config = req.config(&state.config.routing);
    let pool = resolve_pool(&snapshot, req.pool.as_deref())?;
    let decision = route(&snapshot.index, &tags, &config, &pool)?;

    let forwarded = match req.forward {
        Some(payload) => Some(forward(&state, &snapshot, &decision.model_id, payload).await?),
        None => None,
    };

    Ok(Json(RouteResponse {
        breakdown: decision
            .breakdown
            .iter()
            .map(|(id, b)| {
                let view = ScoreView {
                    ks: b.knowledge_score,
                    cs: b.capability_score,
                    mixed: b.mixed_score,
                    cost_slope: b.cost_slope,
                };
                (id.clone(), view)
            })
            .collect(),
        fallbacks_used: decision
            .breakdown
            .iter()
            .map(|(id, b)| (id.clone(), b.fallbacks_used.clone()))
            .collect(),
        model_id: decision.model_id,
        index_version: snapshot.index.version,
        tags_used: tags,
        tagging_cost,
        forwarded,
    }))
}

async fn forward(
    state: &Arc<AppState>,
    snapshot: &Snapshot,
    model_id: &str,
    payload: Value,
) -> ApiResult<Value> {
    if !state.config.pass_through {
        return Err(ApiError::bad_request("pass-through is disabled"));
    }
    let endpoint = snapshot
        .registry
        .get(model_id)
        .and_then(|m| m.endpoint.clone())
        .ok_or_else(|| ApiError::bad_request(format!("model {model_id:?} has no endpoint")))?;
    let agent = state.forward_agent.clone();
    tokio::task::spawn_blocking(move || {
        let resp = agent
            .post(&endpoint)
            .send_json(payload)
            .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("upstream: {e}")))?;
        let status = resp.status();
        let body: Value = resp
            .into_json()
            .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("upstream body: {e}")))?;
        Ok(json!({ "status": status, "body": body }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    pub id: String,
    pub display_name: String,
    pub cost: Option<f64>,
    pub enabled: bool,
    pub knowledge_elements: usize,
    pub capability_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsResponse {
    pub index_version: u64,
    pub models: Vec<ModelView>,
    /// Uploaded but not yet indexed.
    pub staged: Vec<String>,
}

pub(crate) async fn models_handler(State(state): State<Arc<AppState>>) -> Json<ModelsResponse> {
    let snapshot = state.snapshot();
    let models = snapshot
        .registry
        .values()
        .map(|m| {
            let profile = &snapshot.index.models[&m.id];
            ModelView {
                id: m.id.clone(),
                display_name: m.display_name.clone().unwrap_or_else(|| m.id.clone()),
                cost: m.cost,
                enabled: m.enabled,
                knowledge_elements: profile.knowledge_stats.len(),
                capability_elements: profile.capability_stats.len(),
            }
        })
        .collect();
    let staged = state
        .staged
        .lock()
        .expect("staged lock poisoned")
        .keys()
        .cloned()
        .collect();
    Json(ModelsResponse {
        index_version: snapshot.index.version,
        models,
        staged,
    })
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "admin token required");
    let expected = state.config.admin_token.as_deref().ok_or_else(unauthorized)?;
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(unauthorized)?;
    if given != expected {
        return Err(unauthorized());
    }
    Ok(())
}

/// Body: evaluation-record lines, all for the model named in the path.
pub(crate) async fn upload_records_handler(
    State(state): State<Arc<AppState>>,
    Path(model_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    require_admin(&state, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let mut records = ingest_records(text)?;
    if records.is_empty() {
        return Err(ApiError::bad_request("no records in body"));
    }
    if let Some(other) = records.keys().find(|m| **m != model_id) {
        return Err(ApiError::bad_request(format!(
            "record for {other:?} uploaded under {model_id:?}"
        )));
    }
    let snapshot = state.snapshot();
    if snapshot.index.models.contains_key(&model_id) {
        return Err(Error::Conflict(format!("model {model_id:?} is already indexed")).into());
    }
    let corpus = snapshot
        .corpus
        .as_ref()
        .ok_or_else(|| ApiError::bad_request("gateway was started without an index corpus"))?;
    let per_query = records.remove(&model_id).unwrap_or_default();
    if let Some(q) = per_query.keys().find(|q| !corpus.queries().contains_key(*q)) {
        return Err(ApiError::bad_request(format!("unknown query {q:?}")));
    }

    let mut staged = state.staged.lock().expect("staged lock poisoned");
    if staged.contains_key(&model_id) {
        return Err(Error::Conflict(format!("records for {model_id:?} are already staged")).into());
    }
    let count = per_query.len();
    staged.insert(model_id.clone(), per_query);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "model_id": model_id, "queries": count })),
    ))
}

/// Indexes every staged model and swaps in the grown snapshot.
pub(crate) async fn rebuild_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    require_admin(&state, &headers)?;
    let _writer = state.rebuild.lock().await;
    let staged = std::mem::take(&mut *state.staged.lock().expect("staged lock poisoned"));
    let current = state.snapshot();

    let grown = (|| -> Result<Option<Snapshot>, Error> {
        if staged.is_empty() {
            return Ok(None);
        }
        let mut corpus = current
            .corpus
            .clone()
            .ok_or_else(|| Error::Corpus("no index corpus loaded".into()))?;
        corpus.insert_records(staged.clone())?;
        let mut index = current.index.clone();
        for model in staged.keys() {
            index = index.add_model(model, &corpus)?;
        }
        let registry = crate::state::Registry {
            models: current.registry.values().cloned().collect(),
        };
        Ok(Some(Snapshot::new(index, Some(corpus), registry)))
    })();

    match grown {
        Ok(Some(next)) => {
            let version = next.index.version;
            state.swap(next);
            tracing::info!(version, added = ?staged.keys().collect::<Vec<_>>(), "index rebuilt");
            Ok(Json(
                json!({ "index_version": version, "added": staged.keys().collect::<Vec<_>>() }),
            ))
        }
        Ok(None) => Ok(Json(
            json!({ "index_version": current.index.version, "added": [] }),
        )),
        Err(e) => {
            let mut slot = state.staged.lock().expect("staged lock poisoned");
            for (model, records) in staged {
                slot.entry(model).or_insert(records);
            }
            Err(e.into())
        }
    }
}

pub(crate) async fn stats_handler(State(state): State<Arc<AppState>>) -> Json<IndexStats> {
    Json(state.snapshot().index.stats())
}

pub(crate) async fn health_handler() -> &'static str {
    "ok"
}
