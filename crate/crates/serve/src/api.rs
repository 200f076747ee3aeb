use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use saegraph_core::community::{Algorithm, CommunityRecord};
use saegraph_core::motifs::FeatureClassification;
use saegraph_core::sim::MeasureKind;
use saegraph_core::FeatureId;

use crate::state::AppState;

/// Error response body: `{"error": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInfo {
    pub id: FeatureId,
    pub value: f64,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborLists {
    /// Previous-layer features, most similar first.
    pub up: Vec<NeighborInfo>,
    /// Next-layer features, most similar first.
    pub down: Vec<NeighborInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDetail {
    pub id: FeatureId,
    pub layer: u32,
    pub index: u32,
    pub explanation: Option<String>,
    pub max_activation: Option<f64>,
    pub classification: Option<FeatureClassification>,
    pub neighbors: BTreeMap<MeasureKind, NeighborLists>,
}

type Params = Query<BTreeMap<String, String>>;

fn param<T: std::str::FromStr>(q: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    match q.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| ApiError::bad_request(format!("bad value {s:?} for {key}: {e}"))),
    }
}

fn required<T: std::str::FromStr>(q: &BTreeMap<String, String>, key: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    param(q, key)?.ok_or_else(|| ApiError::bad_request(format!("missing query parameter {key}")))
}

fn json_body(body: String) -> Response {
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

async fn presets(State(s): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(s.preset_names())
}

async fn graph(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let preset: String = required(&q, "preset")?;
    let threshold: Option<f64> = param(&q, "threshold")?;
    Ok(json_body(s.graph_json(&preset, threshold)?))
}

async fn feature(
    State(s): State<Arc<AppState>>,
    Path((layer, index)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Json<FeatureDetail>, ApiError> {
    let id: FeatureId = format!("{layer}/{index}")
        .parse()
        .map_err(|_| ApiError::not_found(format!("no feature {layer}/{index}")))?;
    let cap: usize = param(&q, "cap")?.unwrap_or(s.neighbor_cap);
    Ok(Json(s.feature_detail(id, cap)?))
}

async fn communities(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Json<Vec<CommunityRecord>>, ApiError> {
    let measure: Option<MeasureKind> = param(&q, "measure")?;
    let algo: Option<Algorithm> = param(&q, "algo")?;
    let threshold: Option<f64> = param(&q, "threshold")?;
    let min_size: Option<usize> = param(&q, "min_size")?;
    let max_size: Option<usize> = param(&q, "max_size")?;
    let stored: Vec<&CommunityRecord> = s
        .communities
        .iter()
        .filter(|r| measure.is_none_or(|m| r.measure == m))
        .filter(|r| algo.is_none_or(|a| r.algorithm == a))
        .filter(|r| threshold.is_none_or(|t| r.threshold == t))
        .collect();
    if stored.is_empty() && (measure.is_some() || algo.is_some() || threshold.is_some() || s.communities.is_empty()) {
        return Err(ApiError::not_found("no community artifact matches"));
    }
    Ok(Json(
        stored
            .into_iter()
            .filter(|r| min_size.is_none_or(|m| r.size >= m) && max_size.is_none_or(|m| r.size <= m))
            .cloned()
            .collect(),
    ))
}

async fn token_subgraph(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let dataset: String = required(&q, "dataset")?;
    let token: u64 = required(&q, "token")?;
    Ok(json_body(s.token_document(&dataset, token)?.to_json()))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

impl AppState {
    pub fn feature_detail(&self, id: FeatureId, cap: usize) -> Result<FeatureDetail, ApiError> {
        match self.dims {
            Some((n_layers, n_features)) if id.layer < n_layers && id.index < n_features => {}
            _ => return Err(ApiError::not_found(format!("no feature {id}"))),
        }
        let info = |id: FeatureId, value: f64| NeighborInfo {
            id,
            value,
            explanation: self.annotations.get(id).map(str::to_owned),
        };
        let top = |mut v: Vec<NeighborInfo>| {
            v.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.id.cmp(&b.id)));
            v.truncate(cap);
            v
        };
        let mut neighbors: BTreeMap<MeasureKind, NeighborLists> = BTreeMap::new();
        for (&(measure, upstream), m) in &self.matrices {
            let lists = neighbors.entry(measure).or_default();
            if upstream == id.layer && id.index < m.n_up {
                lists.down = top(m
                    .row(id.index)
                    .iter()
                    .map(|e| info(FeatureId::new(upstream + 1, e.down), e.value))
                    .collect());
            }
            if upstream + 1 == id.layer && id.index < m.n_down {
                lists.up = top(m
                    .column(id.index)
                    .iter()
                    .map(|e| info(FeatureId::new(upstream, e.up), e.value))
                    .collect());
            }
        }
        Ok(FeatureDetail {
            id,
            layer: id.layer,
            index: id.index,
            explanation: self.annotations.get(id).map(str::to_owned),
            max_activation: self.max.as_ref().map(|t| f64::from(t.get(id))),
            classification: self.classes.get(&id).cloned(),
            neighbors,
        })
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new().allow_origin(allow).allow_methods([Method::GET])
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors(&state.cors_origins);
    Router::new()
        .route("/api/presets", get(presets))
        .route("/api/graph", get(graph))
        .route("/api/feature/{layer}/{index}", get(feature))
        .route("/api/communities", get(communities))
        .route("/api/token-subgraph", get(token_subgraph))
        .fallback(fallback)
        .layer(cors)
        .with_state(state)
}
