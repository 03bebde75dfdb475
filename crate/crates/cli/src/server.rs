//! HTTP/JSON service over one case directory.
//!
//! Every request reads the case from disk, so the service holds no state
//! beyond the store. Writes go through an in-process mutex and the store's
//! writer lock.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use safecase::change::{self, ChangeDraft, ChangeError};
use safecase::evidence::{self, Artifact, AttestedStatus, EvidenceError, EvidenceStatus};
use safecase::kinematics;
use safecase::store::{self, CaseDocument, StoreError};
use safecase::{Attestation, CaseStore, NodeId, StatusMap, TagQuery};

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            StoreError::EmptyQuery => ApiError::new(StatusCode::BAD_REQUEST, "empty_query", msg),
            StoreError::IntegrityError { name, .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "integrity_error", msg).with_details(json!({ "artifact": name }))
            }
            StoreError::SchemaVersionMismatch { found, expected } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "schema_version_mismatch", msg)
                    .with_details(json!({ "found": found, "expected": expected }))
            }
            StoreError::MalformedCase(_) | StoreError::Structure(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "malformed_case", msg)
            }
            StoreError::Parse { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "unreadable_document", msg),
            StoreError::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", msg),
        }
    }
}

impl From<ChangeError> for ApiError {
    fn from(e: ChangeError) -> Self {
        let msg = e.to_string();
        match e {
            ChangeError::EmptyChange => ApiError::new(StatusCode::BAD_REQUEST, "empty_change", msg),
            ChangeError::UnknownParam(p) => {
                ApiError::new(StatusCode::BAD_REQUEST, "unknown_param", msg).with_details(json!({ "param": p }))
            }
            ChangeError::NonFiniteUpdate(p) => {
                ApiError::new(StatusCode::BAD_REQUEST, "non_finite_update", msg).with_details(json!({ "param": p }))
            }
            ChangeError::InvalidChange(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_change", msg),
            ChangeError::ChangeClosed(id) => {
                ApiError::new(StatusCode::CONFLICT, "change_closed", msg).with_details(json!({ "change_id": id }))
            }
            ChangeError::ReportMismatch { report, change } => {
                ApiError::new(StatusCode::CONFLICT, "report_mismatch", msg).with_details(json!({ "report": report, "change": change }))
            }
            ChangeError::StageNotOne(stage) => {
                ApiError::new(StatusCode::CONFLICT, "stage_not_one", msg).with_details(json!({ "stage": stage }))
            }
            ChangeError::StaleReport { expected, found } => {
                ApiError::new(StatusCode::CONFLICT, "stale_report", msg).with_details(json!({ "expected": expected, "found": found }))
            }
            ChangeError::Store(e) => e.into(),
        }
    }
}

impl From<EvidenceError> for ApiError {
    fn from(e: EvidenceError) -> Self {
        let msg = e.to_string();
        match e {
            EvidenceError::RoleMismatch { .. } => ApiError::new(StatusCode::BAD_REQUEST, "role_mismatch", msg),
            EvidenceError::WrongBindingKind(_) => ApiError::new(StatusCode::BAD_REQUEST, "not_manual_evidence", msg),
            EvidenceError::EvidenceMismatch { .. } => ApiError::new(StatusCode::BAD_REQUEST, "evidence_mismatch", msg),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "evaluation_error", msg),
        }
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

fn node_id(raw: &str) -> Result<NodeId, ApiError> {
    NodeId::new(raw).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_node_id", e.to_string()))
}

pub struct AppState {
    store: CaseStore,
    writer: tokio::sync::Mutex<()>,
}

type Shared = State<Arc<AppState>>;

pub fn router(store: CaseStore) -> Router {
    let state = Arc::new(AppState {
        store,
        writer: tokio::sync::Mutex::new(()),
    });
    Router::new()
        .route("/case", get(get_case))
        .route("/status", get(get_status))
        .route("/query", post(post_query))
        .route("/changes", post(post_change))
        .route("/changes/:id", get(get_change))
        .route("/changes/:id/impact", post(post_impact).get(get_impact))
        .route("/changes/:id/apply", post(post_apply))
        .route("/evidence/:id/attest", post(post_attest))
        .route("/snapshots", get(get_snapshots).post(post_snapshot))
        .route("/traces/:artifact", get(get_trace))
        .with_state(state)
}

pub async fn serve(store: CaseStore, host: &str, port: u16) -> std::io::Result<()> {
    // fail fast on a broken case
    store.load_case().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("serving {} on http://{}", store.dir().display(), listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaseView {
    pub digest: String,
    pub as_of: DateTime<Utc>,
    pub case: CaseDocument,
    pub evidence: BTreeMap<NodeId, EvidenceStatus>,
    pub status_map: StatusMap,
}

fn case_view(s: &CaseStore) -> Result<CaseView, ApiError> {
    let c = s.load_case()?;
    let arts = s.load_artifacts(&c)?;
    let att = s.load_attestations()?;
    let as_of = s.as_of()?;
    let (evidence, status_map) = change::assess(&c, &arts, &att, as_of);
    Ok(CaseView {
        digest: c.digest(),
        as_of,
        case: c.to_document(),
        evidence,
        status_map,
    })
}

async fn get_case(State(st): Shared) -> Result<Json<CaseView>, ApiError> {
    Ok(Json(case_view(&st.store)?))
}

async fn get_status(State(st): Shared) -> Result<Json<StatusMap>, ApiError> {
    Ok(Json(case_view(&st.store)?.status_map))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub nodes: Vec<NodeId>,
}

async fn post_query(State(st): Shared, body: Bytes) -> Result<Json<QueryResponse>, ApiError> {
    let q: TagQuery = parse_body(&body)?;
    let c = st.store.load_case()?;
    Ok(Json(QueryResponse {
        nodes: store::query_tags(&c, &q),
    }))
}

async fn post_change(State(st): Shared, body: Bytes) -> Result<(StatusCode, Json<safecase::ChangeRequest>), ApiError> {
    let draft: ChangeDraft = parse_body(&body)?;
    let cr = draft.open(Utc::now())?;
    let _w = st.writer.lock().await;
    change::save_change(&st.store, &cr)?;
    Ok((StatusCode::CREATED, Json(cr)))
}

async fn get_change(State(st): Shared, Path(id): Path<String>) -> Result<Json<safecase::ChangeRequest>, ApiError> {
    Ok(Json(change::load_change(&st.store, &id)?))
}

async fn post_impact(State(st): Shared, Path(id): Path<String>) -> Result<Json<safecase::ImpactReport>, ApiError> {
    let cr = change::load_change(&st.store, &id)?;
    let _w = st.writer.lock().await;
    Ok(Json(change::impact_in_store(&st.store, &cr)?))
}

async fn get_impact(State(st): Shared, Path(id): Path<String>) -> Result<Json<safecase::ImpactReport>, ApiError> {
    Ok(Json(change::load_report(&st.store, &id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApplyResponse {
    pub change: safecase::ChangeRequest,
    pub digest: String,
    pub snapshot_id: String,
    pub status_map: StatusMap,
}

async fn post_apply(State(st): Shared, Path(id): Path<String>) -> Result<Json<ApplyResponse>, ApiError> {
    let cr = change::load_change(&st.store, &id)?;
    let report = match change::load_report(&st.store, &id) {
        Err(ChangeError::Store(StoreError::NotFound(_))) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "impact_required", format!("run impact for {id} before applying")))
        }
        r => r?,
    };
    let _w = st.writer.lock().await;
    let applied = change::apply_in_store(&st.store, &cr, &report, Utc::now())?;
    Ok(Json(ApplyResponse {
        digest: applied.case.digest(),
        snapshot_id: applied.snapshot.id,
        status_map: applied.status_map,
        change: applied.change,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestRequest {
    pub status: AttestedStatus,
    pub by: String,
    pub role: String,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: String,
}

async fn post_attest(State(st): Shared, Path(id): Path<String>, body: Bytes) -> Result<Json<EvidenceStatus>, ApiError> {
    let id = node_id(&id)?;
    let req: AttestRequest = parse_body(&body)?;
    let _w = st.writer.lock().await;
    let _lock = st.store.lock()?;
    let c = st.store.load_case()?;
    if c.tree.node(&id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_node", format!("no node {id}")));
    }
    let Some(binding) = c.bindings.get(&id) else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "not_manual_evidence", format!("{id} has no evidence binding")));
    };
    let a = Attestation {
        evidence_id: id.clone(),
        status: req.status,
        by: req.by,
        role: req.role,
        at: req.at.unwrap_or_else(Utc::now),
        note: req.note,
    };
    let mut log = st.store.load_attestations()?;
    let status = evidence::attest(&id, a.clone(), binding, &mut log)?;
    st.store.append_attestation(&a)?;
    Ok(Json(status))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub id: String,
    pub label: String,
    pub created_at: DateTime<Utc>,
}

async fn get_snapshots(State(st): Shared) -> Result<Json<Vec<SnapshotInfo>>, ApiError> {
    let list = st.store.list_snapshots()?;
    Ok(Json(
        list.into_iter()
            .map(|s| SnapshotInfo {
                id: s.id,
                label: s.label,
                created_at: s.created_at,
            })
            .collect(),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotRequest {
    label: String,
}

async fn post_snapshot(State(st): Shared, body: Bytes) -> Result<(StatusCode, Json<SnapshotInfo>), ApiError> {
    let req: SnapshotRequest = parse_body(&body)?;
    let _w = st.writer.lock().await;
    let c = st.store.load_case()?;
    let s = store::snapshot(&c, &req.label, Utc::now());
    st.store.save_snapshot(&s)?;
    Ok((
        StatusCode::CREATED,
        Json(SnapshotInfo {
            id: s.id,
            label: s.label,
            created_at: s.created_at,
        }),
    ))
}

async fn get_trace(State(st): Shared, Path(name): Path<String>) -> Result<Response, ApiError> {
    let c = st.store.load_case()?;
    if !c.artifacts.contains_key(&name) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_artifact", format!("no artifact {name}")));
    }
    let arts = st.store.load_artifacts(&c)?;
    let csv = match &arts[&name].content {
        Artifact::Trace(t) => t.to_csv(),
        Artifact::Scenario(spec) => {
            let bad = |e: kinematics::KinematicsError| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "scenario_error", e.to_string());
            let s = spec.resolve(&c.env).map_err(bad)?;
            kinematics::simulate_fp_braking(&s).map_err(bad)?.to_csv()
        }
        Artifact::Report(_) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "not_a_trace", format!("{name} is a metric report")))
        }
    };
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}
