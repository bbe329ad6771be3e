use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use evidence_core::answerer::Answerer;
use evidence_core::assessment::assess_answer;
use evidence_core::document_model::{normalize_html_named, render_highlighted};
use evidence_core::embeddings::WordVectorTable;
use evidence_core::evaluation::{error_report, parse_annotations, quality_reports, AnnotationSet};
use evidence_core::metric_catalog::{parse_catalog, Catalog, Metric};
use evidence_core::pipelines::{Extractor, PipelineKind};
use evidence_core::records::{record_id, Decision, ErrorCategory, EvidenceRecord, ReviewStatus};
use evidence_core::text_prep::StopwordList;
use evidence_core::{Error, PolicyDocument};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::store::{RecordFilter, Store};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    pub answerer: Arc<dyn Answerer>,
    pub stopwords: StopwordList,
    pub vectors: Option<WordVectorTable>,
    pub clock: Clock,
    /// One lock per record id, so a (doc, metric, pipeline) extraction never
    /// runs twice at the same time.
    extraction_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(
        config: ServiceConfig,
        store: Store,
        answerer: Arc<dyn Answerer>,
        stopwords: StopwordList,
        vectors: Option<WordVectorTable>,
        clock: Clock,
    ) -> Self {
        Self {
            config,
            store,
            answerer,
            stopwords,
            vectors,
            clock,
            extraction_locks: Mutex::new(HashMap::new()),
        }
    }

    fn lock_for(&self, key: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.extraction_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    details: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            details: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} {id:?} not found"))
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::RemoteTimeout(_) => StatusCode::GATEWAY_TIMEOUT,
            Error::RemoteUnavailable(_) | Error::RemoteMalformedResponse(_) => StatusCode::BAD_GATEWAY,
            Error::AlreadyReviewed(_) => StatusCode::CONFLICT,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(d) = self.details {
            body["details"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections are reported as 422 with a JSON error.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::unprocessable(e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(JsonBody)
            .map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
    }
}

/// Query string whose rejections are reported as 422.
pub struct QueryParams<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryParams<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut axum::http::request::Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(q)| QueryParams(q))
            .map_err(|e| ApiError::unprocessable(e.body_text()))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/documents", post(upload_document).get(list_documents))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/annotations", put(put_annotations).get(get_annotations))
        .route("/metrics", put(put_metrics).get(get_metrics))
        .route("/extract", post(extract))
        .route("/records", get(list_records))
        .route("/records/{id}", get(get_record))
        .route("/records/{id}/context", get(record_context))
        .route("/records/{id}/review", post(review_record))
        .route("/reports/quality", get(quality_report))
        .route("/reports/errors", get(errors_report))
        .layer(axum::extract::DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

#[derive(Debug, Serialize)]
struct UploadResponse {
    doc_id: String,
    title: String,
    sections: usize,
    created: bool,
}

async fn read_upload(headers: &HeaderMap, req: Request, state: &Shared) -> ApiResult<(String, Option<String>)> {
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("multipart/form-data"));
    if !is_multipart {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::unprocessable(e.body_text()))?;
        let html = String::from_utf8(bytes.to_vec()).map_err(|_| ApiError::unprocessable("document is not UTF-8"))?;
        return Ok((html, None));
    }
    let mut multipart = Multipart::from_request(req, state)
        .await
        .map_err(|e| ApiError::unprocessable(e.body_text()))?;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::unprocessable(e.body_text()))?
    {
        if field.file_name().is_none() && field.name() != Some("file") {
            continue;
        }
        let name = field.file_name().map(str::to_string);
        let text = field.text().await.map_err(|e| ApiError::unprocessable(e.body_text()))?;
        return Ok((text, name));
    }
    Err(ApiError::unprocessable("multipart body has no file field"))
}

async fn upload_document(
    State(state): State<Shared>,
    QueryParams(query): QueryParams<UploadQuery>,
    headers: HeaderMap,
    req: Request,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let (html, file_name) = read_upload(&headers, req, &state).await?;
    let name = query.name.or(file_name).unwrap_or_default();
    let options = state.config.normalization.clone();
    let doc = tokio::task::spawn_blocking(move || normalize_html_named(&html, &options, &name))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let response = UploadResponse {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        sections: doc.sections.len(),
        created: false,
    };
    let created = state.store.put_document(doc)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(UploadResponse { created, ..response })))
}

async fn list_documents(State(state): State<Shared>) -> impl IntoResponse {
    Json(state.store.documents())
}

fn document(state: &AppState, id: &str) -> ApiResult<PolicyDocument> {
    state
        .store
        .document(id)
        .ok_or_else(|| ApiError::not_found("document", id))
}

async fn get_document(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<PolicyDocument>> {
    Ok(Json(document(&state, &id)?))
}

#[derive(Debug, Serialize)]
struct AnnotationResponse {
    doc_id: String,
    count: usize,
    unknown_metrics: Vec<String>,
}

async fn put_annotations(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<AnnotationResponse>> {
    let doc = document(&state, &id)?;
    let catalog = Catalog::from_metrics(state.store.metrics())?;
    let set = parse_annotations(&body, &doc, Some(&catalog))?;
    let response = AnnotationResponse {
        doc_id: id,
        count: set.len(),
        unknown_metrics: set.unknown_metrics.clone(),
    };
    state.store.put_annotations(set)?;
    Ok(Json(response))
}

async fn get_annotations(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<AnnotationSet>> {
    document(&state, &id)?;
    state
        .store
        .annotations(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("annotations for document", &id))
}

async fn put_metrics(State(state): State<Shared>, body: String) -> ApiResult<Json<serde_json::Value>> {
    let catalog = parse_catalog(&body)?;
    let count = catalog.len();
    let warnings = catalog.warnings.clone();
    state
        .store
        .replace_metrics(catalog.metrics)
        .map_err(|missing| ApiError {
            status: StatusCode::CONFLICT,
            message: "existing records refer to metrics missing from the new catalog".into(),
            details: Some(json!(missing)),
        })?;
    Ok(Json(json!({ "count": count, "warnings": warnings })))
}

async fn get_metrics(State(state): State<Shared>) -> impl IntoResponse {
    Json(state.store.metrics())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PipelineSelector {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct ExtractRequest {
    doc_id: String,
    #[serde(default)]
    metric_names: Option<Vec<String>>,
    pipeline: PipelineSelector,
}

fn pipelines(selector: &PipelineSelector) -> ApiResult<Vec<PipelineKind>> {
    let names: Vec<&str> = match selector {
        PipelineSelector::One(s) => vec![s.as_str()],
        PipelineSelector::Many(v) => v.iter().map(String::as_str).collect(),
    };
    let mut out = BTreeSet::new();
    for n in names {
        if n == "all" {
            out.extend(PipelineKind::ALL);
        } else {
            out.insert(n.parse::<PipelineKind>()?);
        }
    }
    if out.is_empty() {
        return Err(ApiError::unprocessable("no pipeline selected"));
    }
    Ok(out.into_iter().collect())
}

/// Runs one (doc, metric, pipeline) extraction and builds a Pending record.
fn run_one(
    state: &AppState,
    doc: &PolicyDocument,
    metric: &Metric,
    kind: PipelineKind,
) -> evidence_core::Result<EvidenceRecord> {
    let mut extractor = Extractor::new(state.answerer.as_ref(), &state.stopwords).with_options(state.config.pipelines);
    if let Some(v) = &state.vectors {
        extractor = extractor.with_vectors(v);
    }
    let result = extractor.run(kind, doc, metric)?;
    let hint = assess_answer(
        metric,
        &result.answer.text,
        result.answer.answerable,
        &state.config.duration_units,
    )?;
    Ok(EvidenceRecord::new(result, hint, (state.clock)()))
}

async fn extract(
    State(state): State<Shared>,
    JsonBody(req): JsonBody<ExtractRequest>,
) -> ApiResult<Json<Vec<EvidenceRecord>>> {
    let doc = Arc::new(document(&state, &req.doc_id)?);
    let doc_id = doc.doc_id.clone();
    let kinds = pipelines(&req.pipeline)?;
    let metrics: Vec<Metric> = match &req.metric_names {
        Some(names) => names
            .iter()
            .map(|n| state.store.metric(n).ok_or_else(|| ApiError::not_found("metric", n)))
            .collect::<ApiResult<_>>()?,
        None => state.store.metrics(),
    };
    if kinds.iter().any(|k| k.needs_vectors()) && state.vectors.is_none() {
        return Err(ApiError::unprocessable(
            "similarity pipelines need a configured vector table",
        ));
    }

    let mut jobs: Vec<(String, Metric, PipelineKind)> = metrics
        .iter()
        .flat_map(|m| kinds.iter().map(|k| (record_id(&doc_id, &m.name, *k), m.clone(), *k)))
        .collect();
    // Sorted lock order rules out deadlocks between overlapping requests.
    jobs.sort_by(|a, b| a.0.cmp(&b.0));
    jobs.dedup_by(|a, b| a.0 == b.0);
    let locks: Vec<_> = jobs.iter().map(|(id, _, _)| state.lock_for(id)).collect();
    let mut guards = Vec::with_capacity(locks.len());
    for l in &locks {
        guards.push(l.lock().await);
    }

    let pending: Vec<(String, Metric, PipelineKind)> = jobs
        .into_iter()
        .filter(|(id, _, _)| state.store.record(id).is_none_or(|r| r.is_pending()))
        .collect();
    let worker_state = state.clone();
    let worker_doc = doc.clone();
    let fresh = tokio::task::spawn_blocking(move || {
        pending
            .iter()
            .map(|(_, m, k)| run_one(&worker_state, &worker_doc, m, *k))
            .collect::<evidence_core::Result<Vec<_>>>()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    state.store.save_records(fresh)?;
    drop(guards);

    let mut out: Vec<EvidenceRecord> = metrics
        .iter()
        .flat_map(|m| kinds.iter().map(|k| record_id(&doc_id, &m.name, *k)))
        .filter_map(|id| state.store.record(&id))
        .collect();
    out.sort_by(|a, b| (&a.metric_name, a.pipeline).cmp(&(&b.metric_name, b.pipeline)));
    out.dedup_by(|a, b| a.record_id == b.record_id);
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct RecordQuery {
    doc_id: Option<String>,
    status: Option<ReviewStatus>,
}

async fn list_records(State(state): State<Shared>, QueryParams(q): QueryParams<RecordQuery>) -> impl IntoResponse {
    Json(state.store.records(&RecordFilter {
        doc_id: q.doc_id,
        status: q.status,
    }))
}

fn record(state: &AppState, id: &str) -> ApiResult<EvidenceRecord> {
    state.store.record(id).ok_or_else(|| ApiError::not_found("record", id))
}

async fn get_record(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<EvidenceRecord>> {
    Ok(Json(record(&state, &id)?))
}

async fn record_context(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Html<String>> {
    let rec = record(&state, &id)?;
    let doc = document(&state, &rec.doc_id)?;
    if !rec.answer.answerable {
        return Ok(Html(doc.to_html()));
    }
    Ok(Html(render_highlighted(
        &doc,
        (rec.answer.start_offset, rec.answer.end_offset),
    )?))
}

#[derive(Debug, Deserialize)]
struct ReviewRequest {
    decision: Decision,
    category: ErrorCategory,
    #[serde(default)]
    comment: Option<String>,
}

async fn review_record(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ReviewRequest>,
) -> ApiResult<Json<EvidenceRecord>> {
    let now = (state.clock)();
    let updated = state
        .store
        .update_record(&id, |r| {
            r.review(req.decision, req.category, req.comment.clone(), now)?;
            Ok(r.clone())
        })
        .ok_or_else(|| ApiError::not_found("record", &id))??;
    Ok(Json(updated))
}

#[derive(Debug, Deserialize)]
struct QualityQuery {
    doc_id: Option<String>,
    /// Document whose stored annotations serve as ground truth; defaults to
    /// `doc_id`.
    annotations_ref: Option<String>,
}

async fn quality_report(
    State(state): State<Shared>,
    QueryParams(q): QueryParams<QualityQuery>,
) -> ApiResult<impl IntoResponse> {
    let annotations: Vec<AnnotationSet> = match q.annotations_ref.as_ref().or(q.doc_id.as_ref()) {
        Some(id) => vec![state
            .store
            .annotations(id)
            .ok_or_else(|| ApiError::not_found("annotations for document", id))?],
        None => state.store.all_annotations(),
    };
    // Annotations borrowed from another upload of the same text.
    let annotations: Vec<AnnotationSet> = match &q.doc_id {
        Some(doc_id) => annotations
            .into_iter()
            .map(|set| AnnotationSet {
                doc_id: doc_id.clone(),
                ..set
            })
            .collect(),
        None => annotations,
    };
    let results: Vec<_> = state
        .store
        .records(&RecordFilter {
            doc_id: q.doc_id.clone(),
            status: None,
        })
        .iter()
        .map(EvidenceRecord::extraction)
        .collect();
    Ok(Json(quality_reports(&results, &annotations)))
}

#[derive(Debug, Deserialize)]
struct ErrorsQuery {
    doc_id: Option<String>,
}

async fn errors_report(State(state): State<Shared>, QueryParams(q): QueryParams<ErrorsQuery>) -> impl IntoResponse {
    let records = state.store.records(&RecordFilter {
        doc_id: q.doc_id,
        status: None,
    });
    Json(error_report(&records))
}
