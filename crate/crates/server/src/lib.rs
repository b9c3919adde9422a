//! HTTP front end: SPARQL endpoint, catalog browsing, export and image files.
//!
//! | route | purpose |
//! |---|---|
//! | `GET /` | service description |
//! | `GET, POST /sparql` | SPARQL protocol, JSON results |
//! | `GET /datasets` | dataset summaries |
//! | `GET /categories?dataset&task&q` | labels with annotation counts |
//! | `GET /statistics` | totals, per dataset, per task |
//! | `POST /export` | export payload for an [`ExportRequest`] body |
//! | `GET /images/{slug}/{*path}` | image bytes from the dataset's image root |
//!
//! Requests read an immutable [`Snapshot`]; [`Service::publish`] swaps in a
//! new one without disturbing requests already running.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::header::{CONTENT_TYPE, HeaderName, HeaderValue};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Form, Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;
use vkg_core::catalog::{self, CatalogError, CategoryFilter};
use vkg_core::export::{export, ExportError, ExportPayload, ExportRequest};
use vkg_core::ingest::{TaskKind, DEFAULT_BASE_IRI};
use vkg_core::sparql::{evaluate, parse_query, QueryError};
use vkg_core::Snapshot;

pub const SPARQL_RESULTS_JSON: &str = "application/sparql-results+json";
pub const SPARQL_QUERY: &str = "application/sparql-query";
pub const X_TRUNCATED: HeaderName = HeaderName::from_static("x-truncated");
/// Longest accepted query string on `GET /sparql`, in bytes.
pub const MAX_GET_QUERY: usize = 8 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub port: u16,
    pub base_iri: String,
    /// Dataset slug to the directory holding its image files.
    pub image_roots: BTreeMap<String, PathBuf>,
    /// Cap on solution rows per response.
    pub max_rows: usize,
    pub cors_allowed: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            base_iri: DEFAULT_BASE_IRI.to_owned(),
            image_roots: BTreeMap::new(),
            max_rows: 10_000,
            cors_allowed: false,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.port == 0 {
            return Err("port must be in 1..=65535".into());
        }
        if self.max_rows == 0 {
            return Err("maxRows must be positive".into());
        }
        Ok(())
    }
}

struct Shared {
    snapshot: RwLock<Arc<Snapshot>>,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct Service(Arc<Shared>);

impl Service {
    pub fn new(snapshot: Snapshot, config: ServiceConfig) -> Self {
        Service(Arc::new(Shared { snapshot: RwLock::new(Arc::new(snapshot)), config }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    /// The snapshot new requests will read.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.0.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces the served snapshot. Requests already holding the old one
    /// finish against it.
    pub fn publish(&self, snapshot: Snapshot) {
        *self.0.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }

    pub fn router(&self) -> Router {
        let router = Router::new()
            .route("/", get(index))
            .route("/sparql", get(sparql_get).post(sparql_post))
            .route("/datasets", get(datasets))
            .route("/categories", get(categories))
            .route("/statistics", get(statistics))
            .route("/export", axum::routing::post(export_handler))
            .route("/images/{slug}/{*path}", get(image))
            .with_state(self.clone());
        if self.0.config.cors_allowed {
            router.layer(CorsLayer::permissive())
        } else {
            router
        }
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Service,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, service.router()).with_graceful_shutdown(shutdown).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn query_error(e: &QueryError) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": e.message, "query": e }))).into_response()
}

async fn index(State(svc): State<Service>) -> Json<serde_json::Value> {
    Json(json!({
        "service": "vkg",
        "baseIri": svc.config().base_iri,
        "maxRows": svc.config().max_rows,
        "endpoints": ["/sparql", "/datasets", "/categories", "/statistics", "/export", "/images/{slug}/{path}"],
    }))
}

#[derive(Deserialize)]
struct SparqlParams {
    query: Option<String>,
}

async fn sparql_get(State(svc): State<Service>, uri: Uri) -> Response {
    if uri.query().is_some_and(|q| q.len() > MAX_GET_QUERY) {
        return error(StatusCode::URI_TOO_LONG, format!("query string exceeds {MAX_GET_QUERY} bytes; use POST"));
    }
    match Query::<SparqlParams>::try_from_uri(&uri) {
        Ok(Query(SparqlParams { query: Some(q) })) => run_query(svc, q).await,
        Ok(_) => error(StatusCode::BAD_REQUEST, "missing `query` parameter"),
        Err(e) => error(StatusCode::BAD_REQUEST, e.body_text()),
    }
}

async fn sparql_post(State(svc): State<Service>, req: Request) -> Response {
    let content_type = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or_default().trim().to_ascii_lowercase())
        .unwrap_or_default();
    let text = match content_type.as_str() {
        SPARQL_QUERY => match Bytes::from_request(req, &()).await {
            Ok(b) => match String::from_utf8(b.to_vec()) {
                Ok(s) => s,
                Err(_) => return error(StatusCode::BAD_REQUEST, "query body is not UTF-8"),
            },
            Err(e) => return e.into_response(),
        },
        "application/x-www-form-urlencoded" => match Form::<SparqlParams>::from_request(req, &()).await {
            Ok(Form(SparqlParams { query: Some(q) })) => q,
            Ok(_) => return error(StatusCode::BAD_REQUEST, "missing `query` form field"),
            Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
        },
        other => {
            return error(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                format!("content type `{other}` not supported; use {SPARQL_QUERY} or a urlencoded form"),
            )
        }
    };
    run_query(svc, text).await
}

async fn run_query(svc: Service, text: String) -> Response {
    let query = match parse_query(&text) {
        Ok(q) => q,
        Err(e) => return query_error(&e),
    };
    let snapshot = svc.snapshot();
    let max_rows = svc.config().max_rows;
    let evaluated = tokio::task::spawn_blocking(move || {
        let mut solutions = evaluate(&query, snapshot.as_ref());
        let truncated = solutions.truncate(max_rows);
        (solutions.to_json(), truncated)
    })
    .await;
    match evaluated {
        Ok((body, truncated)) => {
            let mut resp = Json(body).into_response();
            let headers = resp.headers_mut();
            headers.insert(CONTENT_TYPE, HeaderValue::from_static(SPARQL_RESULTS_JSON));
            headers.insert(X_TRUNCATED, HeaderValue::from_static(if truncated { "true" } else { "false" }));
            resp
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn datasets(State(svc): State<Service>) -> Response {
    Json(catalog::datasets(svc.snapshot().as_ref())).into_response()
}

#[derive(Deserialize)]
struct CategoryParams {
    dataset: Option<String>,
    task: Option<String>,
    q: Option<String>,
}

async fn categories(State(svc): State<Service>, params: Result<Query<CategoryParams>, axum::extract::rejection::QueryRejection>) -> Response {
    let Query(p) = match params {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let task = match p.task.filter(|t| !t.is_empty()).map(|t| t.parse::<TaskKind>()).transpose() {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let filter = CategoryFilter {
        dataset: p.dataset.filter(|d| !d.is_empty()),
        task,
        q: p.q.filter(|q| !q.is_empty()),
    };
    match catalog::categories(svc.snapshot().as_ref(), &filter) {
        Ok(list) => Json(list).into_response(),
        Err(e @ CatalogError::UnknownDataset(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
    }
}

async fn statistics(State(svc): State<Service>) -> Response {
    Json(catalog::statistics(svc.snapshot().as_ref())).into_response()
}

async fn export_handler(State(svc): State<Service>, body: Bytes) -> Response {
    let request: ExportRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid export request: {e}")),
    };
    if let Err(e) = request.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let snapshot = svc.snapshot();
    let result = match tokio::task::spawn_blocking(move || export(&request, snapshot.as_ref())).await {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    match result {
        Ok(ExportPayload::Coco(json)) => ([(CONTENT_TYPE, "application/json")], json).into_response(),
        Ok(ExportPayload::Kitti(files)) => Json(files).into_response(),
        Ok(ExportPayload::Cls(csv)) => ([(CONTENT_TYPE, "text/csv")], csv).into_response(),
        Err(ExportError::Query(e)) => query_error(&e),
        Err(e @ (ExportError::EmptyResult | ExportError::FormatIncompatible { .. })) => {
            error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        Some("tif" | "tiff") => "image/tiff",
        _ => "application/octet-stream",
    }
}

/// True when `rel` stays inside whatever directory it is joined to.
fn is_contained(rel: &str) -> bool {
    !rel.contains('\\')
        && !rel.contains('\0')
        && Path::new(rel).components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

async fn image(State(svc): State<Service>, UrlPath((slug, rel)): UrlPath<(String, String)>) -> Response {
    if !is_contained(&rel) {
        return error(StatusCode::FORBIDDEN, "path escapes the image root");
    }
    let Some(root) = svc.config().image_roots.get(&slug) else {
        return error(StatusCode::NOT_FOUND, format!("no image root for dataset `{slug}`"));
    };
    let (Ok(root), Ok(file)) = (root.canonicalize(), root.join(&rel).canonicalize()) else {
        return error(StatusCode::NOT_FOUND, format!("image `{rel}` not found"));
    };
    if !file.starts_with(&root) {
        return error(StatusCode::FORBIDDEN, "path escapes the image root");
    }
    match tokio::fs::read(&file).await {
        Ok(bytes) => ([(CONTENT_TYPE, content_type(&file))], Body::from(bytes)).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("image `{rel}` not found")),
    }
}
