//! HTTP JSON API over a [`ReviewStore`].
//!
//! Reads share a lock; verdicts take the write lock one at a time, so the
//! first verdict for a record wins and later ones get 409 with the winner.
//! Every response body carries `schema_version`.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use metasynth::critic::grounding::{check_grounding, GroundingViolation};
use metasynth::model::GoldenTriplet;
use metasynth::pipeline::review::SCHEMA_VERSION;
use metasynth::pipeline::{ReviewError, ReviewLogEntry, ReviewPaths, ReviewStore, ReviewVerdict};

pub const DEFAULT_PER_PAGE: usize = 20;
pub const MAX_PER_PAGE: usize = 200;

pub struct ApiState {
    store: RwLock<ReviewStore>,
    token: Option<String>,
    grounding_tol: f64,
}

impl ApiState {
    pub fn new(store: ReviewStore, token: Option<String>, grounding_tol: f64) -> Self {
        ApiState {
            store: RwLock::new(store),
            token,
            grounding_tol,
        }
    }

    /// Open the store for an output directory.
    pub fn open(
        output_dir: &Path,
        sample_rate: f64,
        seed: u64,
        token: Option<String>,
        grounding_tol: f64,
    ) -> metasynth::Result<Self> {
        let store = ReviewStore::open(ReviewPaths::in_dir(output_dir), sample_rate, seed)?;
        Ok(Self::new(store, token, grounding_tol))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, ReviewStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }
}

/// A queue entry as shown to a reviewer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewItem {
    pub triplet: GoldenTriplet,
    /// Answer references with no match in the context.
    pub unmatched_references: Vec<GroundingViolation>,
}

impl ReviewItem {
    fn new(t: &GoldenTriplet, tol: f64) -> Self {
        ReviewItem {
            triplet: t.clone(),
            unmatched_references: check_grounding(&t.expected_output, &t.context, tol, true),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    /// 1-based.
    pub page: Option<usize>,
    pub per_page: Option<usize>,
}

fn body(status: StatusCode, mut v: Value) -> Response {
    v["schema_version"] = json!(SCHEMA_VERSION);
    (status, Json(v)).into_response()
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    body(status, json!({ "error": message.to_string() }))
}

fn conflict(winner: &ReviewLogEntry) -> Response {
    body(
        StatusCode::CONFLICT,
        json!({ "error": format!("`{}` already reviewed", winner.triplet_id), "winning_verdict": winner }),
    )
}

async fn queue(State(s): State<Arc<ApiState>>, Query(q): Query<PageQuery>) -> Response {
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if page == 0 || per_page == 0 || per_page > MAX_PER_PAGE {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("page must be >= 1 and per_page in 1..={MAX_PER_PAGE}"),
        );
    }
    let store = s.read();
    let total = store.remaining().len();
    let items: Vec<ReviewItem> = store
        .page(page - 1, per_page)
        .into_iter()
        .map(|t| ReviewItem::new(t, s.grounding_tol))
        .collect();
    body(
        StatusCode::OK,
        json!({
            "page": page,
            "per_page": per_page,
            "total": total,
            "pages": total.div_ceil(per_page),
            "items": items,
        }),
    )
}

async fn item(State(s): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>) -> Response {
    let store = s.read();
    match store.item(&id) {
        Ok((t, review)) => body(
            StatusCode::OK,
            json!({ "item": ReviewItem::new(t, s.grounding_tol), "review": review }),
        ),
        Err(e) => error(StatusCode::NOT_FOUND, e),
    }
}

async fn progress(State(s): State<Arc<ApiState>>) -> Response {
    let p = s.read().progress();
    body(StatusCode::OK, json!({ "progress": p }))
}

async fn verdict(State(s): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>, raw: Bytes) -> Response {
    let v: ReviewVerdict = match serde_json::from_slice(&raw) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed verdict: {e}")),
    };
    if v.triplet_id != id {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("verdict is for `{}` but was posted to `{id}`", v.triplet_id),
        );
    }
    let state = s.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let mut store = state.store.write().unwrap_or_else(|e| e.into_inner());
        let tol = state.grounding_tol;
        match store.apply(v) {
            Ok(t) => {
                let item = ReviewItem::new(t, tol);
                Ok(json!({ "item": item, "progress": store.progress() }))
            }
            Err(e) => Err(e),
        }
    })
    .await;
    match outcome {
        Ok(Ok(v)) => body(StatusCode::OK, v),
        Ok(Err(ReviewError::NotFound(id))) => error(StatusCode::NOT_FOUND, format!("unknown triplet `{id}`")),
        Ok(Err(ReviewError::Conflict(winner))) => conflict(&winner),
        Ok(Err(e @ ReviewError::Validation(_))) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Ok(Err(e @ ReviewError::Store(_))) => {
            tracing::error!("review store: {e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, e)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn auth(State(s): State<Arc<ApiState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|h| h.to_str().ok())
            .and_then(|h| h.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "missing or invalid bearer token");
        }
    }
    next.run(req).await
}

async fn fallback() -> Response {
    error(StatusCode::NOT_FOUND, "no such endpoint")
}

pub fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/review/queue", get(queue))
        .route("/review/item/{triplet_id}", get(item))
        .route("/review/item/{triplet_id}/verdict", post(verdict))
        .route("/review/progress", get(progress))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<ApiState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("review API listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use http_body_util::BodyExt;

    #[tokio::test]
    async fn error_bodies_carry_schema_version() {
        let r = error(StatusCode::NOT_FOUND, "gone");
        assert_eq!(r.status(), StatusCode::NOT_FOUND);
        let bytes = r.into_body().collect().await.unwrap().to_bytes();
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["error"], "gone");
    }
}
