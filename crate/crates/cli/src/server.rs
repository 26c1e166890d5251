//! JSON API over one curation session.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nepcurate::service::{
    DeletionReport, ExportReport, ExportRequest, Plot, PlotKind, Session, SessionSummary, StructureView, Tool,
    ToolReport, UndoReport,
};
use serde::Serialize;

/// Reads share the lock; tools, deletions, undo and exports take it exclusively.
pub type Shared = Arc<RwLock<Session>>;

pub struct ApiError(StatusCode, String);

impl From<nepcurate::Error> for ApiError {
    fn from(e: nepcurate::Error) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn poisoned() -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, "session lock poisoned".into())
}

const INDEX: &str = "nepcurate session API\n\
GET  /api/session\n\
GET  /api/plot/{descriptor|energy|force|virial|stress}\n\
POST /api/tool\n\
POST /api/delete\n\
POST /api/undo\n\
POST /api/export\n\
GET  /api/structure/{index}\n";

pub fn router(session: Session) -> Router {
    let state: Shared = Arc::new(RwLock::new(session));
    Router::new()
        .route("/", get(|| async { INDEX }))
        .route("/api/session", get(summary))
        .route("/api/plot/{kind}", get(plot))
        .route("/api/tool", post(tool))
        .route("/api/delete", post(delete))
        .route("/api/undo", post(undo))
        .route("/api/export", post(export))
        .route("/api/structure/{index}", get(structure))
        .with_state(state)
}

async fn summary(State(s): State<Shared>) -> ApiResult<SessionSummary> {
    Ok(Json(s.read().map_err(|_| poisoned())?.summary()))
}

async fn plot(State(s): State<Shared>, Path(kind): Path<String>) -> ApiResult<Plot> {
    let kind: PlotKind = kind.parse()?;
    {
        let session = s.read().map_err(|_| poisoned())?;
        if session.is_prepared(kind) {
            return Ok(Json(session.plot(kind)?));
        }
    }
    Ok(Json(s.write().map_err(|_| poisoned())?.get_plot(kind)?))
}

async fn tool(State(s): State<Shared>, Json(t): Json<Tool>) -> ApiResult<ToolReport> {
    Ok(Json(s.write().map_err(|_| poisoned())?.apply_tool(&t)?))
}

async fn delete(State(s): State<Shared>) -> ApiResult<DeletionReport> {
    Ok(Json(s.write().map_err(|_| poisoned())?.delete_selected()))
}

async fn undo(State(s): State<Shared>) -> ApiResult<UndoReport> {
    Ok(Json(s.write().map_err(|_| poisoned())?.undo()))
}

async fn export(State(s): State<Shared>, Json(req): Json<ExportRequest>) -> ApiResult<ExportReport> {
    Ok(Json(s.write().map_err(|_| poisoned())?.export(&req)?))
}

async fn structure(State(s): State<Shared>, Path(index): Path<usize>) -> ApiResult<StructureView> {
    let session = s.read().map_err(|_| poisoned())?;
    if index >= session.frames().len() {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("frame {index} out of range for {} frames", session.frames().len()),
        ));
    }
    Ok(Json(session.get_structure_view(index)?))
}

pub async fn serve(addr: SocketAddr, session: Session) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
