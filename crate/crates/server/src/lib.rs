//! JSON-over-HTTP front end for [`CompanionService`], plus a blocking
//! client that lets the simulator drive a live server.

mod client;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use companion_core::search::Document;
use companion_core::service::{
    AnswerAck, AnswerRequest, ClickRequest, ClickResponse, CompanionService, CreateSessionRequest,
    QueryRequest, QueryResponse, ServiceError, SessionCreated, TimedRequest, TipInteractionRequest,
    TipsResponse,
};
use companion_core::SessionId;

pub use client::HttpTarget;

/// Body of every non-2xx response. `detail` carries the structured error so
/// clients can rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<ServiceError>,
}

pub fn status_for(err: &ServiceError) -> StatusCode {
    match err {
        ServiceError::UnknownTopic(_)
        | ServiceError::UnknownSession(_)
        | ServiceError::UnknownDoc(_) => StatusCode::NOT_FOUND,
        ServiceError::SessionFinished
        | ServiceError::OutOfOrderTimestamp { .. }
        | ServiceError::TipNotShown(_) => StatusCode::CONFLICT,
        ServiceError::InvalidSuggestion { .. } | ServiceError::InvalidRequest(_) => {
            StatusCode::BAD_REQUEST
        }
        ServiceError::Startup(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        ServiceError::Transport(_) => StatusCode::BAD_GATEWAY,
    }
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::InvalidRequest(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        } else {
            tracing::debug!(error = %self.0, "request rejected");
        }
        let body = ErrorBody {
            error: self.0.code().to_string(),
            message: self.0.to_string(),
            detail: Some(self.0),
        };
        (status, Json(body)).into_response()
    }
}

type Svc = State<Arc<CompanionService>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn create_session(
    State(svc): Svc,
    body: Option<Json<CreateSessionRequest>>,
) -> ApiResult<SessionCreated> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    Ok(Json(svc.create_session(req)?))
}

async fn submit_query(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<QueryResponse> {
    Ok(Json(svc.submit_query(&SessionId::new(id), body?.0)?))
}

async fn click_result(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<ClickRequest>, JsonRejection>,
) -> ApiResult<ClickResponse> {
    Ok(Json(svc.click_result(&SessionId::new(id), body?.0)?))
}

async fn return_to_serp(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<TimedRequest>, JsonRejection>,
) -> ApiResult<TipsResponse> {
    Ok(Json(svc.return_to_serp(&SessionId::new(id), body?.0)?))
}

async fn heartbeat(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<TimedRequest>, JsonRejection>,
) -> ApiResult<TipsResponse> {
    Ok(Json(svc.heartbeat(&SessionId::new(id), body?.0)?))
}

async fn tip_interaction(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<TipInteractionRequest>, JsonRejection>,
) -> ApiResult<TipsResponse> {
    Ok(Json(svc.tip_interaction(&SessionId::new(id), body?.0)?))
}

async fn submit_answer(
    State(svc): Svc,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<AnswerAck> {
    Ok(Json(svc.submit_answer(&SessionId::new(id), body?.0)?))
}

async fn get_document(State(svc): Svc, Path(doc_id): Path<String>) -> ApiResult<Document> {
    Ok(Json(svc.get_document(&doc_id)?))
}

pub fn router(service: Arc<CompanionService>) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/query", post(submit_query))
        .route("/session/{id}/click", post(click_result))
        .route("/session/{id}/return", post(return_to_serp))
        .route("/session/{id}/heartbeat", post(heartbeat))
        .route("/session/{id}/tip", post(tip_interaction))
        .route("/session/{id}/answer", post(submit_answer))
        .route("/doc/{doc_id}", get(get_document))
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Arc<CompanionService>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own thread and runtime. Dropping it shuts the
/// server down.
pub struct RunningServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    /// Binds `bind` (port 0 picks a free port) before returning, so the
    /// server accepts connections as soon as this returns.
    pub fn start(service: Arc<CompanionService>, bind: &str) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve(service, listener, async {
                let _ = stopped.await;
            }))
        });
        Ok(Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
