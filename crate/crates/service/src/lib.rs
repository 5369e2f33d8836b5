//! HTTP service: synthesis plus listening-test sessions over a
//! pre-synthesized stimulus pool.
//!
//! Routes (all JSON unless noted):
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/synthesize` | WAV body, `x-style-embedding` header |
//! | GET/POST | `/api/test/{kind}/session` | new session |
//! | GET | `/api/test/{kind}/{sid}/next` | next item, audio URLs only |
//! | POST | `/api/test/{kind}/{sid}/answer` | `{item_id, choice}` |
//! | GET | `/api/results/{kind}` | aggregate scores |
//! | GET | `/api/health` | |
//! | POST | `/api/models/reload` | reload the model bundle |
//! | GET | `/media/{file}` | WAV |
//!
//! `kind` is `abx`, `preference` or `query_match`.

pub mod api;
pub mod config;
pub mod pool;
pub mod store;

use std::path::{Path, PathBuf};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use pool::TestPool;
pub use store::{AnswerRecord, Session, Store, TestKind};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] mimic_core::Error),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unprocessable: {0}")]
    Unprocessable(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Duplicate(String),
    #[error("gone: {0}")]
    Gone(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
}

impl ServiceError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io { path: path.to_path_buf(), source }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Duplicate(_) => StatusCode::CONFLICT,
            ServiceError::Gone(_) => StatusCode::GONE,
            ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(e) if is_input_error(e) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

fn is_input_error(e: &mimic_core::Error) -> bool {
    match e {
        mimic_core::Error::Invalid(_) => true,
        mimic_core::Error::Stage { source, .. } => is_input_error(source),
        _ => false,
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = config.addr()?;
    let state = AppState::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ServiceError::Config(format!("bind {addr}: {e}")))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))
}
