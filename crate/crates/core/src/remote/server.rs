use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tokio::sync::oneshot;

use super::wire::{top_k_row, ErrorBody, LogitsRequest, LogitsResponse, WireRow};
use crate::oracle::{LogitOracle, OracleError};
use crate::types::TokenSequence;

type SharedOracle = Arc<dyn LogitOracle>;

fn json_line<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let mut text = serde_json::to_string(body).unwrap_or_else(|e| format!(r#"{{"error":"{e}"}}"#));
    text.push('\n');
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    json_line(status, &ErrorBody { error: message.into() })
}

fn oracle_status(err: &OracleError) -> StatusCode {
    match err {
        OracleError::PositionNotMasked(_) | OracleError::PositionOutOfRange { .. } | OracleError::InvalidConfig(_) => {
            StatusCode::BAD_REQUEST
        }
        OracleError::Transport(_) | OracleError::MalformedResponse(_) => StatusCode::BAD_GATEWAY,
        OracleError::InvalidRow { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn metadata(State(oracle): State<SharedOracle>) -> Response {
    match tokio::task::spawn_blocking(move || oracle.metadata()).await {
        Ok(Ok(meta)) => json_line(StatusCode::OK, &meta),
        Ok(Err(e)) => error(oracle_status(&e), e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn answer(oracle: &dyn LogitOracle, req: LogitsRequest) -> Response {
    let seq = match TokenSequence::from_parts(req.token_ids, req.masked, mask_id(oracle)) {
        Ok(seq) => seq,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match oracle.query(&seq, &req.positions, req.mode) {
        Ok(rows) => {
            let rows = rows
                .iter()
                .map(|r| match req.top_k {
                    Some(k) => WireRow::from(&top_k_row(r, k)),
                    None => WireRow::from(r),
                })
                .collect();
            json_line(
                StatusCode::OK,
                &LogitsResponse {
                    request_id: req.request_id,
                    rows,
                },
            )
        }
        Err(e) => error(oracle_status(&e), e.to_string()),
    }
}

fn mask_id(oracle: &dyn LogitOracle) -> u32 {
    oracle.metadata().map(|m| m.mask_token_id).unwrap_or(0)
}

async fn logits(State(oracle): State<SharedOracle>, body: Bytes) -> Response {
    let req: LogitsRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request: {e}")),
    };
    match tokio::task::spawn_blocking(move || answer(oracle.as_ref(), req)).await {
        Ok(resp) => resp,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(oracle: SharedOracle) -> Router {
    Router::new()
        .route("/v1/metadata", get(metadata))
        .route("/v1/logits", post(logits))
        .with_state(oracle)
}

/// A server running on a background thread; dropped or [`shutdown`] stops it.
///
/// [`shutdown`]: ServerHandle::shutdown
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    /// Block until the server exits on its own (it only does so on error).
    pub fn wait(mut self) -> std::io::Result<()> {
        let _keep_running = self.stop.take();
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_io()
        .build()
}

/// Bind `addr` (port 0 picks a free port) and serve `oracle` on a background
/// thread.
pub fn spawn(oracle: SharedOracle, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime()?.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(oracle))
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        thread: Some(thread),
    })
}

/// Serve `oracle` on `addr` until the process exits.
pub fn serve(oracle: SharedOracle, addr: SocketAddr) -> std::io::Result<()> {
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("serving logits on http://{}", listener.local_addr()?);
        axum::serve(listener, router(oracle)).await
    })
}
