//! WebSocket relay server for collective audience reactions.
//!
//! Each named room runs as its own task around a
//! [`calmrelay_core::RoomEngine`]. Audiences stream samples in; the room ticks
//! at a fixed rate and pushes one serialized frame to every speaker.

pub mod config;
pub mod conn;
pub mod outbox;
pub mod recorder;
pub mod room;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{State, WebSocketUpgrade};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use calmrelay_core::protocol::{SUBPROTOCOL, WS_PATH};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use config::ServerConfig;
pub use room::{Registry, RoomStats};

pub fn router(registry: Arc<Registry>) -> Router {
    let static_dir = registry.config().static_dir.clone();
    let app = Router::new().route(WS_PATH, get(upgrade)).with_state(registry);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(registry): State<Arc<Registry>>) -> Response {
    ws.protocols([SUBPROTOCOL])
        .on_upgrade(move |socket| conn::serve_socket(socket, registry))
}

/// A running server bound to a local address.
pub struct Server {
    pub addr: SocketAddr,
    pub registry: Arc<Registry>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Server {
    /// Binds `config.listen` (port 0 picks a free port) and starts serving.
    pub async fn start(config: ServerConfig) -> anyhow::Result<Server> {
        config.validate()?;
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        let addr = listener.local_addr()?;
        let registry = Registry::new(config);
        let app = router(registry.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        tracing::info!(%addr, "listening");
        Ok(Server {
            addr,
            registry,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}{}", self.addr, WS_PATH)
    }

    /// Runs until the listener fails.
    pub async fn wait(mut self) -> anyhow::Result<()> {
        // dropping the sender would trigger shutdown
        let _keep = self.shutdown.take();
        Ok((&mut self.task).await??)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.task).await;
    }
}
