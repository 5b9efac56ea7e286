//! Control API for the cellx operations agent: sessions with streamed turns,
//! approval, station and KPI views, knowledge search and the audit trail.

mod api;
pub mod config;
mod error;
pub mod llm;
mod service;

use std::sync::Arc;
use std::time::Duration;

pub use api::{router, DEFAULT_KPI_WINDOW_S};
pub use config::{ConfigError, ProviderConfig, ServiceConfig};
pub use error::ApiError;
pub use service::{
    provider_factory, ApprovalAck, PendingApproval, ProviderFactory, Service, SessionRecord, StartupError, TurnPhase,
    TurnView,
};

/// Ticks the station every `interval` of wall time, advancing simulated
/// time by the same amount.
pub fn spawn_ticker(service: Arc<Service>, interval: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut timer = tokio::time::interval(interval);
        timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        timer.tick().await;
        loop {
            timer.tick().await;
            let mut st = service.rig().station.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = st.tick(interval.as_secs_f64()) {
                tracing::warn!(error = %e, "station tick failed");
            }
        }
    })
}

/// Binds `cfg.listen` and serves `service` until the process is stopped.
/// `on_bound` receives the bound address before the first request.
pub async fn serve(
    service: Arc<Service>,
    cfg: &ServiceConfig,
    on_bound: impl FnOnce(std::net::SocketAddr),
) -> std::io::Result<()> {
    if cfg.tick_interval_s > 0.0 {
        spawn_ticker(Arc::clone(&service), Duration::from_secs_f64(cfg.tick_interval_s));
    }
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, "control api listening");
    on_bound(addr);
    axum::serve(listener, router(service)).await
}
