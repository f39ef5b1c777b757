//! HTTP/JSON facade over `panelpower-core`.
//!
//! Every endpoint answers with an [`ApiEnvelope`]: the request echoed back,
//! then either `result` or `error`, plus any warnings. Handlers are stateless
//! and call straight into the engine.

mod envelope;
mod grid;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use panelpower_core::power::{design_effect, DesignEffect};
use panelpower_core::{presets, Error, PowerResult, Preset, Scenario, VarianceBreakdown};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

pub use envelope::{ApiEnvelope, ApiError, Failure};
pub use grid::{GridOutput, GridPoint, GridRequest, GridRow, SweepParameter, SweepRange, MAX_GRID_POINTS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed CORS origins; `None` allows any origin.
    pub cors_origins: Option<Vec<String>>,
    /// Directory of static assets served for every non-API path.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Body of `/v1/design-effect`: design `a` relative to reference design `b`.
/// The estimator and power query are taken from `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPair {
    pub a: Scenario,
    pub b: Scenario,
}

pub fn router(config: &ServiceConfig) -> Router {
    let cors = match &config.cors_origins {
        None => CorsLayer::permissive(),
        Some(origins) => CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok())))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers(Any),
    };
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/presets", get(list_presets))
        .route("/v1/mde", post(mde))
        .route("/v1/clusters", post(clusters))
        .route("/v1/variance", post(variance))
        .route("/v1/design-effect", post(design_effect_handler))
        .route("/v1/grid", post(grid::handler));
    let app = match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

/// Serve until ctrl-c.
pub async fn serve(listener: TcpListener, config: &ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

async fn health() -> Response {
    envelope::ok(
        serde_json::Value::Null,
        Health { status: "ok".into(), version: VERSION.into() },
        Vec::new(),
    )
}

async fn list_presets() -> Response {
    envelope::ok::<Vec<Preset>>(serde_json::Value::Null, presets(), Vec::new())
}

async fn mde(body: Bytes) -> Response {
    envelope::handle(&body, |s: Scenario| {
        let r = s.mde()?;
        let warnings = r.warnings.clone();
        Ok((r, warnings))
    })
}

async fn clusters(body: Bytes) -> Response {
    envelope::handle(&body, |s: Scenario| -> Result<(PowerResult, Vec<String>), Failure> {
        let target = s.mde_target.ok_or_else(|| {
            Failure::validation("INVALID_PARAMETER", "mde_target is required for a cluster solve", Some("mde_target"))
        })?;
        let r = s.required_clusters(target)?;
        let warnings = r.warnings.clone();
        Ok((r, warnings))
    })
}

async fn variance(body: Bytes) -> Response {
    envelope::handle(&body, |s: Scenario| -> Result<(VarianceBreakdown, Vec<String>), Failure> {
        let design = s.validated()?;
        Ok((panelpower_core::variance(&design, &s.error, &s.estimator)?, Vec::new()))
    })
}

async fn design_effect_handler(body: Bytes) -> Response {
    envelope::handle(&body, |p: DesignPair| -> Result<(DesignEffect, Vec<String>), Failure> {
        let a = p.a.validated()?;
        let b = p.b.validated()?;
        p.a.query.validate()?;
        Ok((design_effect(&a, &b, &p.a.error, &p.b.error, &p.a.estimator, &p.a.query)?, Vec::new()))
    })
}

fn status_for(err: &Error) -> StatusCode {
    if err.is_validation() {
        StatusCode::BAD_REQUEST
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    }
}
