//! One-parameter sweeps, streamed back as a JSON envelope whose `result`
//! array is written row by row.

use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use panelpower_core::{Error, Estimand, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::envelope::{echo, fail, parse, ApiError, Failure};

pub const MAX_GRID_POINTS: usize = 10_000;
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Rho,
    Psi,
    Icc,
    /// Individuals per cluster per period.
    N,
    /// Total clusters, keeping the allocation shares.
    M,
    MdeTarget,
    Exposure,
    Calendar,
    Alpha,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridOutput {
    Mde,
    Clusters,
}

/// Evenly spaced values from `from` to `to` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub base: Scenario,
    pub parameter: SweepParameter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<SweepRange>,
    /// Defaults to `clusters` when the base has an MDE target, else `mde`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<GridOutput>,
}

impl GridRequest {
    pub fn points(&self) -> Result<Vec<f64>, Failure> {
        let values = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => {
                if r.steps > MAX_GRID_POINTS {
                    return Err(too_large(r.steps));
                }
                match r.steps {
                    0 => Vec::new(),
                    1 => vec![r.from],
                    n => (0..n).map(|i| r.from + (r.to - r.from) * i as f64 / (n - 1) as f64).collect(),
                }
            }
            _ => {
                return Err(Failure::validation(
                    "INVALID_PARAMETER",
                    "give exactly one of `values` and `range`",
                    Some("values"),
                ))
            }
        };
        if values.len() > MAX_GRID_POINTS {
            return Err(too_large(values.len()));
        }
        if values.is_empty() {
            return Err(Failure::validation("INVALID_PARAMETER", "the sweep has no points", Some("values")));
        }
        Ok(values)
    }

    pub fn output(&self) -> GridOutput {
        self.output.unwrap_or(if self.base.mde_target.is_some() { GridOutput::Clusters } else { GridOutput::Mde })
    }
}

fn too_large(n: usize) -> Failure {
    Failure {
        status: StatusCode::PAYLOAD_TOO_LARGE,
        error: ApiError {
            code: "GRID_TOO_LARGE".into(),
            message: format!("{n} grid points requested, at most {MAX_GRID_POINTS} allowed"),
            field: Some("values".into()),
        },
    }
}

/// Headline numbers of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mde: f64,
    #[serde(rename = "M")]
    pub clusters: f64,
    #[serde(rename = "M_continuous", default, skip_serializing_if = "Option::is_none")]
    pub clusters_continuous: Option<f64>,
    #[serde(rename = "M_nearest", default, skip_serializing_if = "Option::is_none")]
    pub clusters_nearest: Option<f64>,
    pub df: f64,
    pub factor: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<GridPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

fn whole(value: f64, what: &str) -> Result<usize, Error> {
    if value >= 1.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidParameter(format!("{what} period {value} is not a positive whole number")))
    }
}

pub fn apply(base: &Scenario, parameter: SweepParameter, value: f64) -> Result<Scenario, Error> {
    let mut s = base.clone();
    match parameter {
        SweepParameter::Rho => s.error.rho = value,
        SweepParameter::Psi => s.error.psi = value,
        SweepParameter::Icc => s.error.icc = value,
        SweepParameter::N => s.design.individuals = value,
        SweepParameter::M => {
            let total = s.design.total_clusters();
            if !(value > 0.0) || total <= 0.0 {
                return Err(Error::InvalidParameter(format!("total clusters {value} must be positive")));
            }
            let scale = value / total;
            s.design.treatment_clusters.iter_mut().for_each(|m| *m *= scale);
            s.design.comparison_clusters.iter_mut().for_each(|m| *m *= scale);
        }
        SweepParameter::MdeTarget => s.mde_target = Some(value),
        SweepParameter::Exposure => s.estimator.estimand = Estimand::Exposure(whole(value, "exposure")?),
        SweepParameter::Calendar => s.estimator.estimand = Estimand::Calendar(whole(value, "calendar")?),
        SweepParameter::Alpha => s.query.alpha = value,
        SweepParameter::Lambda => s.query.lambda = value,
    }
    Ok(s)
}

pub fn evaluate(req: &GridRequest, value: f64) -> Result<(GridPoint, Vec<String>), Error> {
    let s = apply(&req.base, req.parameter, value)?;
    let r = match req.output() {
        GridOutput::Mde => s.mde()?,
        GridOutput::Clusters => {
            let target = s
                .mde_target
                .ok_or_else(|| Error::InvalidParameter("clusters output needs an mde_target".into()))?;
            s.required_clusters(target)?
        }
    };
    let point = GridPoint {
        mde: r.mde,
        clusters: r.clusters,
        clusters_continuous: r.clusters_continuous,
        clusters_nearest: r.clusters_nearest,
        df: r.df,
        factor: r.factor,
        variance: r.variance.total,
    };
    Ok((point, r.warnings))
}

pub fn row(req: &GridRequest, index: usize, value: f64) -> GridRow {
    match evaluate(req, value) {
        Ok((p, _)) => GridRow { index, value, result: Some(p), error: None },
        Err(e) => GridRow { index, value, result: None, error: Some(ApiError::from(&e)) },
    }
}

pub(crate) async fn handler(body: Bytes) -> Response {
    let request = echo(&body);
    let req: GridRequest = match parse(&body) {
        Ok(r) => r,
        Err(f) => return fail(request, f),
    };
    let points = match req.points() {
        Ok(p) => p,
        Err(f) => return fail(request, f),
    };
    if req.output() == GridOutput::Clusters && req.base.mde_target.is_none() && req.parameter != SweepParameter::MdeTarget {
        return fail(
            request,
            Failure::validation("INVALID_PARAMETER", "clusters output needs an mde_target", Some("mde_target")),
        );
    }
    // A broken base design is a request error, not a row error.
    if let Err(e) = req.base.validated().and_then(|_| req.base.error.validate()) {
        return fail(request, Failure::from(e));
    }
    let warnings = evaluate(&req, points[0]).map(|(_, w)| w).unwrap_or_default();

    let head = format!(
        "{{\"request\":{},\"warnings\":{},\"result\":[",
        serde_json::to_string(&request).unwrap_or_else(|_| "null".into()),
        serde_json::to_string(&warnings).unwrap_or_else(|_| "[]".into()),
    );
    let (tx, rx) = mpsc::channel::<Bytes>(16);
    tokio::task::spawn_blocking(move || {
        if tx.blocking_send(Bytes::from(head)).is_err() {
            return;
        }
        for (c, chunk) in points.chunks(CHUNK).enumerate() {
            let rows: Vec<GridRow> =
                chunk.par_iter().enumerate().map(|(i, &v)| row(&req, c * CHUNK + i, v)).collect();
            let mut buf = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                if c > 0 || i > 0 {
                    buf.push(b',');
                }
                // Rows hold only finite numbers, strings and integers.
                serde_json::to_writer(&mut buf, r).expect("grid row serializes");
            }
            if tx.blocking_send(Bytes::from(buf)).is_err() {
                return;
            }
        }
        let _ = tx.blocking_send(Bytes::from_static(b"]}"));
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx)) });
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], Body::from_stream(stream)).into_response()
}
