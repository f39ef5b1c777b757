use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use panelpower_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::status_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        Self { code: e.code().into(), message: e.to_string(), field: e.field().map(Into::into) }
    }
}

/// Response wrapper; exactly one of `result` and `error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope<T> {
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

/// An error with the HTTP status it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub status: StatusCode,
    pub error: ApiError,
}

impl Failure {
    pub fn validation(code: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error: ApiError { code: code.into(), message: message.into(), field: field.map(Into::into) },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { status: status_for(&e), error: ApiError::from(&e) }
    }
}

pub(crate) fn json_response<T: Serialize>(status: StatusCode, body: &ApiEnvelope<T>) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub(crate) fn ok<T: Serialize>(request: Value, result: T, warnings: Vec<String>) -> Response {
    json_response(StatusCode::OK, &ApiEnvelope { request, result: Some(result), warnings, error: None })
}

pub(crate) fn fail(request: Value, failure: Failure) -> Response {
    json_response::<()>(failure.status, &ApiEnvelope { request, result: None, warnings: Vec::new(), error: Some(failure.error) })
}

/// Echo of the raw body: parsed JSON when possible, else the text itself.
pub(crate) fn echo(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(body).into_owned()))
}

pub(crate) fn parse<B: DeserializeOwned>(body: &[u8]) -> Result<B, Failure> {
    serde_json::from_slice(body).map_err(|e| Failure::validation("INVALID_JSON", e.to_string(), None))
}

/// Parse the body, run `f`, and wrap the outcome.
pub(crate) fn handle<B, T, F>(body: &[u8], f: F) -> Response
where
    B: DeserializeOwned,
    T: Serialize,
    F: FnOnce(B) -> Result<(T, Vec<String>), Failure>,
{
    let request = echo(body);
    match parse(body).and_then(f) {
        Ok((result, warnings)) => ok(request, result, warnings),
        Err(failure) => fail(request, failure),
    }
}
