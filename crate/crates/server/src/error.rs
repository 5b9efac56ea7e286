use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Error body on the wire: `{"error": "<kind>", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown turn {0}")]
    UnknownTurn(String),
    #[error("session busy with {0}")]
    BusySession(String),
    #[error("no turn is waiting for approval")]
    NoPendingApproval,
    #[error("{0}")]
    InvalidPolicyOverride(String),
    #[error("{0}")]
    WindowOutOfRange(String),
    #[error("{0}")]
    MalformedCursor(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    WrongState(String),
    #[error("{0}")]
    ProviderUnavailable(String),
}

impl ApiError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "unknown-session",
            ApiError::UnknownTurn(_) => "unknown-turn",
            ApiError::BusySession(_) => "busy-session",
            ApiError::NoPendingApproval => "no-pending-approval",
            ApiError::InvalidPolicyOverride(_) => "invalid-policy-override",
            ApiError::WindowOutOfRange(_) => "window-out-of-range",
            ApiError::MalformedCursor(_) => "malformed-cursor",
            ApiError::BadRequest(_) => "bad-request",
            ApiError::WrongState(_) => "wrong-state",
            ApiError::ProviderUnavailable(_) => "provider-unavailable",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::UnknownTurn(_) => StatusCode::NOT_FOUND,
            ApiError::BusySession(_) | ApiError::NoPendingApproval | ApiError::WrongState(_) => StatusCode::CONFLICT,
            ApiError::ProviderUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.kind(), "message": self.to_string() }))).into_response()
    }
}
