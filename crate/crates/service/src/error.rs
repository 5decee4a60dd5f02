use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use scftwin_core::ledger::SubmitError;
use scftwin_core::platform::PlatformError;
use serde_json::json;

/// Error response: `{"error": <code>, "message": <text>}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into() }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or unknown bearer token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "PermissionDenied", message)
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedBody", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn from_platform(e: PlatformError) -> Self {
        match e {
            PlatformError::Submit(SubmitError::PermissionDenied(m)) => Self::forbidden(m),
            PlatformError::Submit(SubmitError::InvalidSignature) => Self::malformed("invalid signature"),
            PlatformError::Submit(SubmitError::DuplicateTx(id)) => {
                Self::new(StatusCode::CONFLICT, "DuplicateTx", format!("transaction {id} was already submitted"))
            }
            PlatformError::Submit(SubmitError::Rejected(c)) => Self::new(StatusCode::CONFLICT, c.code(), c.to_string()),
            PlatformError::UnknownMember(m) => Self::forbidden(format!("{m} is not a network member")),
            other => Self::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}
