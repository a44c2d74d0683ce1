use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use crate::accounts::AccountError;
use crate::engine::EngineError;
use crate::service::ServiceError;

/// An error response: `{"error": code, "message": text}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing or invalid bearer token")
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", "token may not access this resource")
    }

    pub fn rate_limited() -> Self {
        Self::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", "request cap for this token reached; retry next minute")
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code) = match &e {
            ServiceError::UnknownUser(_) => (S::NOT_FOUND, "unknown_user"),
            ServiceError::UnknownFlow(_) => (S::NOT_FOUND, "unknown_flow"),
            ServiceError::UnknownSession(_) => (S::NOT_FOUND, "unknown_session"),
            ServiceError::NoInvocationMatch(_) => (S::BAD_REQUEST, "no_invocation_match"),
            ServiceError::DuplicateSession(_) => (S::CONFLICT, "duplicate_session"),
            ServiceError::BadRequest(_) => (S::BAD_REQUEST, "bad_request"),
            ServiceError::Account(a) => match a {
                AccountError::UnknownUser(_) => (S::NOT_FOUND, "unknown_user"),
                AccountError::AlreadyEnrolled(_) => (S::CONFLICT, "already_enrolled"),
                AccountError::AlreadyPending(_) => (S::CONFLICT, "link_pending"),
                AccountError::AlreadyLinked(_) => (S::CONFLICT, "already_linked"),
                AccountError::BadToken => (S::NOT_FOUND, "bad_link_token"),
                AccountError::ExpiredToken => (S::GONE, "expired_link_token"),
                AccountError::WrongPassword { .. } => (S::FORBIDDEN, "wrong_password"),
                AccountError::TooManyAttempts => (S::FORBIDDEN, "too_many_attempts"),
                AccountError::NonPositiveGoal
                | AccountError::InvalidGoalMode(_)
                | AccountError::InvalidTimezone(_)
                | AccountError::InvalidUserId(_) => (S::BAD_REQUEST, "bad_request"),
                AccountError::Store(_) => (S::INTERNAL_SERVER_ERROR, "store"),
            },
            ServiceError::Engine(en) => match en {
                EngineError::Terminal(_) => (S::GONE, "session_ended"),
                EngineError::InvalidPhase | EngineError::DeadlinePassed { .. } | EngineError::DeadlineNotReached { .. } => {
                    (S::CONFLICT, "invalid_phase")
                }
                EngineError::InvalidFlow(_) | EngineError::FlowMismatch { .. } | EngineError::UnknownQuestion(_) => {
                    (S::INTERNAL_SERVER_ERROR, "engine")
                }
            },
            ServiceError::Store(_) | ServiceError::Replay(_) => (S::INTERNAL_SERVER_ERROR, "store"),
            ServiceError::Schedule(_) => (S::BAD_REQUEST, "bad_schedule"),
        };
        if status.is_server_error() {
            tracing::error!(error = %message, "request failed");
        }
        ApiError::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}
