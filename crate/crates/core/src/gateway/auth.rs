use std::collections::HashMap;
use std::sync::Mutex;

use axum::extract::{FromRequest, FromRequestParts, Query, Request};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::Json;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{ApiError, Gateway};
use crate::time::Timestamp;

/// Who is calling: the operator or one enrolled user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caller {
    Admin,
    User(String),
}

impl Caller {
    /// Users may only touch their own data.
    pub fn check_user(&self, user_id: &str) -> Result<(), ApiError> {
        match self {
            Caller::Admin => Ok(()),
            Caller::User(u) if u == user_id => Ok(()),
            Caller::User(_) => Err(ApiError::forbidden()),
        }
    }

    pub fn require_admin(&self) -> Result<(), ApiError> {
        match self {
            Caller::Admin => Ok(()),
            Caller::User(_) => Err(ApiError::forbidden()),
        }
    }

    pub fn user_id(&self) -> Option<&str> {
        match self {
            Caller::Admin => None,
            Caller::User(u) => Some(u),
        }
    }
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Bearer header, or `?token=` for clients that cannot set headers on a
/// websocket upgrade.
fn token_of(parts: &Parts) -> Option<String> {
    if let Some(h) = parts.headers.get(AUTHORIZATION).and_then(|v| v.to_str().ok()) {
        return h.strip_prefix("Bearer ").map(|t| t.trim().to_string());
    }
    Query::<TokenQuery>::try_from_uri(&parts.uri).ok().and_then(|q| q.0.token)
}

/// Fixed one-minute windows per token.
#[derive(Debug, Default)]
pub(super) struct RateLimiter {
    windows: Mutex<HashMap<String, (i64, u32)>>,
}

impl RateLimiter {
    pub(super) fn admit(&self, token: &str, now: Timestamp, cap: u32) -> bool {
        if cap == 0 {
            return true;
        }
        let window = now.millis().div_euclid(60_000);
        let mut w = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        if w.len() > 10_000 {
            w.retain(|_, (win, _)| *win == window);
        }
        let slot = w.entry(token.to_string()).or_insert((window, 0));
        if slot.0 != window {
            *slot = (window, 0);
        }
        slot.1 += 1;
        slot.1 <= cap
    }
}

impl FromRequestParts<Gateway> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, g: &Gateway) -> Result<Self, ApiError> {
        let token = token_of(parts).filter(|t| !t.is_empty()).ok_or_else(ApiError::unauthenticated)?;
        let caller = if token == g.inner.config.admin_token {
            Caller::Admin
        } else {
            Caller::User(g.inner.service.authenticate(&token).ok_or_else(ApiError::unauthenticated)?)
        };
        if !g.inner.limiter.admit(&token, g.now(), g.inner.config.rate_limit_per_minute) {
            return Err(ApiError::rate_limited());
        }
        Ok(caller)
    }
}

/// `Json` whose rejections are 400s in the gateway's error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let Json(v) = Json::<T>::from_request(req, state).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        Ok(Body(v))
    }
}

/// `Query` with 400 rejections.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        let Query(v) = Query::<T>::try_from_uri(&parts.uri).map_err(|e| ApiError::bad_request(e.body_text()))?;
        Ok(Params(v))
    }
}
