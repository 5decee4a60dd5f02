use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use scftwin_core::ids::ActorId;
use scftwin_core::ledger::Role;

use crate::error::ApiError;
use crate::AppState;

/// The authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub id: ActorId,
    pub role: Role,
}

impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(ApiError::unauthorized)?;
        let id = state.tokens.get(token).ok_or_else(ApiError::unauthorized)?;
        let role = state.view().network.get(id).map(|n| n.role).ok_or_else(ApiError::unauthorized)?;
        Ok(Principal { id: id.clone(), role })
    }
}
