//! Static bearer tokens mapped to users and capabilities.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use axum::http::header::AUTHORIZATION;
use axum::http::HeaderMap;
use casegraph_core::config::{Capability, TokenGrant};
use casegraph_core::schema::Actor;
use rand::Rng;

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiSession {
    /// Random per token and process.
    pub session: String,
    pub actor: Actor,
    pub capabilities: BTreeSet<Capability>,
}

impl ApiSession {
    /// Admin holds every capability.
    pub fn allows(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap) || self.capabilities.contains(&Capability::Admin)
    }

    pub fn require(&self, cap: Capability) -> Result<(), ApiError> {
        if self.allows(cap) {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("{} lacks the {cap} capability", self.actor.id))
                .with_details(serde_json::json!({ "required": cap })))
        }
    }

    /// Hidden items are shown only to sessions that may review.
    pub fn may_see_hidden(&self, include_hidden: bool) -> Result<bool, ApiError> {
        if include_hidden {
            self.require(Capability::Review)?;
        }
        Ok(include_hidden)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    sessions: HashMap<String, ApiSession>,
}

fn session_id() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    hex::encode(bytes)
}

impl TokenTable {
    pub fn from_grants(grants: &BTreeMap<String, TokenGrant>) -> Self {
        let sessions = grants
            .iter()
            .map(|(token, grant)| {
                (
                    token.clone(),
                    ApiSession {
                        session: session_id(),
                        actor: Actor::user(&grant.user),
                        capabilities: grant.capabilities.clone(),
                    },
                )
            })
            .collect();
        TokenTable { sessions }
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn authenticate(&self, headers: &HeaderMap) -> Result<ApiSession, ApiError> {
        let value = headers
            .get(AUTHORIZATION)
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| ApiError::unauthorized("malformed authorization header"))?;
        let token = value
            .strip_prefix("Bearer ")
            .ok_or_else(|| ApiError::unauthorized("expected a bearer token"))?
            .trim();
        self.sessions
            .get(token)
            .cloned()
            .ok_or_else(|| ApiError::unauthorized("unknown token"))
    }
}

/// A fresh random token, for a first start without a token table.
pub fn generate_token() -> String {
    let bytes: [u8; 24] = rand::rng().random();
    hex::encode(bytes)
}
