use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use casegraph_core::engine::EngineError;
use casegraph_core::orchestration::OrchestrationError;
use casegraph_core::provenance::ProvenanceError;
use casegraph_core::report::ReportError;
use casegraph_core::store::StoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Error body: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                details: Value::Null,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn from_store(e: &StoreError) -> ApiError {
    let message = e.to_string();
    match e {
        StoreError::UnknownItem(id) | StoreError::CenterNotVisible(id) => {
            ApiError::not_found(message).with_details(json!({ "item": id }))
        }
        StoreError::Provenance(ProvenanceError::UnknownItem(id)) => {
            ApiError::not_found(message).with_details(json!({ "item": id }))
        }
        StoreError::AlreadyHidden(id) => {
            ApiError::new(StatusCode::CONFLICT, "conflict", message).with_details(json!({ "item": id }))
        }
        StoreError::ModuleReview(_) | StoreError::ModuleMerge => ApiError::forbidden(message),
        StoreError::Schema(_)
        | StoreError::DanglingEndpoint(_)
        | StoreError::NotAnEdge(_)
        | StoreError::NotANode(_)
        | StoreError::InvalidFilter(_)
        | StoreError::ClusterTooSmall(_)
        | StoreError::MixedClusterTypes(_) => ApiError::bad_request(message),
        _ => ApiError::internal(message),
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match &e {
            EngineError::Store(s) => from_store(s),
            EngineError::Orchestration(o) => match o {
                OrchestrationError::Store(s) => from_store(s),
                OrchestrationError::UnknownItem(_)
                | OrchestrationError::UnknownJob(_)
                | OrchestrationError::UnknownModule(_)
                | OrchestrationError::ActionNotOffered { .. } => ApiError::not_found(message),
                OrchestrationError::NoPriorRun { .. } => ApiError::new(StatusCode::CONFLICT, "conflict", message),
                OrchestrationError::Module(_) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "module_failed", message)
                }
                _ => ApiError::internal(message),
            },
            EngineError::Report(ReportError::UnknownItems(ids)) => {
                ApiError::not_found(message).with_details(json!({ "unknown": ids }))
            }
            EngineError::Report(ReportError::EmptySelection) => ApiError::bad_request(message),
            EngineError::Schema(_)
            | EngineError::Ontology(_)
            | EngineError::Search(_)
            | EngineError::Layout(_)
            | EngineError::NotADocument(_) => ApiError::bad_request(message),
            EngineError::NoText(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_text", message),
            _ => ApiError::internal(message),
        }
    }
}
