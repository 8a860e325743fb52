//! HTTP/JSON service over a casegraph engine, plus the `casegraph` CLI.

pub mod auth;
pub mod cli;
pub mod error;
pub mod routes;

pub use auth::{ApiSession, TokenTable};
pub use error::{ApiError, ErrorBody};
pub use routes::{router, AppState};
