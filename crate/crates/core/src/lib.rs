//! Case-graph engine for investigative link analysis.
//!
//! Everything known about a case lives in one typed graph ([`store`]) that is
//! a pure fold over a hash-chained provenance log ([`provenance`]). Analysis
//! modules enrich the graph in cascades ([`orchestration`], [`ner`]); the
//! graph is explored through filtered views, search and layout.

pub mod canonical;
pub mod clock;
pub mod config;
pub mod engine;
pub mod fixtures;
pub mod ids;
pub mod layout;
pub mod ner;
pub mod orchestration;
pub mod provenance;
pub mod report;
pub mod schema;
pub mod search;
pub mod store;
pub mod text;

pub use clock::Clock;
pub use ids::{ItemId, JobId, RunId};
