//! Module registry and enrichment cascades.

mod conductor;
pub mod mocks;
mod module;
mod objects;

pub use conductor::{
    content_digest, document_type_for, ActionOffer, IngestJob, IngestRequest, JobStatus, OrchestrationError,
    Orchestrator, OrchestratorConfig, RerunReport, RunRecord, stored_object, DEFAULT_MAX_DEPTH,
};
pub use module::{
    media_type_matches, AnalysisModule, ContextAction, Listener, ModuleDescriptor, ModuleError, NodeRef,
    ProposedDocument, ProposedEdge, ProposedNode, RunInput, RunOutput,
};
pub use objects::{FsObjectStore, MemoryObjectStore, ObjectError, ObjectRef, ObjectStore};
