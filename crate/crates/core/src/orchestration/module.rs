use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::ids::ItemId;
use crate::provenance::MutationKind;
use crate::schema::{Attributes, ConfidenceGrade, TypePath};
use crate::store::{GraphState, NodeRecord};

/// Fires when a committed mutation of one of `on` touches a node whose type
/// is `type_path` or below it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listener {
    pub type_path: TypePath,
    pub on: Vec<MutationKind>,
}

impl Listener {
    pub fn on_create(type_path: TypePath) -> Self {
        Listener {
            type_path,
            on: vec![MutationKind::CreateNode],
        }
    }

    pub fn matches(&self, node_type: &TypePath, kind: MutationKind) -> bool {
        self.on.contains(&kind) && node_type.starts_with(&self.type_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAction {
    pub name: String,
    pub label: String,
    pub target: TypePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub id: String,
    /// Media-type patterns such as `text/plain` or `audio/*`.
    #[serde(default)]
    pub ingest_types: Vec<String>,
    #[serde(default)]
    pub listeners: Vec<Listener>,
    #[serde(default)]
    pub context_actions: Vec<ContextAction>,
    /// Target type to renderer id.
    #[serde(default)]
    pub preview_handlers: BTreeMap<TypePath, String>,
}

impl ModuleDescriptor {
    pub fn new(id: &str) -> Self {
        ModuleDescriptor {
            id: id.to_string(),
            ingest_types: Vec::new(),
            listeners: Vec::new(),
            context_actions: Vec::new(),
            preview_handlers: BTreeMap::new(),
        }
    }

    pub fn accepts(&self, media_type: &str) -> bool {
        self.ingest_types.iter().any(|p| media_type_matches(p, media_type))
    }
}

/// `*/*`, `type/*` or an exact match, ignoring case and parameters.
pub fn media_type_matches(pattern: &str, media_type: &str) -> bool {
    let essence = |s: &str| s.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    let (pattern, media_type) = (essence(pattern), essence(media_type));
    match pattern.split_once('/') {
        Some(("*", "*")) => true,
        Some((top, "*")) => media_type.split_once('/').is_some_and(|(t, _)| t == top),
        _ => pattern == media_type,
    }
}

/// What a module is asked to analyze.
#[derive(Debug, Clone)]
pub struct RunInput {
    pub trigger: NodeRecord,
    /// Bytes of the trigger's stored object, when it has one.
    pub content: Option<Arc<Vec<u8>>>,
    pub parameters: Json,
    pub depth: u32,
}

impl RunInput {
    pub fn text(&self) -> Option<&str> {
        self.content.as_deref().and_then(|b| std::str::from_utf8(b).ok())
    }
}

/// Reference to a node from inside a [`RunOutput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRef {
    Trigger,
    Node(usize),
    Document(usize),
    Existing(ItemId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedNode {
    #[serde(rename = "type")]
    pub type_path: TypePath,
    pub label: String,
    #[serde(default)]
    pub attributes: Attributes,
}

/// A derived document. Its bytes go to object storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedDocument {
    #[serde(rename = "type")]
    pub type_path: TypePath,
    pub label: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
    #[serde(default)]
    pub attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedEdge {
    pub kind: String,
    pub from: NodeRef,
    pub to: NodeRef,
    #[serde(default)]
    pub grade: Option<ConfidenceGrade>,
    #[serde(default)]
    pub attributes: Attributes,
}

/// Candidates produced by one run. Committed atomically or not at all.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    #[serde(default)]
    pub nodes: Vec<ProposedNode>,
    #[serde(default)]
    pub documents: Vec<ProposedDocument>,
    #[serde(default)]
    pub edges: Vec<ProposedEdge>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModuleError {
    #[error("input rejected: {0}")]
    Input(String),
    #[error("bad parameters: {0}")]
    Parameters(String),
    #[error("module has no action {0:?}")]
    UnknownAction(String),
    #[error("{0}")]
    Failed(String),
}

/// The run contract every analysis module implements.
pub trait AnalysisModule: Send + Sync {
    fn descriptor(&self) -> ModuleDescriptor;

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError>;

    fn context_action(&self, action: &str, item: &NodeRecord, state: &GraphState) -> Result<Json, ModuleError> {
        let _ = (item, state);
        Err(ModuleError::UnknownAction(action.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn media_patterns() {
        assert!(media_type_matches("audio/*", "audio/x-script"));
        assert!(media_type_matches("text/plain", "Text/Plain; charset=utf-8"));
        assert!(media_type_matches("*/*", "image/png"));
        assert!(!media_type_matches("text/*", "audio/wav"));
        assert!(!media_type_matches("text/plain", "text/html"));
    }

    #[test]
    fn listener_matching() {
        let l = Listener::on_create(TypePath::parse("Thing/Document/Transcript").unwrap());
        let t = TypePath::parse("Thing/Document/Transcript").unwrap();
        assert!(l.matches(&t, MutationKind::CreateNode));
        assert!(!l.matches(&t, MutationKind::UpdateNode));
        assert!(!l.matches(&TypePath::parse("Thing/Document").unwrap(), MutationKind::CreateNode));
    }
}
