use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::{ItemId, JobId, RunId};
use crate::orchestration::ObjectRef;
use crate::schema::{Attributes, ConfidenceGrade};
use crate::search::OntologyEdit;
use crate::store::{Annotation, Attribution, EdgeRecord, NodeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    CreateNode,
    UpdateNode,
    CreateEdge,
    UpdateEdge,
    Hide,
    Review,
    Annotate,
    OntologyEdit,
    Ingest,
    ModuleRun,
    ClampGrade,
    SearchExecuted,
}

impl MutationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MutationKind::CreateNode => "create_node",
            MutationKind::UpdateNode => "update_node",
            MutationKind::CreateEdge => "create_edge",
            MutationKind::UpdateEdge => "update_edge",
            MutationKind::Hide => "hide",
            MutationKind::Review => "review",
            MutationKind::Annotate => "annotate",
            MutationKind::OntologyEdit => "ontology_edit",
            MutationKind::Ingest => "ingest",
            MutationKind::ModuleRun => "module_run",
            MutationKind::ClampGrade => "clamp_grade",
            MutationKind::SearchExecuted => "search_executed",
        }
    }
}

/// The typed content of a provenance entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mutation", content = "payload", rename_all = "snake_case")]
pub enum Mutation {
    CreateNode(NodeRecord),
    UpdateNode(NodeUpdate),
    CreateEdge(EdgeRecord),
    UpdateEdge(EdgeUpdate),
    Hide(HidePayload),
    Review(ReviewPayload),
    Annotate(Annotation),
    OntologyEdit(OntologyEditPayload),
    Ingest(IngestPayload),
    ModuleRun(ModuleRunPayload),
    ClampGrade(ClampPayload),
    SearchExecuted(SearchPayload),
}

impl Mutation {
    pub fn kind(&self) -> MutationKind {
        match self {
            Mutation::CreateNode(_) => MutationKind::CreateNode,
            Mutation::UpdateNode(_) => MutationKind::UpdateNode,
            Mutation::CreateEdge(_) => MutationKind::CreateEdge,
            Mutation::UpdateEdge(_) => MutationKind::UpdateEdge,
            Mutation::Hide(_) => MutationKind::Hide,
            Mutation::Review(_) => MutationKind::Review,
            Mutation::Annotate(_) => MutationKind::Annotate,
            Mutation::OntologyEdit(_) => MutationKind::OntologyEdit,
            Mutation::Ingest(_) => MutationKind::Ingest,
            Mutation::ModuleRun(_) => MutationKind::ModuleRun,
            Mutation::ClampGrade(_) => MutationKind::ClampGrade,
            Mutation::SearchExecuted(_) => MutationKind::SearchExecuted,
        }
    }

    pub(crate) fn split(&self) -> Result<(MutationKind, Value), serde_json::Error> {
        let mut value = serde_json::to_value(self)?;
        let payload = value
            .as_object_mut()
            .and_then(|m| m.remove("payload"))
            .unwrap_or(Value::Null);
        Ok((self.kind(), payload))
    }

    pub(crate) fn join(kind: MutationKind, payload: &Value) -> Result<Mutation, serde_json::Error> {
        serde_json::from_value(serde_json::json!({ "mutation": kind, "payload": payload }))
    }

    /// Items whose history this entry belongs to.
    pub fn touched_items(&self) -> Vec<ItemId> {
        match self {
            Mutation::CreateNode(n) => vec![n.id],
            Mutation::UpdateNode(u) => vec![u.id],
            Mutation::CreateEdge(e) => vec![e.id],
            Mutation::UpdateEdge(u) => vec![u.id],
            Mutation::Hide(h) => vec![h.id],
            Mutation::Review(r) => vec![r.id],
            Mutation::Annotate(a) => vec![a.item],
            Mutation::Ingest(i) => vec![i.document],
            Mutation::ModuleRun(r) => {
                let mut items = vec![r.trigger];
                items.extend(r.produced.iter().copied());
                items
            }
            Mutation::ClampGrade(c) => vec![c.edge],
            Mutation::OntologyEdit(_) | Mutation::SearchExecuted(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeUpdate {
    pub id: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub add_attribution: Option<Attribution>,
    #[serde(default, skip_serializing_if = "Attributes::is_empty")]
    pub set_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeUpdate {
    pub id: ItemId,
    pub set_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HidePayload {
    pub id: ItemId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPayload {
    pub id: ItemId,
    pub grade: ConfidenceGrade,
    pub previous: ConfidenceGrade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampPayload {
    pub edge: ItemId,
    pub requested: ConfidenceGrade,
    pub stored: ConfidenceGrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyEditPayload {
    pub edit: OntologyEdit,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestPayload {
    pub job: JobId,
    pub document: ItemId,
    pub object: ObjectRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
    Dropped,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRunPayload {
    pub run: RunId,
    pub job: JobId,
    pub module: String,
    pub trigger: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_document: Option<ItemId>,
    pub parameters: Value,
    pub parameters_digest: String,
    pub trigger_digest: String,
    pub depth: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub produced: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Search logging keeps the query and modes only, never result sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPayload {
    pub text: String,
    pub modes: Vec<String>,
}
