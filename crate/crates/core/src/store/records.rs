use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::ids::ItemId;
use crate::schema::{Actor, Attributes, ConfidenceGrade, TypePath};

/// Where a machine-derived item came from. Either side may be absent for
/// user-created items.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<String>,
}

impl Attribution {
    pub fn none() -> Self {
        Attribution {
            document: None,
            module: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.document.is_none() && self.module.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: ItemId,
    #[serde(rename = "type")]
    pub type_path: TypePath,
    pub label: String,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default)]
    pub attributions: Vec<Attribution>,
    #[serde(default)]
    pub hidden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_reason: Option<String>,
    pub created_by: Actor,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub cascade_depth: u32,
}

impl NodeRecord {
    pub fn dedup_key(&self) -> (TypePath, String) {
        (self.type_path.clone(), normalize_label(&self.label))
    }

    /// Distinct source documents this node is attributed to.
    pub fn source_documents(&self) -> Vec<ItemId> {
        let mut docs: Vec<ItemId> = self.attributions.iter().filter_map(|a| a.document).collect();
        docs.sort();
        docs.dedup();
        docs
    }

    pub fn is_document(&self) -> bool {
        self.type_path.segments().get(1).map(String::as_str) == Some("Document")
    }

    pub fn is_datetime(&self) -> bool {
        self.type_path.segments().get(1).map(String::as_str) == Some("Datetime")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: ItemId,
    pub kind: String,
    pub from: ItemId,
    pub to: ItemId,
    pub grade: ConfidenceGrade,
    pub attribution: Attribution,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default)]
    pub hidden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_reason: Option<String>,
    pub created_by: Actor,
    pub created_at: DateTime<Utc>,
    /// Set once an analyst has confirmed or regraded the edge.
    #[serde(default)]
    pub reviewed: bool,
    #[serde(default)]
    pub cascade_depth: u32,
}

impl EdgeRecord {
    /// User-asserted or user-reviewed.
    pub fn is_confirmed(&self) -> bool {
        self.created_by.is_user() || self.reviewed
    }

    pub fn other_end(&self, node: ItemId) -> ItemId {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    #[default]
    None,
    Flagged,
    Disproved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub item: ItemId,
    pub author: Actor,
    pub comment: String,
    #[serde(default)]
    pub disposition: Disposition,
    pub created_at: DateTime<Utc>,
}

/// A node as proposed by a caller, before id assignment and dedup.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCandidate {
    pub type_path: TypePath,
    pub label: String,
    pub attributes: Attributes,
    pub attribution: Option<Attribution>,
    pub cascade_depth: u32,
}

impl NodeCandidate {
    pub fn new(type_path: TypePath, label: impl Into<String>) -> Self {
        NodeCandidate {
            type_path,
            label: label.into(),
            attributes: Attributes::new(),
            attribution: None,
            cascade_depth: 0,
        }
    }

    pub fn with_attribute(mut self, name: &str, value: crate::schema::Value) -> Self {
        self.attributes.insert(name.to_string(), value);
        self
    }

    pub fn with_attribution(mut self, attribution: Attribution) -> Self {
        self.attribution = Some(attribution);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCandidate {
    pub kind: String,
    pub from: ItemId,
    pub to: ItemId,
    /// Requested grade; defaults to F6 when absent.
    pub grade: Option<ConfidenceGrade>,
    pub attribution: Attribution,
    pub attributes: Attributes,
    pub cascade_depth: u32,
}

impl EdgeCandidate {
    pub fn new(kind: &str, from: ItemId, to: ItemId) -> Self {
        EdgeCandidate {
            kind: kind.to_string(),
            from,
            to,
            grade: None,
            attribution: Attribution::none(),
            attributes: Attributes::new(),
            cascade_depth: 0,
        }
    }

    pub fn with_grade(mut self, grade: ConfidenceGrade) -> Self {
        self.grade = Some(grade);
        self
    }
}

/// Node dedup normalization: NFC, case-fold, whitespace collapse.
pub fn normalize_label(label: &str) -> String {
    let folded: String = label.nfc().flat_map(char::to_lowercase).collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}
