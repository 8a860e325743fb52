use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ItemId;
use crate::provenance::{Mutation, ProvenanceEntry, ProvenanceError};
use crate::schema::TypePath;

use super::records::{Annotation, EdgeRecord, NodeRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApplyError {
    #[error("entry seq {found} applied out of order (expected {expected})")]
    OutOfOrder { expected: u64, found: u64 },
    #[error("item {0} already exists")]
    Exists(ItemId),
    #[error("item {0} does not exist")]
    Missing(ItemId),
}

impl From<ApplyError> for ProvenanceError {
    fn from(e: ApplyError) -> Self {
        ProvenanceError::Decode {
            seq: 0,
            message: e.to_string(),
        }
    }
}

/// The materialized graph: a pure fold over provenance entries.
///
/// Only `nodes`, `edges`, `annotations`, `next_id`, `applied` and `touches`
/// carry information; the remaining maps are indexes rebuilt from them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphState {
    pub(crate) nodes: BTreeMap<ItemId, NodeRecord>,
    pub(crate) edges: BTreeMap<ItemId, EdgeRecord>,
    pub(crate) annotations: BTreeMap<ItemId, Vec<Annotation>>,
    pub(crate) next_id: u64,
    pub(crate) applied: u64,
    pub(crate) touches: HashMap<ItemId, Vec<u64>>,
    incident: HashMap<ItemId, Vec<ItemId>>,
    dedup: HashMap<(TypePath, String), ItemId>,
    attributed: HashMap<ItemId, BTreeSet<ItemId>>,
}

#[derive(Debug)]
enum Change {
    NodeInserted(ItemId),
    NodeReplaced(Box<NodeRecord>),
    EdgeInserted(ItemId),
    EdgeReplaced(Box<EdgeRecord>),
    AnnotationPushed(ItemId),
}

/// Everything needed to roll one applied mutation back.
#[derive(Debug)]
pub(crate) struct Undo {
    changes: Vec<Change>,
    next_id: u64,
    applied: u64,
    touched: Vec<ItemId>,
}

impl GraphState {
    pub fn node(&self, id: ItemId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: ItemId) -> Option<&EdgeRecord> {
        self.edges.get(&id)
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.nodes.contains_key(&id) || self.edges.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn annotations(&self, item: ItemId) -> &[Annotation] {
        self.annotations.get(&item).map_or(&[], Vec::as_slice)
    }

    /// Edges touching `node`, in insertion order.
    pub fn incident_edges(&self, node: ItemId) -> &[ItemId] {
        self.incident.get(&node).map_or(&[], Vec::as_slice)
    }

    /// The visible node with this dedup key, if any.
    pub fn find_visible(&self, type_path: &TypePath, normalized_label: &str) -> Option<ItemId> {
        self.dedup
            .get(&(type_path.clone(), normalized_label.to_string()))
            .copied()
    }

    /// Nodes carrying an attribution to `document`.
    pub fn attributed_to(&self, document: ItemId) -> impl Iterator<Item = ItemId> + '_ {
        self.attributed.get(&document).into_iter().flatten().copied()
    }

    /// Seqs of entries that touched `item`, ascending.
    pub fn touching_seqs(&self, item: ItemId) -> &[u64] {
        self.touches.get(&item).map_or(&[], Vec::as_slice)
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Number of provenance entries folded into this state.
    pub fn applied_entries(&self) -> u64 {
        self.applied
    }

    pub fn apply_entry(&mut self, entry: &ProvenanceEntry) -> Result<(), ProvenanceError> {
        if entry.seq != self.applied {
            return Err(ApplyError::OutOfOrder {
                expected: self.applied,
                found: entry.seq,
            }
            .into());
        }
        let mutation = entry.decode()?;
        self.apply_mutation(entry.timestamp, &mutation)
            .map_err(|e| ProvenanceError::Decode {
                seq: entry.seq,
                message: e.to_string(),
            })?;
        Ok(())
    }

    pub(crate) fn apply_mutation(&mut self, _at: DateTime<Utc>, mutation: &Mutation) -> Result<Undo, ApplyError> {
        let mut undo = Undo {
            changes: Vec::new(),
            next_id: self.next_id,
            applied: self.applied,
            touched: Vec::new(),
        };
        if let Err(e) = self.apply_inner(mutation, &mut undo) {
            self.rollback(undo);
            return Err(e);
        }
        let seq = self.applied;
        for item in mutation.touched_items() {
            self.touches.entry(item).or_default().push(seq);
            undo.touched.push(item);
        }
        self.applied += 1;
        Ok(undo)
    }

    fn apply_inner(&mut self, mutation: &Mutation, undo: &mut Undo) -> Result<(), ApplyError> {
        match mutation {
            Mutation::CreateNode(node) => {
                if self.contains(node.id) {
                    return Err(ApplyError::Exists(node.id));
                }
                self.index_node(node, true);
                self.nodes.insert(node.id, node.clone());
                self.next_id = self.next_id.max(node.id.0 + 1);
                undo.changes.push(Change::NodeInserted(node.id));
            }
            Mutation::UpdateNode(update) => {
                let old = self.nodes.get(&update.id).cloned().ok_or(ApplyError::Missing(update.id))?;
                let mut new = old.clone();
                if let Some(a) = &update.add_attribution {
                    if !new.attributions.contains(a) {
                        new.attributions.push(a.clone());
                    }
                }
                new.attributes.extend(update.set_attributes.clone());
                self.replace_node(new);
                undo.changes.push(Change::NodeReplaced(Box::new(old)));
            }
            Mutation::CreateEdge(edge) => {
                if self.contains(edge.id) {
                    return Err(ApplyError::Exists(edge.id));
                }
                for end in [edge.from, edge.to] {
                    if !self.nodes.contains_key(&end) {
                        return Err(ApplyError::Missing(end));
                    }
                }
                self.incident.entry(edge.from).or_default().push(edge.id);
                if edge.to != edge.from {
                    self.incident.entry(edge.to).or_default().push(edge.id);
                }
                self.edges.insert(edge.id, edge.clone());
                self.next_id = self.next_id.max(edge.id.0 + 1);
                undo.changes.push(Change::EdgeInserted(edge.id));
            }
            Mutation::UpdateEdge(update) => {
                let edge = self.edges.get_mut(&update.id).ok_or(ApplyError::Missing(update.id))?;
                undo.changes.push(Change::EdgeReplaced(Box::new(edge.clone())));
                edge.attributes.extend(update.set_attributes.clone());
            }
            Mutation::Hide(hide) => {
                if let Some(old) = self.nodes.get(&hide.id).cloned() {
                    let mut new = old.clone();
                    new.hidden = true;
                    new.hidden_reason = Some(hide.reason.clone());
                    self.replace_node(new);
                    undo.changes.push(Change::NodeReplaced(Box::new(old)));
                } else {
                    let edge = self.edges.get_mut(&hide.id).ok_or(ApplyError::Missing(hide.id))?;
                    undo.changes.push(Change::EdgeReplaced(Box::new(edge.clone())));
                    edge.hidden = true;
                    edge.hidden_reason = Some(hide.reason.clone());
                }
            }
            Mutation::Review(review) => {
                let edge = self.edges.get_mut(&review.id).ok_or(ApplyError::Missing(review.id))?;
                undo.changes.push(Change::EdgeReplaced(Box::new(edge.clone())));
                edge.grade = review.grade;
                edge.reviewed = true;
            }
            Mutation::Annotate(annotation) => {
                if !self.contains(annotation.item) {
                    return Err(ApplyError::Missing(annotation.item));
                }
                self.annotations
                    .entry(annotation.item)
                    .or_default()
                    .push(annotation.clone());
                undo.changes.push(Change::AnnotationPushed(annotation.item));
            }
            Mutation::OntologyEdit(_)
            | Mutation::Ingest(_)
            | Mutation::ModuleRun(_)
            | Mutation::ClampGrade(_)
            | Mutation::SearchExecuted(_) => {}
        }
        Ok(())
    }

    pub(crate) fn rollback(&mut self, undo: Undo) {
        for item in undo.touched.iter().rev() {
            if let Some(seqs) = self.touches.get_mut(item) {
                seqs.pop();
                if seqs.is_empty() {
                    self.touches.remove(item);
                }
            }
        }
        for change in undo.changes.into_iter().rev() {
            match change {
                Change::NodeInserted(id) => {
                    if let Some(node) = self.nodes.remove(&id) {
                        self.index_node(&node, false);
                    }
                    self.incident.remove(&id);
                }
                Change::NodeReplaced(old) => self.replace_node(*old),
                Change::EdgeInserted(id) => {
                    if let Some(edge) = self.edges.remove(&id) {
                        for end in [edge.from, edge.to] {
                            if let Some(list) = self.incident.get_mut(&end) {
                                if list.last() == Some(&id) {
                                    list.pop();
                                }
                                if list.is_empty() {
                                    self.incident.remove(&end);
                                }
                            }
                        }
                    }
                }
                Change::EdgeReplaced(old) => {
                    self.edges.insert(old.id, *old);
                }
                Change::AnnotationPushed(item) => {
                    if let Some(list) = self.annotations.get_mut(&item) {
                        list.pop();
                        if list.is_empty() {
                            self.annotations.remove(&item);
                        }
                    }
                }
            }
        }
        self.next_id = undo.next_id;
        self.applied = undo.applied;
    }

    fn replace_node(&mut self, new: NodeRecord) {
        if let Some(current) = self.nodes.get(&new.id).cloned() {
            self.index_node(&current, false);
        }
        self.index_node(&new, true);
        self.nodes.insert(new.id, new);
    }

    fn index_node(&mut self, node: &NodeRecord, add: bool) {
        let key = node.dedup_key();
        for doc in node.source_documents() {
            if add {
                self.attributed.entry(doc).or_default().insert(node.id);
            } else if let Some(set) = self.attributed.get_mut(&doc) {
                set.remove(&node.id);
                if set.is_empty() {
                    self.attributed.remove(&doc);
                }
            }
        }
        if node.hidden {
            return;
        }
        if add {
            self.dedup.entry(key).or_insert(node.id);
        } else if self.dedup.get(&key) == Some(&node.id) {
            self.dedup.remove(&key);
        }
    }

    pub fn to_snapshot(&self) -> StateSnapshot {
        let mut touches: Vec<(ItemId, Vec<u64>)> = self.touches.iter().map(|(k, v)| (*k, v.clone())).collect();
        touches.sort();
        StateSnapshot {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
            annotations: self.annotations.clone(),
            next_id: self.next_id,
            applied: self.applied,
            touches,
        }
    }

    pub fn from_snapshot(snapshot: StateSnapshot) -> Self {
        let mut state = GraphState {
            next_id: snapshot.next_id,
            applied: snapshot.applied,
            annotations: snapshot.annotations,
            touches: snapshot.touches.into_iter().collect(),
            ..GraphState::default()
        };
        for node in snapshot.nodes {
            state.index_node(&node, true);
            state.nodes.insert(node.id, node);
        }
        for edge in snapshot.edges {
            state.incident.entry(edge.from).or_default().push(edge.id);
            if edge.to != edge.from {
                state.incident.entry(edge.to).or_default().push(edge.id);
            }
            state.edges.insert(edge.id, edge);
        }
        state
    }
}

/// Serializable form of [`GraphState`] for fast startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub annotations: BTreeMap<ItemId, Vec<Annotation>>,
    pub next_id: u64,
    pub applied: u64,
    pub touches: Vec<(ItemId, Vec<u64>)>,
}
