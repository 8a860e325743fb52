use chrono::{DateTime, Utc};

use crate::ids::ItemId;
use crate::provenance::{
    ClampPayload, EntryDraft, HidePayload, Mutation, NodeUpdate, ProvenanceEntry, ReviewPayload,
};
use crate::schema::{Actor, Attributes, ConfidenceGrade};

use super::records::{
    normalize_label, Annotation, Disposition, EdgeCandidate, EdgeRecord, NodeCandidate, NodeRecord,
};
use super::state::{GraphState, Undo};
use super::{GraphStore, StoreError, Upserted};

/// A batch of mutations committed atomically.
///
/// Operations are validated against the state as it would look after the
/// preceding operations of the same batch. On commit the tentative changes are
/// rolled back, the batch is made durable in the provenance log, and only then
/// is it applied to the store by folding the sealed entries. Dropping an
/// uncommitted transaction discards it.
pub struct Txn<'a> {
    store: &'a mut GraphStore,
    drafts: Vec<EntryDraft>,
    undos: Vec<Undo>,
    timestamp: DateTime<Utc>,
}

impl<'a> Txn<'a> {
    pub(super) fn new(store: &'a mut GraphStore) -> Self {
        let timestamp = store.clock.now();
        Txn {
            store,
            drafts: Vec::new(),
            undos: Vec::new(),
            timestamp,
        }
    }

    /// State including this transaction's tentative changes.
    pub fn state(&self) -> &GraphState {
        &self.store.state
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn is_empty(&self) -> bool {
        self.drafts.is_empty()
    }

    /// Id the next created item will receive.
    pub fn peek_next_id(&self) -> ItemId {
        ItemId(self.store.state.next_id)
    }

    /// Appends a mutation to the batch after applying it tentatively.
    pub fn push(&mut self, actor: &Actor, mutation: Mutation) -> Result<(), StoreError> {
        let undo = self.store.state.apply_mutation(self.timestamp, &mutation)?;
        self.undos.push(undo);
        self.drafts.push(EntryDraft {
            timestamp: self.timestamp,
            actor: actor.clone(),
            mutation,
        });
        Ok(())
    }

    pub fn upsert_node(&mut self, candidate: NodeCandidate, actor: &Actor) -> Result<Upserted, StoreError> {
        let schema = self.store.schema.clone();
        if !schema.contains(&candidate.type_path) {
            return Err(crate::schema::SchemaError::UnregisteredType(candidate.type_path).into());
        }
        schema.validate_attributes(&candidate.type_path, &candidate.attributes)?;
        let key = normalize_label(&candidate.label);
        if let Some(existing) = self.state().find_visible(&candidate.type_path, &key) {
            let node = self.state().node(existing).expect("dedup index points at a node");
            let add_attribution = candidate
                .attribution
                .filter(|a| !a.is_empty() && !node.attributions.contains(a));
            let set_attributes: Attributes = candidate
                .attributes
                .into_iter()
                .filter(|(k, _)| !node.attributes.contains_key(k))
                .collect();
            if add_attribution.is_some() || !set_attributes.is_empty() {
                self.push(
                    actor,
                    Mutation::UpdateNode(NodeUpdate {
                        id: existing,
                        add_attribution,
                        set_attributes,
                    }),
                )?;
            }
            return Ok(Upserted {
                id: existing,
                created: false,
            });
        }
        self.create_node(candidate, actor).map(|id| Upserted { id, created: true })
    }

    /// Creates a node without dedup. Used for documents, where every
    /// submission is its own piece of evidence.
    pub fn create_node(&mut self, candidate: NodeCandidate, actor: &Actor) -> Result<ItemId, StoreError> {
        let schema = self.store.schema.clone();
        if !schema.contains(&candidate.type_path) {
            return Err(crate::schema::SchemaError::UnregisteredType(candidate.type_path).into());
        }
        schema.validate_attributes(&candidate.type_path, &candidate.attributes)?;
        let id = self.peek_next_id();
        let node = NodeRecord {
            id,
            type_path: candidate.type_path,
            label: candidate.label,
            attributes: candidate.attributes,
            attributions: candidate.attribution.into_iter().filter(|a| !a.is_empty()).collect(),
            hidden: false,
            hidden_reason: None,
            created_by: actor.clone(),
            created_at: self.timestamp,
            cascade_depth: candidate.cascade_depth,
        };
        self.push(actor, Mutation::CreateNode(node))?;
        Ok(id)
    }

    pub fn upsert_edge(&mut self, candidate: EdgeCandidate, actor: &Actor) -> Result<ItemId, StoreError> {
        let (from_type, to_type) = {
            let state = self.state();
            let from = state.node(candidate.from).ok_or(StoreError::DanglingEndpoint(candidate.from))?;
            let to = state.node(candidate.to).ok_or(StoreError::DanglingEndpoint(candidate.to))?;
            (from.type_path.clone(), to.type_path.clone())
        };
        self.store.schema.check_edge(&candidate.kind, &from_type, &to_type)?;
        let requested = candidate.grade.unwrap_or_default();
        let stored = if actor.is_user() {
            requested
        } else {
            requested.capped_for_automation()
        };
        let id = self.peek_next_id();
        let edge = EdgeRecord {
            id,
            kind: candidate.kind,
            from: candidate.from,
            to: candidate.to,
            grade: stored,
            attribution: candidate.attribution,
            attributes: candidate.attributes,
            hidden: false,
            hidden_reason: None,
            created_by: actor.clone(),
            created_at: self.timestamp,
            reviewed: false,
            cascade_depth: candidate.cascade_depth,
        };
        self.push(actor, Mutation::CreateEdge(edge))?;
        if stored != requested {
            self.push(
                actor,
                Mutation::ClampGrade(ClampPayload {
                    edge: id,
                    requested,
                    stored,
                }),
            )?;
        }
        Ok(id)
    }

    /// Hides an item. A hidden node takes its visible incident edges with it;
    /// a hidden document also hides every node whose attributions now all
    /// point at hidden documents.
    pub fn hide(&mut self, id: ItemId, actor: &Actor, reason: &str) -> Result<Vec<ItemId>, StoreError> {
        match self.item_hidden(id) {
            None => return Err(StoreError::UnknownItem(id)),
            Some(true) => return Err(StoreError::AlreadyHidden(id)),
            Some(false) => {}
        }
        let mut hidden = Vec::new();
        let mut pending = vec![id];
        while let Some(item) = pending.pop() {
            if self.item_hidden(item) != Some(false) {
                continue;
            }
            self.push(
                actor,
                Mutation::Hide(HidePayload {
                    id: item,
                    reason: reason.to_string(),
                }),
            )?;
            hidden.push(item);
            let Some(node) = self.state().node(item) else {
                continue;
            };
            let is_document = node.is_document();
            let edges: Vec<ItemId> = self
                .state()
                .incident_edges(item)
                .iter()
                .copied()
                .filter(|e| self.item_hidden(*e) == Some(false))
                .collect();
            for edge in edges {
                self.push(
                    actor,
                    Mutation::Hide(HidePayload {
                        id: edge,
                        reason: reason.to_string(),
                    }),
                )?;
                hidden.push(edge);
            }
            if is_document {
                let state = self.state();
                let mut orphaned: Vec<ItemId> = state
                    .attributed_to(item)
                    .filter(|n| {
                        let node = state.node(*n).expect("attribution index points at a node");
                        !node.hidden
                            && node
                                .source_documents()
                                .iter()
                                .all(|d| state.node(*d).is_none_or(|doc| doc.hidden))
                    })
                    .collect();
                orphaned.reverse();
                pending.extend(orphaned);
            }
        }
        Ok(hidden)
    }

    fn item_hidden(&self, id: ItemId) -> Option<bool> {
        let state = self.state();
        state
            .node(id)
            .map(|n| n.hidden)
            .or_else(|| state.edge(id).map(|e| e.hidden))
    }

    pub fn review(&mut self, id: ItemId, actor: &Actor, grade: ConfidenceGrade) -> Result<(), StoreError> {
        if !actor.is_user() {
            return Err(StoreError::ModuleReview(actor.id.clone()));
        }
        let previous = match (self.state().edge(id), self.state().node(id)) {
            (Some(edge), _) => edge.grade,
            (None, Some(_)) => return Err(StoreError::NotAnEdge(id)),
            (None, None) => return Err(StoreError::UnknownItem(id)),
        };
        self.push(actor, Mutation::Review(ReviewPayload { id, grade, previous }))
    }

    pub fn annotate(
        &mut self,
        id: ItemId,
        actor: &Actor,
        comment: &str,
        disposition: Disposition,
    ) -> Result<(), StoreError> {
        let hidden = self.item_hidden(id).ok_or(StoreError::UnknownItem(id))?;
        self.push(
            actor,
            Mutation::Annotate(Annotation {
                item: id,
                author: actor.clone(),
                comment: comment.to_string(),
                disposition,
                created_at: self.timestamp,
            }),
        )?;
        if disposition == Disposition::Disproved && !hidden {
            self.hide(id, actor, "disproved")?;
        }
        Ok(())
    }

    /// Makes the batch durable, then applies it. Returns the sealed entries.
    pub fn commit(mut self) -> Result<Vec<ProvenanceEntry>, StoreError> {
        self.rollback();
        let drafts = std::mem::take(&mut self.drafts);
        if drafts.is_empty() {
            return Ok(Vec::new());
        }
        let sealed = self.store.log.append(&drafts)?;
        for entry in &sealed {
            self.store.state.apply_entry(entry)?;
        }
        Ok(sealed)
    }

    fn rollback(&mut self) {
        while let Some(undo) = self.undos.pop() {
            self.store.state.rollback(undo);
        }
    }
}

impl Drop for Txn<'_> {
    fn drop(&mut self) {
        self.rollback();
    }
}
