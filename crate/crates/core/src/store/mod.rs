//! The materialized case graph.
//!
//! [`GraphStore`] owns the provenance log and the state folded from it. All
//! writes go through a [`Txn`], which makes a batch durable before applying it.

mod records;
mod state;
mod txn;
mod view;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::ids::ItemId;
use crate::provenance::{self, ChainStatus, Mutation, ProvenanceEntry, ProvenanceError, ProvenanceLog, ReplayError};
use crate::schema::{Actor, ConfidenceGrade, SchemaError, SchemaRegistry};

pub use records::{
    normalize_label, Annotation, Attribution, Disposition, EdgeCandidate, EdgeRecord, NodeCandidate, NodeRecord,
};
pub use state::{ApplyError, GraphState, StateSnapshot};
pub use txn::Txn;
pub use view::{apply_filter, neighborhood, AliasCluster, FilterEval, GraphView, TimeRange, ViewFilter, SAME_AS};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("edge endpoint {0} does not exist")]
    DanglingEndpoint(ItemId),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("item {0} is already hidden")]
    AlreadyHidden(ItemId),
    #[error("module {0} cannot review items")]
    ModuleReview(String),
    #[error("item {0} is not an edge")]
    NotAnEdge(ItemId),
    #[error("{0} is not a node")]
    NotANode(ItemId),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("center {0} is hidden, filtered out or unknown")]
    CenterNotVisible(ItemId),
    #[error("a cluster needs at least 2 distinct members, got {0}")]
    ClusterTooSmall(usize),
    #[error("cluster members span several first-layer types: {0}")]
    MixedClusterTypes(String),
    #[error("only users can merge clusters")]
    ModuleMerge,
    #[error("snapshot does not match the log: {0}")]
    Snapshot(String),
    #[error("snapshot io: {0}")]
    SnapshotIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upserted {
    pub id: ItemId,
    /// False when an existing node was matched and merged.
    pub created: bool,
}

/// Seqs written by an operation and the items it changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub seqs: Vec<u64>,
    pub items: Vec<ItemId>,
}

impl Receipt {
    fn from_entries(entries: &[ProvenanceEntry], items: Vec<ItemId>) -> Self {
        Receipt {
            seqs: entries.iter().map(|e| e.seq).collect(),
            items,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    head_hash: String,
    state: StateSnapshot,
}

pub struct GraphStore {
    schema: Arc<SchemaRegistry>,
    log: ProvenanceLog,
    state: GraphState,
    clock: Clock,
}

impl std::fmt::Debug for GraphStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphStore")
            .field("nodes", &self.state.node_count())
            .field("edges", &self.state.edge_count())
            .field("log", &self.log)
            .finish()
    }
}

impl GraphStore {
    /// Builds a store by replaying `log`.
    pub fn new(schema: Arc<SchemaRegistry>, log: ProvenanceLog, clock: Clock) -> Result<Self, StoreError> {
        let state = provenance::replay(log.entries(), None)?;
        Ok(GraphStore {
            schema,
            log,
            state,
            clock,
        })
    }

    pub fn in_memory(schema: Arc<SchemaRegistry>) -> Self {
        GraphStore {
            schema,
            log: ProvenanceLog::in_memory(),
            state: GraphState::default(),
            clock: Clock::System,
        }
    }

    /// Opens a file-backed store. A tampered log is refused.
    pub fn open(schema: Arc<SchemaRegistry>, log_path: &Path, clock: Clock) -> Result<Self, StoreError> {
        Self::new(schema, ProvenanceLog::open(log_path)?, clock)
    }

    /// Like [`GraphStore::open`] but starts from a snapshot file when it
    /// matches a prefix of the log, folding only the remaining entries.
    pub fn open_with_snapshot(
        schema: Arc<SchemaRegistry>,
        log_path: &Path,
        snapshot_path: &Path,
        clock: Clock,
    ) -> Result<Self, StoreError> {
        let log = ProvenanceLog::open(log_path)?;
        let file: SnapshotFile = serde_json::from_slice(&std::fs::read(snapshot_path)?)
            .map_err(|e| StoreError::Snapshot(e.to_string()))?;
        let applied = file.state.applied as usize;
        let head = match applied {
            0 => provenance::GENESIS_HASH.to_string(),
            n => log
                .entries()
                .get(n - 1)
                .map(|e| e.entry_hash.clone())
                .ok_or_else(|| StoreError::Snapshot(format!("snapshot covers {n} entries, log has {}", log.len())))?,
        };
        if head != file.head_hash {
            return Err(StoreError::Snapshot(format!(
                "head hash {} differs from log entry hash {head}",
                file.head_hash
            )));
        }
        let mut state = GraphState::from_snapshot(file.state);
        for entry in &log.entries()[applied..] {
            state.apply_entry(entry)?;
        }
        Ok(GraphStore {
            schema,
            log,
            state,
            clock,
        })
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), StoreError> {
        let file = SnapshotFile {
            head_hash: self.log.head_hash(),
            state: self.state.to_snapshot(),
        };
        let bytes = serde_json::to_vec(&file).map_err(|e| StoreError::Snapshot(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn schema(&self) -> &Arc<SchemaRegistry> {
        &self.schema
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn log(&self) -> &ProvenanceLog {
        &self.log
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.clock = clock;
    }

    pub fn verify(&self) -> ChainStatus {
        self.log.verify()
    }

    pub fn node(&self, id: ItemId) -> Option<&NodeRecord> {
        self.state.node(id)
    }

    pub fn edge(&self, id: ItemId) -> Option<&EdgeRecord> {
        self.state.edge(id)
    }

    pub fn begin(&mut self) -> Txn<'_> {
        Txn::new(self)
    }

    pub fn upsert_node(&mut self, candidate: NodeCandidate, actor: &Actor) -> Result<Upserted, StoreError> {
        let mut txn = self.begin();
        let out = txn.upsert_node(candidate, actor)?;
        txn.commit()?;
        Ok(out)
    }

    pub fn upsert_edge(&mut self, candidate: EdgeCandidate, actor: &Actor) -> Result<ItemId, StoreError> {
        let mut txn = self.begin();
        let id = txn.upsert_edge(candidate, actor)?;
        txn.commit()?;
        Ok(id)
    }

    pub fn hide(&mut self, id: ItemId, actor: &Actor, reason: &str) -> Result<Receipt, StoreError> {
        let mut txn = self.begin();
        let items = txn.hide(id, actor, reason)?;
        let entries = txn.commit()?;
        Ok(Receipt::from_entries(&entries, items))
    }

    pub fn review(&mut self, id: ItemId, actor: &Actor, grade: ConfidenceGrade) -> Result<Receipt, StoreError> {
        let mut txn = self.begin();
        txn.review(id, actor, grade)?;
        let entries = txn.commit()?;
        Ok(Receipt::from_entries(&entries, vec![id]))
    }

    pub fn annotate(
        &mut self,
        id: ItemId,
        actor: &Actor,
        comment: &str,
        disposition: Disposition,
    ) -> Result<Receipt, StoreError> {
        let mut txn = self.begin();
        txn.annotate(id, actor, comment, disposition)?;
        let entries = txn.commit()?;
        let mut items: Vec<ItemId> = entries
            .iter()
            .filter(|e| e.mutation == provenance::MutationKind::Hide)
            .filter_map(|e| e.payload.get("id").and_then(|v| serde_json::from_value(v.clone()).ok()))
            .collect();
        if items.is_empty() {
            items.push(id);
        }
        Ok(Receipt::from_entries(&entries, items))
    }

    /// Logs a mutation that carries no graph change of its own, such as a
    /// search or an ontology edit.
    pub fn record(&mut self, actor: &Actor, mutation: Mutation) -> Result<ProvenanceEntry, StoreError> {
        let mut txn = self.begin();
        txn.push(actor, mutation)?;
        let mut entries = txn.commit()?;
        Ok(entries.remove(0))
    }

    /// Confirms that `members` denote one entity by linking each to the
    /// earliest-created member with a user-graded `same_as` edge.
    pub fn merge_cluster(
        &mut self,
        members: &[ItemId],
        actor: &Actor,
        grade: ConfidenceGrade,
    ) -> Result<AliasCluster, StoreError> {
        if !actor.is_user() {
            return Err(StoreError::ModuleMerge);
        }
        let mut ids = members.to_vec();
        ids.sort();
        ids.dedup();
        if ids.len() < 2 {
            return Err(StoreError::ClusterTooSmall(ids.len()));
        }
        let mut records = Vec::with_capacity(ids.len());
        for id in &ids {
            match (self.state.node(*id), self.state.edge(*id)) {
                (Some(node), _) => records.push(node),
                (None, Some(_)) => return Err(StoreError::NotANode(*id)),
                (None, None) => return Err(StoreError::UnknownItem(*id)),
            }
        }
        let layers: std::collections::BTreeSet<String> = records
            .iter()
            .map(|n| n.type_path.first_layer().map_or_else(|| "Thing".to_string(), |p| p.to_string()))
            .collect();
        if layers.len() > 1 {
            return Err(StoreError::MixedClusterTypes(layers.into_iter().collect::<Vec<_>>().join(", ")));
        }
        let representative = records
            .iter()
            .min_by_key(|n| (n.created_at, n.id))
            .map(|n| n.id)
            .expect("at least two members");
        let mut txn = self.begin();
        let mut confirming_edges = Vec::new();
        for member in ids.iter().filter(|m| **m != representative) {
            let edge = txn.upsert_edge(EdgeCandidate::new(SAME_AS, representative, *member).with_grade(grade), actor)?;
            confirming_edges.push(edge);
        }
        txn.commit()?;
        Ok(AliasCluster {
            representative,
            members: ids,
            confirming_edges,
            grade,
        })
    }

    pub fn apply_filter(&self, filter: &ViewFilter) -> Result<GraphView, StoreError> {
        view::apply_filter(&self.state, filter)
    }

    pub fn neighborhood(&self, center: ItemId, k: usize, filter: &ViewFilter) -> Result<GraphView, StoreError> {
        view::neighborhood(&self.state, center, k, filter)
    }

    /// Every entry touching `item` or the documents it derives from.
    pub fn trace(&self, item: ItemId) -> Result<Vec<ProvenanceEntry>, StoreError> {
        Ok(provenance::trace(&self.state, self.log.entries(), item)?)
    }
}
