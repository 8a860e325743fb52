use std::collections::{BTreeSet, HashSet};

use crate::ids::ItemId;
use crate::store::GraphState;

use super::{ProvenanceEntry, ProvenanceError};

/// Entries touching `item`, plus the full history of every document it is
/// attributed to, followed transitively. Ordered by seq.
pub fn trace(
    state: &GraphState,
    entries: &[ProvenanceEntry],
    item: ItemId,
) -> Result<Vec<ProvenanceEntry>, ProvenanceError> {
    if !state.contains(item) {
        return Err(ProvenanceError::UnknownItem(item));
    }
    let mut seqs = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut pending = vec![item];
    while let Some(current) = pending.pop() {
        if !seen.insert(current) {
            continue;
        }
        seqs.extend(state.touching_seqs(current).iter().copied());
        if let Some(node) = state.node(current) {
            pending.extend(node.source_documents());
        } else if let Some(edge) = state.edge(current) {
            pending.extend(edge.attribution.document);
        }
    }
    Ok(seqs
        .into_iter()
        .filter_map(|seq| entries.get(seq as usize).cloned())
        .collect())
}
