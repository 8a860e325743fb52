//! Reproducible inputs for demos, benchmarks and tests.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ids::ItemId;
use crate::orchestration::mocks::SCRIPT_MEDIA_TYPE;
use crate::orchestration::IngestRequest;
use crate::schema::{Actor, SchemaRegistry, TypePath};
use crate::store::{EdgeCandidate, GraphStore, NodeCandidate, StoreError};

/// Mock phone recording: four speakers, each naming different entities.
pub const CASCADE_SCRIPT: &str = "\
S1: Anna will meet Bob in Hamburg.
S2: The delivery reaches the harbor on 12.03.2022.
S3: Carla drives the Sprinter van up from Rostock.
S4: Dieter pays in Bitcoin through Westbank Holding.
S1: Bob confirms over Signal.
";

pub fn cascade_request() -> IngestRequest {
    IngestRequest::new(CASCADE_SCRIPT.as_bytes().to_vec(), SCRIPT_MEDIA_TYPE).named("call-0412.wav")
}

const SYNTHETIC_TYPES: [&str; 4] = [
    "Thing/Entity/Person",
    "Thing/Entity/Organization",
    "Thing/Location/City",
    "Thing/Event/Meeting",
];

/// Ids of a generated graph, in creation order.
#[derive(Debug, Clone, Default)]
pub struct SyntheticGraph {
    pub nodes: Vec<ItemId>,
    pub edges: Vec<ItemId>,
}

/// Fills `store` with `nodes` user-created nodes and `edges` `related_to`
/// edges between uniformly drawn distinct endpoints. Writes in batches of
/// `batch` operations per transaction.
pub fn synthetic_graph(
    store: &mut GraphStore,
    nodes: usize,
    edges: usize,
    seed: u64,
    batch: usize,
) -> Result<SyntheticGraph, StoreError> {
    let actor = Actor::user("generator");
    let types: Vec<TypePath> = SYNTHETIC_TYPES
        .iter()
        .map(|t| TypePath::parse(t).expect("built-in type path"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SyntheticGraph::default();
    let batch = batch.max(1);
    for start in (0..nodes).step_by(batch) {
        let mut txn = store.begin();
        for i in start..(start + batch).min(nodes) {
            let ty = types[rng.random_range(0..types.len())].clone();
            out.nodes.push(txn.create_node(NodeCandidate::new(ty, format!("n{i}")), &actor)?);
        }
        txn.commit()?;
    }
    if nodes < 2 {
        return Ok(out);
    }
    for start in (0..edges).step_by(batch) {
        let mut txn = store.begin();
        for _ in start..(start + batch).min(edges) {
            let a = rng.random_range(0..nodes);
            let mut b = rng.random_range(0..nodes - 1);
            if b >= a {
                b += 1;
            }
            let edge = EdgeCandidate::new("related_to", out.nodes[a], out.nodes[b]);
            out.edges.push(txn.upsert_edge(edge, &actor)?);
        }
        txn.commit()?;
    }
    Ok(out)
}

/// In-memory store holding a synthetic graph.
pub fn synthetic_store(nodes: usize, edges: usize, seed: u64) -> (GraphStore, SyntheticGraph) {
    let mut store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
    let graph = synthetic_graph(&mut store, nodes, edges, seed, 10_000).expect("synthetic graph is valid");
    (store, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestration::mocks::parse_script;

    #[test]
    fn script_has_four_speakers() {
        let mut speakers: Vec<_> = parse_script(CASCADE_SCRIPT).into_iter().map(|(s, _)| s).collect();
        speakers.sort();
        speakers.dedup();
        assert_eq!(speakers, ["S1", "S2", "S3", "S4"]);
    }

    #[test]
    fn synthetic_sizes_and_determinism() {
        let (a, ga) = synthetic_store(300, 900, 5);
        let (b, _) = synthetic_store(300, 900, 5);
        assert_eq!(ga.nodes.len(), 300);
        assert_eq!(ga.edges.len(), 900);
        assert_eq!(a.state().edge_count(), 900);
        let ends = |s: &GraphStore| s.state().edges().map(|e| (e.from, e.to)).collect::<Vec<_>>();
        assert_eq!(ends(&a), ends(&b));
        assert!(a.state().edges().all(|e| e.from != e.to));
    }
}
