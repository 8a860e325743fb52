use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::ItemId;
use crate::schema::{ConfidenceGrade, TypePath};

use super::records::{EdgeRecord, NodeRecord};
use super::state::GraphState;
use super::StoreError;

pub const SAME_AS: &str = "same_as";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeRange {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }
}

/// What a view shows. The default filter shows every visible item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewFilter {
    pub time_range: Option<TimeRange>,
    pub min_grade: Option<ConfidenceGrade>,
    pub cross_match_only: bool,
    pub include_hidden: bool,
    /// Types toggled on; empty means all types.
    pub type_selection: BTreeSet<TypePath>,
}

impl ViewFilter {
    pub fn validate(&self) -> Result<(), StoreError> {
        match self.time_range {
            Some(r) if r.start > r.end => Err(StoreError::InvalidFilter(format!(
                "time range start {} is after end {}",
                r.start, r.end
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasCluster {
    pub representative: ItemId,
    pub members: Vec<ItemId>,
    pub confirming_edges: Vec<ItemId>,
    pub grade: ConfidenceGrade,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphView {
    pub nodes: BTreeSet<ItemId>,
    pub edges: BTreeSet<ItemId>,
    /// Confirmed alias groups to render as one super-node.
    pub clusters: Vec<AliasCluster>,
}

/// Visibility predicates for one filter over one state.
pub struct FilterEval<'a> {
    state: &'a GraphState,
    filter: &'a ViewFilter,
    time_anchored: Option<HashSet<ItemId>>,
    documents_in_range: HashSet<ItemId>,
}

impl<'a> FilterEval<'a> {
    pub fn new(state: &'a GraphState, filter: &'a ViewFilter) -> Self {
        let mut eval = FilterEval {
            state,
            filter,
            time_anchored: None,
            documents_in_range: HashSet::new(),
        };
        if let Some(range) = filter.time_range {
            eval.index_time(range);
        }
        eval
    }

    fn present(&self, hidden: bool) -> bool {
        !hidden || self.filter.include_hidden
    }

    /// Datetime nodes intersecting the range and their direct neighbours, plus
    /// documents whose own timestamp is in range.
    fn index_time(&mut self, range: TimeRange) {
        let mut anchored = HashSet::new();
        for node in self.state.nodes() {
            if !self.present(node.hidden) {
                continue;
            }
            if node.is_datetime() {
                let hit = node
                    .attributes
                    .values()
                    .filter_map(|v| v.as_interval())
                    .any(|i| i.intersects(range.start, range.end));
                if hit {
                    anchored.insert(node.id);
                    for edge_id in self.state.incident_edges(node.id) {
                        let edge = self.state.edge(*edge_id).expect("incident index points at an edge");
                        if self.present(edge.hidden) {
                            anchored.insert(edge.other_end(node.id));
                        }
                    }
                }
            }
            if node.is_document() {
                if let Some(t) = node.attributes.get("timestamp").and_then(|v| v.as_timestamp()) {
                    if range.contains(t) {
                        self.documents_in_range.insert(node.id);
                    }
                }
            }
        }
        self.time_anchored = Some(anchored);
    }

    pub fn node_visible(&self, node: &NodeRecord) -> bool {
        if !self.present(node.hidden) {
            return false;
        }
        if !self.filter.type_selection.is_empty()
            && !self.filter.type_selection.iter().any(|t| node.type_path.starts_with(t))
        {
            return false;
        }
        if let Some(anchored) = &self.time_anchored {
            let in_time = anchored.contains(&node.id)
                || self.documents_in_range.contains(&node.id)
                || node
                    .attributions
                    .iter()
                    .filter_map(|a| a.document)
                    .any(|d| self.documents_in_range.contains(&d));
            if !in_time {
                return false;
            }
        }
        if self.filter.cross_match_only && node.source_documents().len() < 2 {
            return false;
        }
        true
    }

    pub fn node_id_visible(&self, id: ItemId) -> bool {
        self.state.node(id).is_some_and(|n| self.node_visible(n))
    }

    pub fn edge_visible(&self, edge: &EdgeRecord) -> bool {
        self.present(edge.hidden)
            && self.filter.min_grade.is_none_or(|min| edge.grade.at_least(&min))
            && self.node_id_visible(edge.from)
            && self.node_id_visible(edge.to)
    }
}

pub fn apply_filter(state: &GraphState, filter: &ViewFilter) -> Result<GraphView, StoreError> {
    filter.validate()?;
    let eval = FilterEval::new(state, filter);
    let nodes: BTreeSet<ItemId> = state.nodes().filter(|n| eval.node_visible(n)).map(|n| n.id).collect();
    let edges: BTreeSet<ItemId> = state
        .edges()
        .filter(|e| nodes.contains(&e.from) && nodes.contains(&e.to) && eval.edge_visible(e))
        .map(|e| e.id)
        .collect();
    let clusters = clusters_in(state, &nodes, &edges);
    Ok(GraphView { nodes, edges, clusters })
}

/// Nodes within `k` hops of `center` in the filtered subgraph, and every
/// visible edge among them.
pub fn neighborhood(state: &GraphState, center: ItemId, k: usize, filter: &ViewFilter) -> Result<GraphView, StoreError> {
    filter.validate()?;
    let eval = FilterEval::new(state, filter);
    if !eval.node_id_visible(center) {
        return Err(StoreError::CenterNotVisible(center));
    }
    let mut nodes = BTreeSet::from([center]);
    let mut frontier = VecDeque::from([(center, 0usize)]);
    while let Some((node, depth)) = frontier.pop_front() {
        if depth == k {
            continue;
        }
        for edge_id in state.incident_edges(node) {
            let edge = state.edge(*edge_id).expect("incident index points at an edge");
            let next = edge.other_end(node);
            if !nodes.contains(&next) && eval.edge_visible(edge) {
                nodes.insert(next);
                frontier.push_back((next, depth + 1));
            }
        }
    }
    let mut edges = BTreeSet::new();
    for node in &nodes {
        for edge_id in state.incident_edges(*node) {
            let edge = state.edge(*edge_id).expect("incident index points at an edge");
            if nodes.contains(&edge.other_end(*node)) && eval.edge_visible(edge) {
                edges.insert(edge.id);
            }
        }
    }
    let clusters = clusters_in(state, &nodes, &edges);
    Ok(GraphView { nodes, edges, clusters })
}

/// Connected groups over confirmed, visible `same_as` edges.
fn clusters_in(state: &GraphState, nodes: &BTreeSet<ItemId>, edges: &BTreeSet<ItemId>) -> Vec<AliasCluster> {
    let alias_edges: Vec<&EdgeRecord> = edges
        .iter()
        .filter_map(|id| state.edge(*id))
        .filter(|e| e.kind == SAME_AS && e.is_confirmed() && e.from != e.to)
        .collect();
    if alias_edges.is_empty() {
        return Vec::new();
    }
    let mut parent: BTreeMap<ItemId, ItemId> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<ItemId, ItemId>, x: ItemId) -> ItemId {
        let p = *parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = find(parent, p);
        parent.insert(x, root);
        root
    }
    for e in &alias_edges {
        if nodes.contains(&e.from) && nodes.contains(&e.to) {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        }
    }
    let mut groups: BTreeMap<ItemId, (Vec<ItemId>, Vec<ItemId>, ConfidenceGrade)> = BTreeMap::new();
    let members: Vec<ItemId> = parent.keys().copied().collect();
    for m in members {
        let root = find(&mut parent, m);
        groups
            .entry(root)
            .or_insert_with(|| (Vec::new(), Vec::new(), ConfidenceGrade::new(crate::schema::Reliability::A, crate::schema::Credibility::Confirmed)))
            .0
            .push(m);
    }
    for e in &alias_edges {
        let root = find(&mut parent, e.from);
        if let Some(group) = groups.get_mut(&root) {
            group.1.push(e.id);
            group.2 = group.2.meet(&e.grade);
        }
    }
    groups
        .into_values()
        .map(|(members, confirming_edges, grade)| {
            let representative = *members
                .iter()
                .min_by_key(|id| (state.node(**id).map(|n| n.created_at), **id))
                .expect("cluster has members");
            AliasCluster {
                representative,
                members,
                confirming_edges,
                grade,
            }
        })
        .collect()
}
