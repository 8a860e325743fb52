//! Case reports: the selected items, their provenance traces and the
//! documents they rest on, in one self-contained bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ItemId;
use crate::orchestration::stored_object;
use crate::provenance::{self, Mutation, MutationKind, ProvenanceEntry};
use crate::schema::{ConfidenceGrade, Value};
use crate::store::{EdgeRecord, GraphState, NodeRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("empty selection")]
    EmptySelection,
    #[error("unknown items: {0:?}")]
    UnknownItems(Vec<ItemId>),
    #[error("report rendering: {0}")]
    Render(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub id: ItemId,
    /// "node" or "edge".
    pub kind: String,
    /// Node type path or edge kind.
    pub class: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<ConfidenceGrade>,
    pub hidden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_reason: Option<String>,
    /// Seqs of the entries in this item's trace.
    pub trace: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub id: ItemId,
    pub label: String,
    pub digest: String,
    pub media_type: String,
    /// The entry that created the document node.
    pub created_at_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportSnapshot {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub title: String,
    pub generated_at: DateTime<Utc>,
    pub head_hash: String,
    pub log_length: u64,
    pub selection: Vec<ItemId>,
    pub items: Vec<ReportItem>,
    pub documents: Vec<ReportDocument>,
    pub snapshot: ReportSnapshot,
    /// Every entry referenced by any item trace, by seq.
    pub entries: Vec<ProvenanceEntry>,
}

fn item_summary(state: &GraphState, id: ItemId, trace: Vec<u64>) -> ReportItem {
    if let Some(n) = state.node(id) {
        ReportItem {
            id,
            kind: "node".into(),
            class: n.type_path.to_string(),
            label: n.label.clone(),
            grade: None,
            hidden: n.hidden,
            hidden_reason: n.hidden_reason.clone(),
            trace,
        }
    } else {
        let e = state.edge(id).expect("caller checked the item exists");
        let label = |n: ItemId| state.node(n).map(|n| n.label.clone()).unwrap_or_default();
        ReportItem {
            id,
            kind: "edge".into(),
            class: e.kind.clone(),
            label: format!("{} -> {}", label(e.from), label(e.to)),
            grade: Some(e.grade),
            hidden: e.hidden,
            hidden_reason: e.hidden_reason.clone(),
            trace,
        }
    }
}

/// Assembles a report over `selection`. Hidden items may be selected; they
/// are marked as such.
pub fn build_report(
    state: &GraphState,
    entries: &[ProvenanceEntry],
    selection: &[ItemId],
    title: &str,
    generated_at: DateTime<Utc>,
) -> Result<ReportBundle, ReportError> {
    if selection.is_empty() {
        return Err(ReportError::EmptySelection);
    }
    let selection: Vec<ItemId> = selection.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let unknown: Vec<ItemId> = selection.iter().copied().filter(|id| !state.contains(*id)).collect();
    if !unknown.is_empty() {
        return Err(ReportError::UnknownItems(unknown));
    }

    let mut all: BTreeMap<u64, ProvenanceEntry> = BTreeMap::new();
    let mut items = Vec::with_capacity(selection.len());
    for &id in &selection {
        let trace = provenance::trace(state, entries, id).map_err(|e| ReportError::Render(e.to_string()))?;
        let seqs = trace.iter().map(|e| e.seq).collect();
        for e in trace {
            all.insert(e.seq, e);
        }
        items.push(item_summary(state, id, seqs));
    }

    let mut documents = Vec::new();
    for entry in all.values() {
        if entry.mutation != MutationKind::CreateNode {
            continue;
        }
        let Ok(Mutation::CreateNode(node)) = entry.decode() else { continue };
        if !node.is_document() {
            continue;
        }
        if let Some(object) = stored_object(&node) {
            documents.push(ReportDocument {
                id: node.id,
                label: node.label.clone(),
                digest: object.digest,
                media_type: object.media_type,
                created_at_seq: entry.seq,
            });
        }
    }

    let mut node_ids: BTreeSet<ItemId> = BTreeSet::new();
    let mut edge_ids: BTreeSet<ItemId> = BTreeSet::new();
    for &id in &selection {
        if state.node(id).is_some() {
            node_ids.insert(id);
        } else if let Some(e) = state.edge(id) {
            edge_ids.insert(id);
            node_ids.extend([e.from, e.to]);
        }
    }
    for &n in &node_ids {
        for &e in state.incident_edges(n) {
            let edge = state.edge(e).expect("incident edge");
            if !edge.hidden && node_ids.contains(&edge.from) && node_ids.contains(&edge.to) {
                edge_ids.insert(e);
            }
        }
    }
    let snapshot = ReportSnapshot {
        nodes: node_ids.iter().filter_map(|id| state.node(*id).cloned()).collect(),
        edges: edge_ids.iter().filter_map(|id| state.edge(*id).cloned()).collect(),
    };

    Ok(ReportBundle {
        title: title.to_string(),
        generated_at,
        head_hash: entries
            .last()
            .map(|e| e.entry_hash.clone())
            .unwrap_or_else(|| provenance::GENESIS_HASH.to_string()),
        log_length: entries.len() as u64,
        selection,
        items,
        documents,
        snapshot,
        entries: all.into_values().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportProblem {
    pub item: Option<ItemId>,
    pub message: String,
}

/// Checks a bundle on its own, without the store: entry hashes, chain links
/// between consecutive entries, that every item trace resolves to included
/// entries and starts with the item's creation, that hidden items carry a
/// hide entry, and that every listed document digest is the one recorded
/// at its creation.
pub fn verify_report(bundle: &ReportBundle) -> Vec<ReportProblem> {
    let mut problems = Vec::new();
    let mut fail = |item: Option<ItemId>, message: String| problems.push(ReportProblem { item, message });
    let by_seq: BTreeMap<u64, &ProvenanceEntry> = bundle.entries.iter().map(|e| (e.seq, e)).collect();
    for e in &bundle.entries {
        if e.compute_hash() != e.entry_hash {
            fail(None, format!("entry {} hash does not match its content", e.seq));
        }
        if let Some(next) = by_seq.get(&(e.seq + 1)) {
            if next.prev_hash != e.entry_hash {
                fail(None, format!("entry {} does not chain to entry {}", next.seq, e.seq));
            }
        }
        if e.seq + 1 == bundle.log_length && e.entry_hash != bundle.head_hash {
            fail(None, "head hash differs from the last entry".into());
        }
    }
    for item in &bundle.items {
        let mut decoded = Vec::new();
        for seq in &item.trace {
            match by_seq.get(seq).map(|e| e.decode()) {
                Some(Ok(m)) => decoded.push(m),
                Some(Err(err)) => fail(Some(item.id), format!("entry {seq} does not decode: {err}")),
                None => fail(Some(item.id), format!("trace entry {seq} missing from bundle")),
            }
        }
        let created = decoded.iter().any(|m| match m {
            Mutation::CreateNode(n) => n.id == item.id,
            Mutation::CreateEdge(e) => e.id == item.id,
            _ => false,
        });
        if !created {
            fail(Some(item.id), "no creation entry in trace".into());
        }
        let hide = decoded.iter().any(|m| matches!(m, Mutation::Hide(h) if h.id == item.id));
        if item.hidden && !hide {
            fail(Some(item.id), "marked hidden without a hide entry".into());
        }
    }
    for doc in &bundle.documents {
        let recorded = by_seq.get(&doc.created_at_seq).and_then(|e| match e.decode() {
            Ok(Mutation::CreateNode(n)) if n.id == doc.id => n.attributes.get("object").and_then(Value::as_text).map(String::from),
            _ => None,
        });
        if recorded.as_deref() != Some(doc.digest.as_str()) {
            fail(Some(doc.id), "document digest not backed by its creation entry".into());
        }
    }
    problems
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

impl ReportBundle {
    /// Pretty JSON. Stable for identical inputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ReportError> {
        serde_json::from_str(json).map_err(|e| ReportError::Render(e.to_string()))
    }

    pub fn to_html(&self) -> String {
        let by_seq: BTreeMap<u64, &ProvenanceEntry> = self.entries.iter().map(|e| (e.seq, e)).collect();
        let mut h = String::new();
        let _ = write!(
            h,
            "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\
             <style>body{{font-family:sans-serif}}table{{border-collapse:collapse}}td,th{{border:1px solid #999;padding:2px 6px}}.hidden{{color:#888}}</style>\
             </head><body>\n<h1>{t}</h1>\n<p>Generated {g}. Log length {n}, head hash <code>{head}</code>.</p>\n",
            t = escape(&self.title),
            g = self.generated_at.to_rfc3339(),
            n = self.log_length,
            head = self.head_hash,
        );
        h.push_str("<h2>Items</h2>\n<table><tr><th>Id</th><th>Kind</th><th>Class</th><th>Label</th><th>Grade</th><th>Status</th></tr>\n");
        for item in &self.items {
            let status = if item.hidden {
                format!("hidden ({})", escape(item.hidden_reason.as_deref().unwrap_or("")))
            } else {
                "visible".into()
            };
            let _ = writeln!(
                h,
                "<tr{cls}><td>{id}</td><td>{k}</td><td>{c}</td><td>{l}</td><td>{g}</td><td>{s}</td></tr>",
                cls = if item.hidden { " class=\"hidden\"" } else { "" },
                id = item.id,
                k = item.kind,
                c = escape(&item.class),
                l = escape(&item.label),
                g = item.grade.map(|g| g.to_string()).unwrap_or_default(),
                s = status,
            );
        }
        h.push_str("</table>\n<h2>Documents</h2>\n<table><tr><th>Id</th><th>Label</th><th>Media type</th><th>SHA-256</th></tr>\n");
        for d in &self.documents {
            let _ = writeln!(
                h,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td><code>{}</code></td></tr>",
                d.id,
                escape(&d.label),
                escape(&d.media_type),
                d.digest
            );
        }
        h.push_str("</table>\n<h2>Traces</h2>\n");
        for item in &self.items {
            let _ = writeln!(h, "<h3>{} {}</h3>\n<ol>", item.id, escape(&item.label));
            for seq in &item.trace {
                if let Some(e) = by_seq.get(seq) {
                    let _ = writeln!(
                        h,
                        "<li value=\"{seq}\">{} <b>{}</b> by {} <code>{}</code></li>",
                        e.timestamp.to_rfc3339(),
                        e.mutation.as_str(),
                        escape(&e.actor.to_string()),
                        &e.entry_hash[..16.min(e.entry_hash.len())]
                    );
                }
            }
            h.push_str("</ol>\n");
        }
        h.push_str("</body></html>\n");
        h
    }
}

#[cfg(test)]
mod tests {
    use chrono::TimeZone;

    use super::*;
    use crate::config::EngineConfig;
    use crate::engine::Engine;
    use crate::orchestration::IngestRequest;
    use crate::schema::Actor;

    fn fixed() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
    }

    fn case() -> (Engine, ItemId, ItemId) {
        let mut engine = Engine::open(EngineConfig {
            fixed_timestamp: Some(fixed()),
            ..EngineConfig::default()
        })
        .unwrap();
        let job = engine
            .ingest(
                IngestRequest::new(b"Anna met Bob in Berlin".to_vec(), "text/plain").named("memo.txt"),
                &Actor::user("ana"),
            )
            .unwrap();
        let doc = engine.orchestrator().job(job).unwrap().document;
        let anna = engine.store().state().nodes().find(|n| n.label == "Anna").unwrap().id;
        (engine, doc, anna)
    }

    #[test]
    fn ner_person_trace_covers_the_cascade() {
        let (engine, doc, anna) = case();
        let bundle = engine.report(&[anna], None).unwrap();
        let kinds: Vec<&str> = bundle.entries.iter().map(|e| e.mutation.as_str()).collect();
        for k in ["ingest", "module_run", "create_node"] {
            assert!(kinds.contains(&k), "{k} missing from {kinds:?}");
        }
        assert_eq!(bundle.documents.len(), 1);
        assert_eq!(bundle.documents[0].id, doc);
        assert!(verify_report(&bundle).is_empty());
        let html = bundle.to_html();
        assert!(html.contains(&bundle.documents[0].digest));
        assert!(html.contains("Anna"));
    }

    #[test]
    fn errors() {
        let (engine, ..) = case();
        assert!(matches!(engine.report(&[], None), Err(crate::engine::EngineError::Report(ReportError::EmptySelection))));
        let err = engine.report(&[ItemId(9000), ItemId(9001)], None).unwrap_err();
        assert!(matches!(err, crate::engine::EngineError::Report(ReportError::UnknownItems(ref v)) if v.len() == 2));
    }

    #[test]
    fn hidden_items_are_marked() {
        let (mut engine, _, anna) = case();
        engine.store_mut().hide(anna, &Actor::user("ana"), "wrong person").unwrap();
        let bundle = engine.report(&[anna], None).unwrap();
        assert!(bundle.items[0].hidden);
        assert_eq!(bundle.items[0].hidden_reason.as_deref(), Some("wrong person"));
        assert!(verify_report(&bundle).is_empty());
        assert!(bundle.to_html().contains("wrong person"));
    }

    #[test]
    fn json_is_byte_stable() {
        let (a, _, anna_a) = case();
        let (b, _, anna_b) = case();
        assert_eq!(anna_a, anna_b);
        let ja = a.report(&[anna_a], Some("Case")).unwrap().to_json();
        let jb = b.report(&[anna_b], Some("Case")).unwrap().to_json();
        assert_eq!(ja, jb);
        assert_eq!(ReportBundle::from_json(&ja).unwrap().to_json(), ja);
    }

    #[test]
    fn offline_verification_catches_edits() {
        let (engine, _, anna) = case();
        let bundle = engine.report(&[anna], None).unwrap();

        let mut forged = bundle.clone();
        forged.documents[0].digest = "0".repeat(64);
        assert!(!verify_report(&forged).is_empty());

        let mut forged = bundle.clone();
        let last = forged.entries.len() - 1;
        forged.entries[last].actor = Actor::user("mallory");
        assert!(!verify_report(&forged).is_empty());

        let mut forged = bundle.clone();
        forged.items[0].hidden = true;
        assert!(!verify_report(&forged).is_empty());

        let mut forged = bundle;
        forged.entries.remove(0);
        assert!(!verify_report(&forged).is_empty());
    }

    #[test]
    fn html_escapes_labels() {
        assert_eq!(escape("<b>&\"'"), "&lt;b&gt;&amp;&quot;&#39;");
    }
}
