use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ItemId;
use crate::store::{normalize_label, FilterEval, GraphState, ViewFilter};
use crate::text::{tokenize, Token};

use super::fuzzy::levenshtein;
use super::ontology::OntologyGraph;

pub const DEFAULT_DECAY: f64 = 0.5;
pub const MAX_FUZZY_EDITS: usize = 4;
pub const MAX_ONTOLOGY_DEPTH: usize = 6;

/// Declaration order is the ranking priority on equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Substring,
    Fuzzy,
    Ontological,
}

impl SearchMode {
    pub const ALL: [SearchMode; 4] = [
        SearchMode::Exact,
        SearchMode::Substring,
        SearchMode::Fuzzy,
        SearchMode::Ontological,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Exact => "exact",
            SearchMode::Substring => "substring",
            SearchMode::Fuzzy => "fuzzy",
            SearchMode::Ontological => "ontological",
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchMode {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(SearchMode::Exact),
            "substring" | "sub" => Ok(SearchMode::Substring),
            "fuzzy" => Ok(SearchMode::Fuzzy),
            "ontological" | "onto" => Ok(SearchMode::Ontological),
            other => Err(SearchError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchScope {
    NodeLabels,
    DocumentText,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchQuery {
    pub text: String,
    pub modes: Vec<SearchMode>,
    pub fuzzy_max_edits: usize,
    pub ontology_max_depth: usize,
    pub decay: f64,
    pub scope: SearchScope,
}

impl Default for SearchQuery {
    fn default() -> Self {
        SearchQuery {
            text: String::new(),
            modes: SearchMode::ALL.to_vec(),
            fuzzy_max_edits: 1,
            ontology_max_depth: 2,
            decay: DEFAULT_DECAY,
            scope: SearchScope::Both,
        }
    }
}

impl SearchQuery {
    pub fn new(text: impl Into<String>, modes: &[SearchMode]) -> Self {
        SearchQuery {
            text: text.into(),
            modes: modes.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if normalize_label(&self.text).is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        if self.modes.is_empty() {
            return Err(SearchError::NoModes);
        }
        if self.fuzzy_max_edits > MAX_FUZZY_EDITS {
            return Err(SearchError::TooManyEdits(self.fuzzy_max_edits));
        }
        if self.ontology_max_depth > MAX_ONTOLOGY_DEPTH {
            return Err(SearchError::TooDeep(self.ontology_max_depth));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(SearchError::Decay(self.decay));
        }
        Ok(())
    }

    fn has(&self, mode: SearchMode) -> bool {
        self.modes.contains(&mode)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("empty query")]
    EmptyQuery,
    #[error("no search mode selected")]
    NoModes,
    #[error("unknown search mode {0:?}")]
    UnknownMode(String),
    #[error("fuzzy_max_edits {0} exceeds {MAX_FUZZY_EDITS}")]
    TooManyEdits(usize),
    #[error("ontology_max_depth {0} exceeds {MAX_ONTOLOGY_DEPTH}")]
    TooDeep(usize),
    #[error("decay must lie in (0, 1), got {0}")]
    Decay(f64),
    #[error("evidence does not fit mode {0}")]
    Evidence(SearchMode),
}

/// What a hit points at: a node by its label, or a char span of a
/// document's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HitTarget {
    Node { id: ItemId },
    Span { document: ItemId, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub target: HitTarget,
    pub matched: String,
    pub mode: SearchMode,
    pub score: f64,
    /// Concept path from the query to the matched term; ontological hits only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanation: Vec<String>,
}

/// Per-mode evidence for [`score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence {
    Exact,
    Substring { query_len: usize, label_len: usize },
    Fuzzy { edits: usize, query_len: usize, label_len: usize },
    Ontological { depth: usize, decay: f64 },
}

/// Substring scores are the query's share of the matched label length.
pub fn score(mode: SearchMode, evidence: Evidence) -> Result<f64, SearchError> {
    let bad = || SearchError::Evidence(mode);
    match (mode, evidence) {
        (SearchMode::Exact, Evidence::Exact) => Ok(1.0),
        (SearchMode::Substring, Evidence::Substring { query_len, label_len }) => {
            if query_len == 0 || query_len > label_len {
                return Err(bad());
            }
            Ok(query_len as f64 / label_len as f64)
        }
        (SearchMode::Fuzzy, Evidence::Fuzzy { edits, query_len, label_len }) => {
            let longest = query_len.max(label_len);
            if longest == 0 || edits > longest {
                return Err(bad());
            }
            Ok(1.0 - edits as f64 / longest as f64)
        }
        (SearchMode::Ontological, Evidence::Ontological { depth, decay }) => {
            if !(decay > 0.0 && decay < 1.0) {
                return Err(bad());
            }
            Ok(decay.powi(depth as i32))
        }
        _ => Err(bad()),
    }
}

/// Token index over document text. Derived state: rebuild it from stored
/// objects at any time.
#[derive(Debug, Clone, Default)]
pub struct TextIndex {
    docs: BTreeMap<ItemId, Vec<Token>>,
}

impl TextIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn index_document(&mut self, document: ItemId, text: &str) {
        self.docs.insert(document, tokenize(text));
    }

    pub fn remove(&mut self, document: ItemId) {
        self.docs.remove(&document);
    }

    pub fn contains(&self, document: ItemId) -> bool {
        self.docs.contains_key(&document)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

struct Candidate<'a> {
    target: HitTarget,
    text: &'a str,
}

/// Matches one string: a whole node label, or a window of document tokens
/// joined by single spaces.
fn label_hits(
    query: &SearchQuery,
    norm_query: &str,
    terms: &HashMap<String, Vec<String>>,
    candidate: Candidate<'_>,
    out: &mut Vec<SearchHit>,
) {
    let q_len = norm_query.chars().count();
    let text = candidate.text;
    let t_len = text.chars().count();
    let mut push = |mode, score: f64, matched: &str, explanation: Vec<String>| {
        out.push(SearchHit {
            target: candidate.target,
            matched: matched.to_string(),
            mode,
            score,
            explanation,
        })
    };
    if text == norm_query {
        push(SearchMode::Exact, 1.0, text, Vec::new());
        return;
    }
    if query.has(SearchMode::Substring) && text.contains(norm_query) {
        let s = score(
            SearchMode::Substring,
            Evidence::Substring {
                query_len: q_len,
                label_len: t_len,
            },
        )
        .expect("contained query is shorter");
        push(SearchMode::Substring, s, text, Vec::new());
    }
    if query.has(SearchMode::Fuzzy) && t_len.abs_diff(q_len) <= query.fuzzy_max_edits {
        let edits = levenshtein(norm_query, text);
        if edits <= query.fuzzy_max_edits {
            let s = score(
                SearchMode::Fuzzy,
                Evidence::Fuzzy {
                    edits,
                    query_len: q_len,
                    label_len: t_len,
                },
            )
            .expect("bounded edits");
            push(SearchMode::Fuzzy, s, text, Vec::new());
        }
    }
    if query.has(SearchMode::Ontological) {
        let tokens: Vec<&str> = text.split(' ').collect();
        for i in 0..tokens.len() {
            for j in i + 1..=tokens.len() {
                let window = tokens[i..j].join(" ");
                if let Some(path) = terms.get(&window) {
                    let s = score(
                        SearchMode::Ontological,
                        Evidence::Ontological {
                            depth: path.len() - 1,
                            decay: query.decay,
                        },
                    )
                    .expect("valid decay");
                    push(SearchMode::Ontological, s, &window, path.clone());
                }
            }
        }
    }
}

fn rank(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.mode.cmp(&b.mode))
        .then(a.target.cmp(&b.target))
}

/// Runs a query over the visible part of the graph. A label equal to the
/// query is always reported as an exact hit with score 1.
pub fn search(
    state: &GraphState,
    index: &TextIndex,
    ontology: &OntologyGraph,
    query: &SearchQuery,
    filter: &ViewFilter,
) -> Result<Vec<SearchHit>, SearchError> {
    query.validate()?;
    let norm_query = normalize_label(&query.text);
    let eval = FilterEval::new(state, filter);

    // Expanded terms (depth >= 1) with the path from the query.
    let mut terms: HashMap<String, Vec<String>> = HashMap::new();
    if query.has(SearchMode::Ontological) {
        for e in ontology.expand(&norm_query, query.ontology_max_depth) {
            if e.depth > 0 {
                let mut path = vec![norm_query.clone()];
                path.extend(e.path);
                terms.insert(e.term, path);
            }
        }
    }
    let widest = terms
        .keys()
        .map(|t| t.split(' ').count())
        .chain([norm_query.split(' ').count()])
        .max()
        .unwrap_or(1);

    let mut raw = Vec::new();
    if query.scope != SearchScope::DocumentText {
        for node in state.nodes().filter(|n| eval.node_visible(n)) {
            let label = normalize_label(&node.label);
            label_hits(
                query,
                &norm_query,
                &terms,
                Candidate {
                    target: HitTarget::Node { id: node.id },
                    text: &label,
                },
                &mut raw,
            );
        }
    }
    if query.scope != SearchScope::NodeLabels {
        let q_width = norm_query.split(' ').count();
        for (doc, tokens) in &index.docs {
            if !state.node(*doc).is_some_and(|n| eval.node_visible(n)) {
                continue;
            }
            for i in 0..tokens.len() {
                for width in 1..=widest.min(tokens.len() - i) {
                    let window = &tokens[i..i + width];
                    let norms: Vec<String> = window.iter().map(|t| t.norm.clone()).collect();
                    let text = norms.join(" ");
                    let target = HitTarget::Span {
                        document: *doc,
                        start: window[0].start,
                        end: window[width - 1].end,
                    };
                    let mut hits = Vec::new();
                    // Only the query's own width is compared as a whole;
                    // ontology terms are found by single-window lookup.
                    if width == q_width {
                        label_hits(query, &norm_query, &HashMap::new(), Candidate { target, text: &text }, &mut hits);
                    }
                    if let Some(path) = terms.get(&text) {
                        let s = score(
                            SearchMode::Ontological,
                            Evidence::Ontological {
                                depth: path.len() - 1,
                                decay: query.decay,
                            },
                        )
                        .expect("valid decay");
                        hits.push(SearchHit {
                            target,
                            matched: text.clone(),
                            mode: SearchMode::Ontological,
                            score: s,
                            explanation: path.clone(),
                        });
                    }
                    raw.extend(hits);
                }
            }
        }
    }

    raw.sort_by(|a, b| a.target.cmp(&b.target).then(rank(a, b)));
    raw.dedup_by(|later, first| later.target == first.target);
    raw.sort_by(rank);
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::schema::{Actor, SchemaRegistry, TypePath};
    use crate::search::{OntologyEdit, OntologyLink, Relation};
    use crate::store::{GraphStore, NodeCandidate};

    fn store(labels: &[(&str, &str)]) -> (GraphStore, Vec<ItemId>) {
        let mut s = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
        let u = Actor::user("u");
        let ids = labels
            .iter()
            .map(|(path, label)| {
                s.upsert_node(NodeCandidate::new(TypePath::parse(path).unwrap(), *label), &u)
                    .unwrap()
                    .id
            })
            .collect();
        (s, ids)
    }

    fn run(s: &GraphStore, index: &TextIndex, onto: &OntologyGraph, q: &SearchQuery) -> Vec<SearchHit> {
        search(s.state(), index, onto, q, &ViewFilter::default()).unwrap()
    }

    #[test]
    fn accommodation_finds_lodgings() {
        let (s, ids) = store(&[
            ("Thing/Location", "Hut"),
            ("Thing/Location", "Hotel Adlon"),
            ("Thing/Location", "Cottage"),
            ("Thing/Location", "Harbor"),
        ]);
        let q = SearchQuery::new("accommodation", &[SearchMode::Ontological]);
        let hits = run(&s, &TextIndex::new(), &OntologyGraph::sample(), &q);
        let matched: Vec<&str> = hits.iter().map(|h| h.matched.as_str()).collect();
        for term in ["hut", "hotel", "cottage"] {
            assert!(matched.contains(&term), "{term} in {matched:?}");
        }
        assert!(hits.iter().all(|h| h.target != HitTarget::Node { id: ids[3] }));
        for h in &hits {
            assert_eq!(h.score, 0.5);
            assert_eq!(h.explanation.first().map(String::as_str), Some("accommodation"));
            assert_eq!(h.explanation.last(), Some(&h.matched));
        }
    }

    #[test]
    fn exact_and_fuzzy() {
        let (s, ids) = store(&[("Thing/Location", "Berlin"), ("Thing/Location", "Bern")]);
        let onto = OntologyGraph::sample();
        let hits = run(&s, &TextIndex::new(), &onto, &SearchQuery::new("berlin", &[SearchMode::Exact]));
        assert_eq!(hits.len(), 1);
        assert_eq!((hits[0].target, hits[0].score), (HitTarget::Node { id: ids[0] }, 1.0));

        let mut q = SearchQuery::new("Berlim", &[SearchMode::Fuzzy]);
        let hits = run(&s, &TextIndex::new(), &onto, &q);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - (1.0 - 1.0 / 6.0)).abs() < 1e-12);
        q.fuzzy_max_edits = 0;
        assert!(run(&s, &TextIndex::new(), &onto, &q).is_empty());
    }

    #[test]
    fn substring_ratio_and_ranking() {
        let (s, ids) = store(&[("Thing/Location", "Hamburg Harbor"), ("Thing/Location", "Harbor")]);
        let q = SearchQuery::new("harbor", &[SearchMode::Substring]);
        let hits = run(&s, &TextIndex::new(), &OntologyGraph::sample(), &q);
        assert_eq!(hits[0].target, HitTarget::Node { id: ids[1] });
        assert_eq!(hits[0].mode, SearchMode::Exact);
        assert!((hits[1].score - 6.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn document_text_spans() {
        let (s, ids) = store(&[("Thing/Document/Text", "memo")]);
        let mut index = TextIndex::new();
        index.index_document(ids[0], "They slept in a small hut near the Elbe.");
        let q = SearchQuery::new("accommodation", &[SearchMode::Ontological]);
        let hits = run(&s, &index, &OntologyGraph::sample(), &q);
        assert_eq!(
            hits[0].target,
            HitTarget::Span {
                document: ids[0],
                start: 22,
                end: 25
            }
        );
        let q = SearchQuery {
            scope: SearchScope::NodeLabels,
            ..q
        };
        assert!(run(&s, &index, &OntologyGraph::sample(), &q).is_empty());
    }

    #[test]
    fn hidden_items_are_not_hits() {
        let (mut s, ids) = store(&[("Thing/Location", "Berlin")]);
        s.hide(ids[0], &Actor::user("u"), "test").unwrap();
        let q = SearchQuery::new("Berlin", &SearchMode::ALL);
        assert!(run(&s, &TextIndex::new(), &OntologyGraph::sample(), &q).is_empty());
        let filter = ViewFilter {
            include_hidden: true,
            ..Default::default()
        };
        let hits = search(s.state(), &TextIndex::new(), &OntologyGraph::sample(), &q, &filter).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn codeword_edit_changes_results() {
        let (s, _) = store(&[("Thing/Entity/Misc", "snow")]);
        let q = SearchQuery::new("drugs", &[SearchMode::Ontological]);
        let onto = OntologyGraph::sample();
        let before = run(&s, &TextIndex::new(), &onto, &q);
        assert!(before.iter().all(|h| h.matched != "snow"));
        let onto = onto.apply(&OntologyEdit::AddConcept { term: "snow".into() }).unwrap();
        let onto = onto
            .apply(&OntologyEdit::AddLink(OntologyLink {
                from: "snow".into(),
                rel: Relation::Synonym,
                to: "narcotics".into(),
            }))
            .unwrap_or_else(|_| panic!("sample lacks narcotics"));
        let after = run(&s, &TextIndex::new(), &onto, &q);
        assert!(after.iter().any(|h| h.matched == "snow"));
    }

    #[test]
    fn validation() {
        assert_eq!(SearchQuery::new(" ", &[SearchMode::Exact]).validate(), Err(SearchError::EmptyQuery));
        assert_eq!(SearchQuery::new("a", &[]).validate(), Err(SearchError::NoModes));
        let q = SearchQuery {
            fuzzy_max_edits: 99,
            ..SearchQuery::new("a", &[SearchMode::Fuzzy])
        };
        assert!(q.validate().is_err());
        assert_eq!("onto".parse::<SearchMode>().unwrap(), SearchMode::Ontological);
    }

    #[test]
    fn score_formula() {
        let onto = |depth| score(SearchMode::Ontological, Evidence::Ontological { depth, decay: 0.5 }).unwrap();
        assert_eq!(onto(1), 0.5);
        assert!(onto(1) > onto(2) && onto(2) > onto(3));
        assert_eq!(score(SearchMode::Exact, Evidence::Exact).unwrap(), 1.0);
        assert!(score(SearchMode::Exact, Evidence::Ontological { depth: 0, decay: 0.5 }).is_err());
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec![
            "hut", "hotel", "hostel", "hot", "berlin", "berlim", "bern", "lodging", "car", "cart", "vehicle",
            "harbor", "port", "portal", "money", "cash",
        ])
        .prop_map(String::from)
    }

    proptest! {
        #[test]
        fn enabling_modes_never_loses_hits(
            labels in prop::collection::vec(prop::collection::vec(word(), 1..3), 1..12),
            query in word(),
            base in prop::sample::subsequence(SearchMode::ALL.to_vec(), 1..=4),
            extra in prop::sample::select(SearchMode::ALL.to_vec()),
        ) {
            let labels: Vec<(&str, String)> = labels.into_iter().map(|w| ("Thing/Entity/Misc", w.join(" "))).collect();
            let refs: Vec<(&str, &str)> = labels.iter().map(|(p, l)| (*p, l.as_str())).collect();
            let (s, _) = store(&refs);
            let onto = OntologyGraph::sample();
            let q = SearchQuery { fuzzy_max_edits: 2, ..SearchQuery::new(query, &base) };
            let mut wider = q.clone();
            if !wider.modes.contains(&extra) {
                wider.modes.push(extra);
            }
            let small = run(&s, &TextIndex::new(), &onto, &q);
            let big: HashMap<HitTarget, f64> = run(&s, &TextIndex::new(), &onto, &wider)
                .into_iter().map(|h| (h.target, h.score)).collect();
            for h in small {
                prop_assert!(big.get(&h.target).is_some_and(|&b| b >= h.score));
            }
        }
    }
}
