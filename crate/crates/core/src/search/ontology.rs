use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::normalize_label;

const SAMPLE: &str = include_str!("../../data/sample_ontology.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Synonym,
    Hyponym,
    Hypernym,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Synonym => "synonym",
            Relation::Hyponym => "hyponym",
            Relation::Hypernym => "hypernym",
        })
    }
}

/// `to` is a `rel` of `from`: `accommodation -hyponym-> hut`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OntologyLink {
    pub from: String,
    pub rel: Relation,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OntologyEdit {
    AddConcept { term: String },
    RemoveConcept { term: String },
    AddLink(OntologyLink),
    RemoveLink(OntologyLink),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("concept {0:?} already exists")]
    DuplicateConcept(String),
    #[error("concept {term:?} still has {links} link(s); remove them first")]
    LiveLinks { term: String, links: usize },
    #[error("self-link on {0:?}")]
    SelfLink(String),
    #[error("link {0} -{1}-> {2} does not exist")]
    UnknownLink(String, Relation, String),
    #[error("empty concept")]
    EmptyConcept,
    #[error("ontology file: {0}")]
    File(String),
}

/// One term reached by expansion. `path` runs from the first step after the
/// query to `term`, so its length equals `depth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub term: String,
    pub depth: usize,
    pub path: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct OntologyFile {
    concepts: Vec<String>,
    #[serde(default)]
    links: Vec<OntologyLink>,
}

/// An immutable ontology version. Edits produce a new value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OntologyGraph {
    concepts: BTreeSet<String>,
    links: BTreeSet<OntologyLink>,
    adjacent: BTreeMap<String, BTreeSet<String>>,
    version: u64,
}

impl OntologyGraph {
    pub fn sample() -> Self {
        Self::from_json(SAMPLE).expect("shipped sample ontology is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, OntologyError> {
        let file: OntologyFile = serde_json::from_str(json).map_err(|e| OntologyError::File(e.to_string()))?;
        let mut graph = OntologyGraph::default();
        for term in file.concepts {
            graph.insert_concept(&term)?;
        }
        for link in file.links {
            graph.insert_link(link)?;
        }
        Ok(graph)
    }

    pub fn load(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = OntologyFile {
            concepts: self.concepts.iter().cloned().collect(),
            links: self.links.iter().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(String::as_str)
    }

    pub fn links(&self) -> impl Iterator<Item = &OntologyLink> {
        self.links.iter()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.concepts.contains(&normalize_label(term))
    }

    /// Returns the next version with `edit` applied.
    pub fn apply(&self, edit: &OntologyEdit) -> Result<OntologyGraph, OntologyError> {
        let mut next = self.clone();
        match edit {
            OntologyEdit::AddConcept { term } => next.insert_concept(term)?,
            OntologyEdit::RemoveConcept { term } => {
                let term = normalize_label(term);
                if !next.concepts.contains(&term) {
                    return Err(OntologyError::UnknownConcept(term));
                }
                let links = next.links.iter().filter(|l| l.from == term || l.to == term).count();
                if links > 0 {
                    return Err(OntologyError::LiveLinks { term, links });
                }
                next.concepts.remove(&term);
            }
            OntologyEdit::AddLink(link) => next.insert_link(link.clone())?,
            OntologyEdit::RemoveLink(link) => {
                let link = normalized(link);
                if !next.links.remove(&link) {
                    return Err(OntologyError::UnknownLink(link.from, link.rel, link.to));
                }
                if link.rel == Relation::Synonym {
                    next.links.remove(&OntologyLink {
                        from: link.to.clone(),
                        rel: Relation::Synonym,
                        to: link.from.clone(),
                    });
                }
                next.rebuild_adjacency();
            }
        }
        next.version = self.version + 1;
        Ok(next)
    }

    fn insert_concept(&mut self, term: &str) -> Result<(), OntologyError> {
        let term = normalize_label(term);
        if term.is_empty() {
            return Err(OntologyError::EmptyConcept);
        }
        if !self.concepts.insert(term.clone()) {
            return Err(OntologyError::DuplicateConcept(term));
        }
        Ok(())
    }

    fn insert_link(&mut self, link: OntologyLink) -> Result<(), OntologyError> {
        let link = normalized(&link);
        for end in [&link.from, &link.to] {
            if !self.concepts.contains(end) {
                return Err(OntologyError::UnknownConcept(end.clone()));
            }
        }
        if link.from == link.to {
            return Err(OntologyError::SelfLink(link.from));
        }
        if link.rel == Relation::Synonym {
            self.links.insert(OntologyLink {
                from: link.to.clone(),
                rel: Relation::Synonym,
                to: link.from.clone(),
            });
        }
        self.adjacent.entry(link.from.clone()).or_default().insert(link.to.clone());
        self.adjacent.entry(link.to.clone()).or_default().insert(link.from.clone());
        self.links.insert(link);
        Ok(())
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacent.clear();
        for link in &self.links {
            self.adjacent.entry(link.from.clone()).or_default().insert(link.to.clone());
            self.adjacent.entry(link.to.clone()).or_default().insert(link.from.clone());
        }
    }

    /// Concepts one step away, in either link direction.
    pub fn neighbors(&self, term: &str) -> impl Iterator<Item = &str> {
        self.adjacent.get(term).into_iter().flatten().map(String::as_str)
    }

    /// Breadth-first closure around `term` up to `max_depth` steps. Each term
    /// appears once, at its minimal depth; depth 0 is the query itself.
    pub fn expand(&self, term: &str, max_depth: usize) -> Vec<Expansion> {
        let start = normalize_label(term);
        let mut out = vec![Expansion {
            term: start.clone(),
            depth: 0,
            path: Vec::new(),
        }];
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(index) = queue.pop_front() {
            let (current, depth, path) = {
                let e = &out[index];
                (e.term.clone(), e.depth, e.path.clone())
            };
            if depth == max_depth {
                continue;
            }
            for next in self.neighbors(&current) {
                if seen.insert(next.to_string()) {
                    let mut next_path = path.clone();
                    next_path.push(next.to_string());
                    out.push(Expansion {
                        term: next.to_string(),
                        depth: depth + 1,
                        path: next_path,
                    });
                    queue.push_back(out.len() - 1);
                }
            }
        }
        out
    }
}

fn normalized(link: &OntologyLink) -> OntologyLink {
    OntologyLink {
        from: normalize_label(&link.from),
        rel: link.rel,
        to: normalize_label(&link.to),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(from: &str, rel: Relation, to: &str) -> OntologyLink {
        OntologyLink {
            from: from.into(),
            rel,
            to: to.into(),
        }
    }

    #[test]
    fn sample_expands_accommodation() {
        let onto = OntologyGraph::sample();
        let hits: BTreeMap<String, usize> = onto
            .expand("accommodation", 1)
            .into_iter()
            .map(|e| (e.term, e.depth))
            .collect();
        for term in ["hut", "hotel", "cottage"] {
            assert_eq!(hits.get(term), Some(&1), "{term}");
        }
        assert_eq!(hits.get("accommodation"), Some(&0));
    }

    #[test]
    fn depth_zero_is_only_the_term() {
        let onto = OntologyGraph::sample();
        assert_eq!(
            onto.expand("Accommodation", 0),
            vec![Expansion {
                term: "accommodation".into(),
                depth: 0,
                path: vec![]
            }]
        );
        assert_eq!(onto.expand("zeppelin", 3).len(), 1);
    }

    #[test]
    fn synonyms_are_symmetric() {
        let onto = OntologyGraph::default()
            .apply(&OntologyEdit::AddConcept { term: "snow".into() })
            .unwrap()
            .apply(&OntologyEdit::AddConcept { term: "cocaine".into() })
            .unwrap()
            .apply(&OntologyEdit::AddLink(link("snow", Relation::Synonym, "cocaine")))
            .unwrap();
        assert_eq!(onto.version(), 3);
        assert!(onto.links().any(|l| l == &link("cocaine", Relation::Synonym, "snow")));
        assert_eq!(onto.expand("cocaine", 1).len(), 2);
    }

    #[test]
    fn removal_needs_links_gone_first() {
        let onto = OntologyGraph::sample();
        let err = onto
            .apply(&OntologyEdit::RemoveConcept { term: "hut".into() })
            .unwrap_err();
        assert!(matches!(err, OntologyError::LiveLinks { .. }));
        let onto = onto
            .apply(&OntologyEdit::RemoveLink(link("accommodation", Relation::Hyponym, "hut")))
            .unwrap()
            .apply(&OntologyEdit::RemoveLink(link("cabin", Relation::Synonym, "hut")))
            .unwrap()
            .apply(&OntologyEdit::RemoveConcept { term: "hut".into() })
            .unwrap();
        assert!(!onto.contains("hut"));
        assert!(!onto.contains("x"));
        assert!(matches!(
            onto.apply(&OntologyEdit::AddLink(link("hut", Relation::Synonym, "inn"))),
            Err(OntologyError::UnknownConcept(_))
        ));
    }

    #[test]
    fn self_links_rejected() {
        let onto = OntologyGraph::sample();
        assert_eq!(
            onto.apply(&OntologyEdit::AddLink(link("hut", Relation::Synonym, "Hut"))),
            Err(OntologyError::SelfLink("hut".into()))
        );
    }

    /// Shortest path lengths by enumerating every simple path on a diamond.
    #[test]
    fn diamond_reports_minimal_depth_once() {
        let json = r#"{"concepts":["a","b","c","d","e","f"],"links":[
            {"from":"a","rel":"hyponym","to":"b"},{"from":"a","rel":"hyponym","to":"c"},
            {"from":"b","rel":"hyponym","to":"d"},{"from":"c","rel":"hyponym","to":"d"},
            {"from":"d","rel":"hyponym","to":"e"},{"from":"a","rel":"synonym","to":"f"},
            {"from":"f","rel":"hyponym","to":"e"}]}"#;
        let onto = OntologyGraph::from_json(json).unwrap();
        fn all_paths(onto: &OntologyGraph, at: &str, seen: &mut Vec<String>, best: &mut BTreeMap<String, usize>) {
            let depth = seen.len() - 1;
            let entry = best.entry(at.to_string()).or_insert(depth);
            *entry = (*entry).min(depth);
            let next: Vec<String> = onto.neighbors(at).map(String::from).collect();
            for n in next {
                if !seen.contains(&n) {
                    seen.push(n.clone());
                    all_paths(onto, &n, seen, best);
                    seen.pop();
                }
            }
        }
        let mut best = BTreeMap::new();
        all_paths(&onto, "a", &mut vec!["a".to_string()], &mut best);
        let expanded = onto.expand("a", 10);
        assert_eq!(expanded.len(), 6);
        for e in expanded {
            assert_eq!(best[&e.term], e.depth, "{}", e.term);
            assert_eq!(e.path.len(), e.depth);
        }
    }

    #[test]
    fn file_round_trip() {
        let onto = OntologyGraph::sample();
        let again = OntologyGraph::from_json(&onto.to_json()).unwrap();
        assert_eq!(onto, again);
    }
}
