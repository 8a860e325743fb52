//! Combined exact, substring, fuzzy and ontological search over node labels
//! and document text.

mod fuzzy;
mod ontology;
mod query;

pub use fuzzy::{levenshtein, similarity};
pub use ontology::{Expansion, OntologyEdit, OntologyError, OntologyGraph, OntologyLink, Relation};
pub use query::{
    score, search, Evidence, HitTarget, SearchError, SearchHit, SearchMode, SearchQuery, SearchScope, TextIndex,
    DEFAULT_DECAY, MAX_FUZZY_EDITS, MAX_ONTOLOGY_DEPTH,
};
