//! Gazetteer and rule based entity recognition, mention linking, and the
//! span evaluation harness.

mod eval;
mod extract;
mod labels;
mod link;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde_json::{json, Value as Json};

pub use eval::{
    evaluate, import_annotations, AnnotationError, AnnotationRecord, AnnotationSet, EvalError, EvalReport,
    GoldAnnotationSet, LabelScore, LineError, Span,
};
pub use extract::{extract, parse_datetime, Gazetteer, GazetteerError, Mention, PatternToggles};
pub use labels::{NerLabel, UnknownLabel};
pub use link::{link_mentions, mention_attributes, mention_output, EntityMention, MENTION_GRADE};

use crate::orchestration::{
    AnalysisModule, ContextAction, Listener, ModuleDescriptor, ModuleError, RunInput, RunOutput,
};
use crate::schema::TypePath;
use crate::search::similarity;
use crate::store::{normalize_label, GraphState, NodeRecord};

pub const MODULE_ID: &str = "ner";

/// Minimum label similarity for `show_similar_persons`.
const SIMILAR_PERSON_THRESHOLD: f64 = 0.5;

fn tp(s: &str) -> TypePath {
    TypePath::parse(s).expect("built-in type path")
}

/// The analysis-module face of the recognizer. Runs on ingested text and on
/// newly created transcripts and captions.
///
/// Parameters: `{"labels": ["PERSON", ...]}` keeps only the listed labels.
#[derive(Debug, Clone)]
pub struct NerModule {
    gazetteer: Arc<Gazetteer>,
}

impl NerModule {
    pub fn new(gazetteer: Arc<Gazetteer>) -> Self {
        NerModule { gazetteer }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }
}

impl Default for NerModule {
    fn default() -> Self {
        NerModule::new(Arc::new(Gazetteer::sample()))
    }
}

fn label_filter(parameters: &Json) -> Result<Option<BTreeSet<NerLabel>>, ModuleError> {
    match parameters.get("labels") {
        None | Some(Json::Null) => Ok(None),
        Some(Json::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| ModuleError::Parameters("labels must be strings".into()))?
                    .parse::<NerLabel>()
                    .map_err(|e| ModuleError::Parameters(e.to_string()))
            })
            .collect::<Result<_, _>>()
            .map(Some),
        Some(_) => Err(ModuleError::Parameters("labels must be an array".into())),
    }
}

impl AnalysisModule for NerModule {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut d = ModuleDescriptor::new(MODULE_ID);
        d.ingest_types.push("text/*".into());
        d.listeners.push(Listener::on_create(tp("Thing/Document/Transcript")));
        d.listeners.push(Listener::on_create(tp("Thing/Document/Caption")));
        d.context_actions.push(ContextAction {
            name: "show_similar_persons".into(),
            label: "Show similar persons".into(),
            target: tp("Thing/Entity/Person"),
        });
        d
    }

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError> {
        let text = input
            .text()
            .ok_or_else(|| ModuleError::Input("document is not UTF-8 text".into()))?;
        let keep = label_filter(&input.parameters)?;
        let mut mentions = extract(text, &self.gazetteer);
        if let Some(keep) = keep {
            mentions.retain(|m| keep.contains(&m.label));
        }
        Ok(mention_output(&mentions))
    }

    fn context_action(&self, action: &str, item: &NodeRecord, state: &GraphState) -> Result<Json, ModuleError> {
        if action != "show_similar_persons" {
            return Err(ModuleError::UnknownAction(action.into()));
        }
        let person = tp("Thing/Entity/Person");
        let me = normalize_label(&item.label);
        let my_tokens: BTreeSet<&str> = me.split(' ').collect();
        let mut similar: Vec<(f64, &NodeRecord)> = state
            .nodes()
            .filter(|n| n.id != item.id && !n.hidden && n.type_path.starts_with(&person))
            .filter_map(|n| {
                let other = normalize_label(&n.label);
                let tokens: BTreeSet<&str> = other.split(' ').collect();
                let nested = my_tokens.is_subset(&tokens) || tokens.is_subset(&my_tokens);
                let score = similarity(&me, &other);
                (nested || score >= SIMILAR_PERSON_THRESHOLD).then_some((score, n))
            })
            .collect();
        similar.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
        let similar: Vec<Json> = similar
            .into_iter()
            .map(|(score, n)| json!({"id": n.id, "label": n.label, "score": score}))
            .collect();
        Ok(json!({ "person": item.id, "similar": similar }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Actor, SchemaRegistry};
    use crate::store::{GraphStore, NodeCandidate};

    #[test]
    fn module_runs_on_text() {
        let module = NerModule::default();
        let d = module.descriptor();
        assert!(d.accepts("text/plain"));
        assert!(!d.accepts("audio/wav"));
        let mut store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
        let doc = store
            .upsert_node(NodeCandidate::new(tp("Thing/Document/Text"), "memo"), &Actor::user("u"))
            .unwrap()
            .id;
        let input = RunInput {
            trigger: store.node(doc).unwrap().clone(),
            content: Some(Arc::new(b"Anna met Bob in Berlin on 12.03.2022".to_vec())),
            parameters: json!({"labels": ["PERSON"]}),
            depth: 1,
        };
        let out = module.run(&input).unwrap();
        assert_eq!(out.nodes.len(), 2);
        let bad = RunInput {
            parameters: json!({"labels": ["ANIMAL"]}),
            ..input
        };
        assert!(matches!(module.run(&bad), Err(ModuleError::Parameters(_))));
    }

    #[test]
    fn similar_persons() {
        let mut store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
        let u = Actor::user("u");
        let mut add = |label: &str, path: &str| store.upsert_node(NodeCandidate::new(tp(path), label), &u).unwrap().id;
        let anna = add("Anna", "Thing/Entity/Person");
        let adams = add("Anna Adams", "Thing/Entity/Person");
        let ana = add("Ana", "Thing/Entity/Person");
        add("Bob", "Thing/Entity/Person");
        add("Anna", "Thing/Location");
        let state = store.state();
        let out = NerModule::default()
            .context_action("show_similar_persons", state.node(anna).unwrap(), state)
            .unwrap();
        let ids: Vec<u64> = out["similar"].as_array().unwrap().iter().map(|v| v["id"].as_u64().unwrap()).collect();
        assert_eq!(ids, vec![ana.0, adams.0]);
    }
}
