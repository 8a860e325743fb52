//! One case, assembled from a config: store, modules, ontology and indexes.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::clock::Clock;
use crate::config::{ConfigError, EngineConfig};
use crate::ids::{ItemId, JobId};
use crate::layout::{self, LayoutError, LayoutParams, Position};
use crate::ner::{EntityMention, Gazetteer, GazetteerError, NerLabel, NerModule};
use crate::orchestration::mocks::{ImageAnalyzer, SpeakerDetection, Transcriber};
use crate::orchestration::{
    stored_object, AnalysisModule, FsObjectStore, IngestRequest, MemoryObjectStore, ObjectError, ObjectStore,
    OrchestrationError, Orchestrator, OrchestratorConfig,
};
use crate::provenance::{Mutation, OntologyEditPayload, ProvenanceEntry, ProvenanceLog, SearchPayload};
use crate::report::{build_report, ReportBundle, ReportError};
use crate::schema::{Actor, SchemaError, SchemaRegistry, Value};
use crate::search::{self, OntologyEdit, OntologyError, OntologyGraph, SearchError, SearchHit, SearchQuery, TextIndex};
use crate::store::{GraphStore, GraphView, StoreError, ViewFilter};

pub const MENTION_EDGE: &str = "mentioned_in";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Orchestration(#[from] OrchestrationError),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Gazetteer(#[from] GazetteerError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("unknown module {0:?} in config")]
    UnknownModule(String),
    #[error("{0} is not a document")]
    NotADocument(ItemId),
    #[error("document {0} has no readable text")]
    NoText(ItemId),
}

pub struct Engine {
    config: EngineConfig,
    store: GraphStore,
    orchestrator: Orchestrator,
    ontology: Arc<OntologyGraph>,
    gazetteer: Arc<Gazetteer>,
    index: TextIndex,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("store", &self.store)
            .field("ontology_version", &self.ontology.version())
            .field("indexed", &self.index.len())
            .finish()
    }
}

fn module_by_name(name: &str, gazetteer: &Arc<Gazetteer>) -> Option<Arc<dyn AnalysisModule>> {
    Some(match name {
        "speaker-detection" => Arc::new(SpeakerDetection),
        "transcriber" => Arc::new(Transcriber),
        "image-analyzer" => Arc::new(ImageAnalyzer),
        crate::ner::MODULE_ID => Arc::new(NerModule::new(gazetteer.clone())),
        _ => return None,
    })
}

impl Engine {
    /// Opens or creates the case described by `config`. A log that fails
    /// chain verification is refused.
    pub fn open(config: EngineConfig) -> Result<Engine, EngineError> {
        config.validate()?;
        let schema = match &config.schema_path {
            Some(p) => SchemaRegistry::from_json(&read(p)?)?,
            None => SchemaRegistry::default_registry(),
        };
        let base_ontology = match &config.ontology_path {
            Some(p) => OntologyGraph::load(p)?,
            None => OntologyGraph::sample(),
        };
        let gazetteer = Arc::new(match &config.gazetteer_path {
            Some(p) => Gazetteer::load(p)?,
            None => Gazetteer::sample(),
        });
        let clock = config.fixed_timestamp.map_or(Clock::System, Clock::Fixed);
        let schema = Arc::new(schema);

        let (store, objects): (GraphStore, Arc<dyn ObjectStore>) = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(ObjectError::Io)?;
                let log_path = config.log_path().expect("data dir set");
                let log = ProvenanceLog::open(&log_path).map_err(StoreError::from)?;
                let objects = FsObjectStore::new(config.objects_path().expect("data dir set"))?;
                (GraphStore::new(schema, log, clock)?, Arc::new(objects))
            }
            None => {
                let mut store = GraphStore::in_memory(schema);
                store.set_clock(clock);
                (store, Arc::new(MemoryObjectStore::default()))
            }
        };

        let mut orchestrator = Orchestrator::new(
            objects,
            OrchestratorConfig {
                max_depth: config.max_cascade_depth,
                workers: config.workers,
            },
        );
        for name in &config.modules {
            let module = module_by_name(name, &gazetteer).ok_or_else(|| EngineError::UnknownModule(name.clone()))?;
            orchestrator.register_module(module)?;
        }
        orchestrator.restore(&store)?;

        let ontology = replay_ontology(base_ontology, store.log().entries())?;
        let mut engine = Engine {
            config,
            store,
            orchestrator,
            ontology: Arc::new(ontology),
            gazetteer,
            index: TextIndex::new(),
        };
        engine.refresh_index()?;
        Ok(engine)
    }

    /// A fresh in-memory case with default settings.
    pub fn in_memory() -> Engine {
        Engine::open(EngineConfig::default()).expect("default config opens")
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &GraphStore {
        &self.store
    }

    /// Direct write access for user-created items, hides, reviews and
    /// annotations.
    pub fn store_mut(&mut self) -> &mut GraphStore {
        &mut self.store
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub fn ontology(&self) -> &Arc<OntologyGraph> {
        &self.ontology
    }

    pub fn gazetteer(&self) -> &Arc<Gazetteer> {
        &self.gazetteer
    }

    pub fn text_index(&self) -> &TextIndex {
        &self.index
    }

    /// Queues a document; its cascade runs on [`Engine::run_pending`].
    pub fn submit(&mut self, request: IngestRequest, actor: &Actor) -> Result<JobId, EngineError> {
        Ok(self.orchestrator.submit(&mut self.store, request, actor)?)
    }

    /// Drives every queued cascade to completion.
    pub fn run_pending(&mut self) -> Result<(), EngineError> {
        self.orchestrator.run_until_idle(&mut self.store)?;
        self.refresh_index()
    }

    pub fn ingest(&mut self, request: IngestRequest, actor: &Actor) -> Result<JobId, EngineError> {
        let job = self.submit(request, actor)?;
        self.run_pending()?;
        Ok(job)
    }

    pub fn rerun(
        &mut self,
        item: ItemId,
        module: &str,
        parameters: serde_json::Value,
        actor: &Actor,
    ) -> Result<crate::orchestration::RerunReport, EngineError> {
        let report = self
            .orchestrator
            .rerun_with_parameters(&mut self.store, item, module, parameters, actor)?;
        self.refresh_index()?;
        Ok(report)
    }

    /// Indexes the text of every text document not indexed yet.
    pub fn refresh_index(&mut self) -> Result<(), EngineError> {
        let pending: Vec<ItemId> = self
            .store
            .state()
            .nodes()
            .filter(|n| n.is_document() && !self.index.contains(n.id) && is_text(n))
            .map(|n| n.id)
            .collect();
        for id in pending {
            if let Ok(text) = self.document_text(id) {
                self.index.index_document(id, &text);
            }
        }
        Ok(())
    }

    pub fn document_text(&self, id: ItemId) -> Result<String, EngineError> {
        let node = self.store.node(id).ok_or(StoreError::UnknownItem(id))?;
        if !node.is_document() {
            return Err(EngineError::NotADocument(id));
        }
        let object = stored_object(node).ok_or(EngineError::NoText(id))?;
        let bytes = self.orchestrator.objects().get(&object)?;
        String::from_utf8(bytes).map_err(|_| EngineError::NoText(id))
    }

    /// Mentions recorded against a document, by offset. Hidden mentions are
    /// left out unless asked for.
    pub fn document_mentions(&self, id: ItemId, include_hidden: bool) -> Result<Vec<EntityMention>, EngineError> {
        let state = self.store.state();
        let node = state.node(id).ok_or(StoreError::UnknownItem(id))?;
        if !node.is_document() {
            return Err(EngineError::NotADocument(id));
        }
        let mut out = Vec::new();
        for &e in state.incident_edges(id) {
            let edge = state.edge(e).expect("incident edge exists");
            if edge.kind != MENTION_EDGE || edge.to != id || (edge.hidden && !include_hidden) {
                continue;
            }
            let int = |k: &str| edge.attributes.get(k).and_then(Value::as_integer);
            let label = edge
                .attributes
                .get("label")
                .and_then(Value::as_text)
                .and_then(|l| l.parse::<NerLabel>().ok());
            let (Some(start), Some(end), Some(label)) = (int("start"), int("end"), label) else {
                continue;
            };
            let entity = state.node(edge.from).expect("edge endpoint exists");
            out.push(EntityMention {
                document: id,
                start: start as usize,
                end: end as usize,
                surface: entity.label.clone(),
                label,
                node: entity.id,
            });
        }
        out.sort_by_key(|m| (m.start, m.end, m.node));
        Ok(out)
    }

    /// Runs a query over the current graph and logs the query text and
    /// modes.
    pub fn search(&mut self, query: &SearchQuery, filter: &ViewFilter, actor: &Actor) -> Result<Vec<SearchHit>, EngineError> {
        let hits = search::search(self.store.state(), &self.index, &self.ontology, query, filter)?;
        self.store.record(
            actor,
            Mutation::SearchExecuted(SearchPayload {
                text: query.text.clone(),
                modes: query.modes.iter().map(|m| m.as_str().to_string()).collect(),
            }),
        )?;
        Ok(hits)
    }

    /// Applies an edit and logs it; returns the new version.
    pub fn edit_ontology(&mut self, edit: OntologyEdit, actor: &Actor) -> Result<u64, EngineError> {
        let next = self.ontology.apply(&edit)?;
        let version = next.version();
        self.store
            .record(actor, Mutation::OntologyEdit(OntologyEditPayload { edit, version }))?;
        self.ontology = Arc::new(next);
        Ok(version)
    }

    pub fn view(&self, filter: &ViewFilter) -> Result<GraphView, EngineError> {
        Ok(self.store.apply_filter(filter)?)
    }

    /// Lays out the filtered view. Edges of the view are springs.
    pub fn layout(&self, filter: &ViewFilter, params: Option<&LayoutParams>) -> Result<Vec<Position>, EngineError> {
        let view = self.store.apply_filter(filter)?;
        let ids: Vec<ItemId> = view.nodes.iter().copied().collect();
        let edges: Vec<(ItemId, ItemId)> = view
            .edges
            .iter()
            .filter_map(|e| self.store.edge(*e))
            .map(|e| (e.from, e.to))
            .collect();
        let params = params.unwrap_or(&self.config.layout);
        Ok(layout::run(&ids, &edges, params)?.positions())
    }

    pub fn trace(&self, item: ItemId) -> Result<Vec<ProvenanceEntry>, EngineError> {
        Ok(self.store.trace(item)?)
    }

    pub fn report(&self, selection: &[ItemId], title: Option<&str>) -> Result<ReportBundle, EngineError> {
        Ok(build_report(
            self.store.state(),
            self.store.log().entries(),
            selection,
            title.unwrap_or(&self.config.case_title),
            self.store.clock().now(),
        )?)
    }

    /// Document counts by type name, for status displays.
    pub fn document_summary(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for n in self.store.state().nodes().filter(|n| n.is_document()) {
            *out.entry(n.type_path.name().to_string()).or_default() += 1;
        }
        out
    }
}

fn is_text(node: &crate::store::NodeRecord) -> bool {
    node.attributes
        .get("media_type")
        .and_then(Value::as_text)
        .is_some_and(|m| m.starts_with("text/"))
}

fn read(path: &std::path::Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Folds logged ontology edits over the base ontology, in log order.
pub fn replay_ontology(base: OntologyGraph, entries: &[ProvenanceEntry]) -> Result<OntologyGraph, EngineError> {
    let mut ontology = base;
    for entry in entries {
        if let Ok(Mutation::OntologyEdit(p)) = entry.decode() {
            ontology = ontology.apply(&p.edit)?;
        }
    }
    Ok(ontology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::NerLabel;
    use crate::search::{OntologyLink, Relation, SearchMode};

    fn text(s: &str) -> IngestRequest {
        IngestRequest::new(s.as_bytes().to_vec(), "text/plain").named("note.txt")
    }

    #[test]
    fn text_ingest_links_mentions_and_indexes() {
        let mut engine = Engine::in_memory();
        let analyst = Actor::user("ana");
        let job = engine.ingest(text("Anna met Bob in Berlin on 12.03.2022"), &analyst).unwrap();
        let doc = engine.orchestrator().job(job).unwrap().document;
        let mentions = engine.document_mentions(doc, false).unwrap();
        let spans: Vec<_> = mentions.iter().map(|m| (m.start, m.end, m.label)).collect();
        assert_eq!(
            spans,
            vec![
                (0, 4, NerLabel::Person),
                (9, 12, NerLabel::Person),
                (16, 22, NerLabel::Location),
                (26, 36, NerLabel::Datetime)
            ]
        );
        assert!(engine.text_index().contains(doc));
        let hits = engine
            .search(&SearchQuery::new("berlin", &[SearchMode::Exact]), &ViewFilter::default(), &analyst)
            .unwrap();
        assert!(hits.len() >= 2, "node label and document span: {hits:?}");
        let last = engine.store().log().entries().last().unwrap();
        assert_eq!(last.mutation, crate::provenance::MutationKind::SearchExecuted);
    }

    #[test]
    fn ontology_edits_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let config = EngineConfig {
            data_dir: Some(dir.path().to_path_buf()),
            ..EngineConfig::default()
        };
        let link = OntologyLink {
            from: "accommodation".into(),
            rel: Relation::Hyponym,
            to: "tent".into(),
        };
        let version = {
            let mut engine = Engine::open(config.clone()).unwrap();
            let analyst = Actor::user("ana");
            engine
                .edit_ontology(OntologyEdit::AddConcept { term: "tent".into() }, &analyst)
                .unwrap();
            engine.edit_ontology(OntologyEdit::AddLink(link.clone()), &analyst).unwrap()
        };
        let engine = Engine::open(config).unwrap();
        assert_eq!(engine.ontology().version(), version);
        assert!(engine.ontology().links().any(|l| *l == link));
    }

    #[test]
    fn reopened_case_restores_index_and_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let config = EngineConfig {
            data_dir: Some(dir.path().to_path_buf()),
            ..EngineConfig::default()
        };
        let job = {
            let mut engine = Engine::open(config.clone()).unwrap();
            engine.ingest(text("Bob flew to Berlin"), &Actor::user("ana")).unwrap()
        };
        let engine = Engine::open(config).unwrap();
        let doc = engine.orchestrator().job(job).unwrap().document;
        assert!(engine.text_index().contains(doc));
        assert_eq!(engine.document_text(doc).unwrap(), "Bob flew to Berlin");
    }

    #[test]
    fn unknown_module_is_refused() {
        let config = EngineConfig {
            modules: vec!["ocr".into()],
            ..EngineConfig::default()
        };
        assert!(matches!(Engine::open(config), Err(EngineError::UnknownModule(_))));
    }

    #[test]
    fn layout_covers_the_view() {
        let mut engine = Engine::in_memory();
        engine
            .ingest(text("Anna met Bob in Berlin"), &Actor::user("ana"))
            .unwrap();
        let filter = ViewFilter::default();
        let view = engine.view(&filter).unwrap();
        let params = LayoutParams {
            iterations: 20,
            ..LayoutParams::default()
        };
        let positions = engine.layout(&filter, Some(&params)).unwrap();
        assert_eq!(positions.len(), view.nodes.len());
    }
}
