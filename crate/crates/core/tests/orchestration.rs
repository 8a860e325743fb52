use std::sync::Arc;

use casegraph_core::fixtures::{cascade_request, CASCADE_SCRIPT};
use casegraph_core::ner::NerModule;
use casegraph_core::orchestration::mocks::{ImageAnalyzer, SpeakerDetection, Transcriber};
use casegraph_core::orchestration::{
    AnalysisModule, ContextAction, IngestRequest, Listener, MemoryObjectStore, ModuleDescriptor, ModuleError,
    NodeRef, Orchestrator, OrchestratorConfig, ProposedEdge, ProposedNode, RunInput, RunOutput,
};
use casegraph_core::provenance::{MutationKind, ProvenanceEntry, RunStatus};
use casegraph_core::schema::{Actor, SchemaRegistry, TypePath};
use casegraph_core::store::{GraphStore, NodeRecord};
use casegraph_core::ItemId;
use serde_json::json;

fn tp(s: &str) -> TypePath {
    TypePath::parse(s).unwrap()
}

fn setup(workers: usize, modules: Vec<Arc<dyn AnalysisModule>>) -> (GraphStore, Orchestrator) {
    let store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
    let mut orch = Orchestrator::new(
        Arc::new(MemoryObjectStore::default()),
        OrchestratorConfig { max_depth: 8, workers },
    );
    for m in modules {
        orch.register_module(m).unwrap();
    }
    (store, orch)
}

fn cascade_modules() -> Vec<Arc<dyn AnalysisModule>> {
    vec![
        Arc::new(SpeakerDetection),
        Arc::new(Transcriber),
        Arc::new(ImageAnalyzer),
        Arc::new(NerModule::default()),
    ]
}

fn visible<'a>(store: &'a GraphStore, label: &str, ty: &str) -> Vec<&'a NodeRecord> {
    let ty = tp(ty);
    store
        .state()
        .nodes()
        .filter(|n| n.label == label && n.type_path == ty && !n.hidden)
        .collect()
}

fn all_named<'a>(store: &'a GraphStore, label: &str) -> Vec<&'a NodeRecord> {
    store.state().nodes().filter(|n| n.label == label).collect()
}

#[test]
fn cascade_reaches_entities() {
    let (mut store, mut orch) = setup(1, cascade_modules());
    let job = orch.ingest(&mut store, cascade_request(), &Actor::user("ana")).unwrap();
    let job = orch.job(job).unwrap();
    assert_eq!(job.cascade_depth, 3, "speakers, transcript, entities");
    let speakers = store
        .state()
        .nodes()
        .filter(|n| n.type_path == tp("Thing/Entity/Speaker"))
        .count();
    assert_eq!(speakers, 4);
    for (label, ty) in [
        ("Anna", "Thing/Entity/Person"),
        ("Carla", "Thing/Entity/Person"),
        ("Hamburg", "Thing/Location"),
        ("Rostock", "Thing/Location"),
        ("Westbank Holding", "Thing/Entity/Organization"),
    ] {
        assert_eq!(visible(&store, label, ty).len(), 1, "{label}");
    }
    // Each entity is graded as automation, never above C.
    assert!(store
        .state()
        .edges()
        .filter(|e| e.kind == "mentioned_in")
        .all(|e| e.grade.reliability.rank() <= casegraph_core::schema::Reliability::C.rank()));
    assert!(store.verify().is_ok());
}

#[test]
fn rerun_supersedes_and_keeps_both_generations() {
    let (mut store, mut orch) = setup(1, cascade_modules());
    let analyst = Actor::user("ana");
    let job = orch.ingest(&mut store, cascade_request(), &analyst).unwrap();
    let audio = orch.job(job).unwrap().document;
    let old_transcript = visible(&store, "Transcript of call-0412.wav [S1,S2,S3,S4]", "Thing/Document/Transcript")[0].id;
    let old_anna = visible(&store, "Anna", "Thing/Entity/Person")[0].id;
    let old_carla = visible(&store, "Carla", "Thing/Entity/Person")[0].id;

    let report = orch
        .rerun_with_parameters(&mut store, audio, "speaker-detection", json!({"deselect": ["S3", "S4"]}), &analyst)
        .unwrap();
    assert!(!report.superseded.is_empty());
    assert!(!report.new_runs.is_empty());

    for id in [old_transcript, old_anna, old_carla] {
        let node = store.node(id).unwrap();
        assert!(node.hidden, "{} should be hidden", node.label);
        assert_eq!(node.hidden_reason.as_deref(), Some("superseded"));
    }
    let new_anna = visible(&store, "Anna", "Thing/Entity/Person");
    assert_eq!(new_anna.len(), 1);
    assert_ne!(new_anna[0].id, old_anna);
    assert!(visible(&store, "Carla", "Thing/Entity/Person").is_empty());
    assert!(visible(&store, "Dieter", "Thing/Entity/Person").is_empty());
    assert_eq!(all_named(&store, "Carla").len(), 1);
    let new_transcript = visible(&store, "Transcript of call-0412.wav [S1,S2]", "Thing/Document/Transcript");
    assert_eq!(new_transcript.len(), 1);
    // Speaker nodes are attached to the audio itself and so survive.
    assert_eq!(
        store
            .state()
            .nodes()
            .filter(|n| n.type_path == tp("Thing/Entity/Speaker") && !n.hidden)
            .count(),
        4
    );

    for id in [old_anna, new_anna[0].id] {
        let kinds: Vec<MutationKind> = store.trace(id).unwrap().iter().map(|e| e.mutation).collect();
        for k in [MutationKind::Ingest, MutationKind::ModuleRun, MutationKind::CreateNode] {
            assert!(kinds.contains(&k), "{k:?} missing in trace of {id}");
        }
    }
    let old_trace = store.trace(old_anna).unwrap();
    assert!(old_trace.iter().any(|e| e.mutation == MutationKind::Hide));
    assert!(orch.runs().any(|r| r.status == RunStatus::Superseded));
    assert!(store.verify().is_ok());

    // Rerunning with the same parameters again is a no-op.
    let len = store.log().len();
    let again = orch
        .rerun_with_parameters(&mut store, audio, "speaker-detection", json!({"deselect": ["S3", "S4"]}), &analyst)
        .unwrap();
    assert!(again.new_runs.is_empty());
    assert_eq!(store.log().len(), len);
}

/// Log content without timestamps or hashes, which depend on them.
fn shape(entries: &[ProvenanceEntry]) -> Vec<(u64, String, MutationKind, String)> {
    entries
        .iter()
        .map(|e| (e.seq, e.actor.to_string(), e.mutation, strip_times(&e.payload).to_string()))
        .collect()
}

fn strip_times(v: &serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => m
            .iter()
            .filter(|(k, _)| k.as_str() != "created_at" && k.as_str() != "at")
            .map(|(k, v)| (k.clone(), strip_times(v)))
            .collect(),
        serde_json::Value::Array(a) => a.iter().map(strip_times).collect(),
        other => other.clone(),
    }
}

fn cascade_log(workers: usize) -> Vec<ProvenanceEntry> {
    let (mut store, mut orch) = setup(workers, cascade_modules());
    let analyst = Actor::user("ana");
    let job = orch.ingest(&mut store, cascade_request(), &analyst).unwrap();
    let audio = orch.job(job).unwrap().document;
    orch.rerun_with_parameters(&mut store, audio, "speaker-detection", json!({"deselect": ["S3", "S4"]}), &analyst)
        .unwrap();
    store.log().entries().to_vec()
}

#[test]
fn cascade_is_deterministic_modulo_timestamps() {
    let a = cascade_log(1);
    let b = cascade_log(1);
    assert_eq!(shape(&a), shape(&b));
    assert_eq!(shape(&a), shape(&cascade_log(3)), "worker count must not change the log");
}

/// Creates a new Misc node from every Misc node it sees.
struct Echo;

impl AnalysisModule for Echo {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut d = ModuleDescriptor::new("echo");
        d.ingest_types.push("text/x-echo".into());
        d.listeners.push(Listener::on_create(tp("Thing/Entity/Misc")));
        d.context_actions.push(ContextAction {
            name: "inspect".into(),
            label: "Inspect".into(),
            target: tp("Thing/Entity"),
        });
        d
    }

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError> {
        Ok(RunOutput {
            nodes: vec![ProposedNode {
                type_path: tp("Thing/Entity/Misc"),
                label: format!("echo {}", input.depth),
                attributes: Default::default(),
            }],
            edges: vec![ProposedEdge {
                kind: "related_to".into(),
                from: NodeRef::Node(0),
                to: NodeRef::Trigger,
                grade: None,
                attributes: Default::default(),
            }],
            documents: Vec::new(),
        })
    }

    fn context_action(&self, _: &str, item: &NodeRecord, _: &casegraph_core::store::GraphState) -> Result<serde_json::Value, ModuleError> {
        Ok(json!({"label": item.label}))
    }
}

#[test]
fn self_triggering_module_stops_at_max_depth() {
    for max_depth in [1u32, 3, 8] {
        let store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
        let mut orch = Orchestrator::new(
            Arc::new(MemoryObjectStore::default()),
            OrchestratorConfig { max_depth, workers: 1 },
        );
        let mut store = store;
        orch.register_module(Arc::new(Echo)).unwrap();
        let job = orch
            .ingest(&mut store, IngestRequest::new(b"go".to_vec(), "text/x-echo"), &Actor::user("ana"))
            .unwrap();
        let completed = orch.runs().filter(|r| r.status == RunStatus::Completed).count();
        let dropped: Vec<_> = orch.runs().filter(|r| r.status == RunStatus::Dropped).collect();
        assert_eq!(completed as u32, max_depth);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].depth, max_depth + 1);
        assert!(!orch.job(job).unwrap().warnings.is_empty());
    }
}

#[test]
fn duplicate_dispatch_is_suppressed() {
    let (mut store, mut orch) = setup(1, vec![Arc::new(Echo)]);
    let misc = store
        .upsert_node(
            casegraph_core::store::NodeCandidate::new(tp("Thing/Entity/Misc"), "seed"),
            &Actor::user("ana"),
        )
        .unwrap()
        .id;
    let job = orch
        .submit(&mut store, IngestRequest::new(b"x".to_vec(), "application/none"), &Actor::user("ana"))
        .unwrap();
    orch.run_until_idle(&mut store).unwrap();
    let before = orch.runs().count();
    orch.dispatch_change(&mut store, job, misc, MutationKind::CreateNode).unwrap();
    orch.run_until_idle(&mut store).unwrap();
    let after_first = orch.runs().count();
    assert!(after_first > before);
    let log_len = store.log().len();
    orch.dispatch_change(&mut store, job, misc, MutationKind::CreateNode).unwrap();
    orch.run_until_idle(&mut store).unwrap();
    assert_eq!(orch.runs().count(), after_first);
    assert_eq!(store.log().len(), log_len);
}

#[test]
fn context_actions_are_the_union_over_ancestors() {
    let mut modules = cascade_modules();
    modules.push(Arc::new(Echo));
    let (mut store, orch) = setup(1, modules);
    let analyst = Actor::user("ana");
    let person = store
        .upsert_node(casegraph_core::store::NodeCandidate::new(tp("Thing/Entity/Person"), "Anna"), &analyst)
        .unwrap()
        .id;
    let org = store
        .upsert_node(casegraph_core::store::NodeCandidate::new(tp("Thing/Entity/Organization"), "BKA"), &analyst)
        .unwrap()
        .id;
    let names = |id: ItemId| {
        let mut v: Vec<String> = orch
            .list_context_actions(store.state(), id, false)
            .unwrap()
            .into_iter()
            .map(|a| format!("{}/{}", a.module, a.name))
            .collect();
        v.sort();
        v
    };
    assert_eq!(
        names(person),
        ["echo/inspect", "image-analyzer/show_depictions", "ner/show_similar_persons"]
    );
    assert_eq!(names(org), ["echo/inspect"]);
    assert_eq!(
        orch.invoke_action(store.state(), "echo", "inspect", org).unwrap(),
        json!({"label": "BKA"})
    );
    assert!(orch.invoke_action(store.state(), "ner", "show_similar_persons", org).is_err());

    store.hide(person, &analyst, "test").unwrap();
    assert!(orch.list_context_actions(store.state(), person, false).unwrap().is_empty());
    assert_eq!(orch.list_context_actions(store.state(), person, true).unwrap().len(), 3);
}

#[test]
fn restore_rebuilds_jobs_from_the_log() {
    let (mut store, mut orch) = setup(1, cascade_modules());
    let job = orch.ingest(&mut store, cascade_request(), &Actor::user("ana")).unwrap();
    let runs: Vec<_> = orch.runs().cloned().collect();

    let (_, mut fresh) = setup(1, cascade_modules());
    fresh.restore(&store).unwrap();
    assert_eq!(fresh.runs().cloned().collect::<Vec<_>>(), runs);
    assert_eq!(fresh.job(job).unwrap().document, orch.job(job).unwrap().document);
    assert!(CASCADE_SCRIPT.contains("S4"));
}
