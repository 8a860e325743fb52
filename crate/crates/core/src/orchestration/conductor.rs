use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;
use tracing::{debug, warn};

use crate::canonical::digest_of;
use crate::ids::{ItemId, JobId, RunId};
use crate::provenance::{IngestPayload, ModuleRunPayload, Mutation, MutationKind, ProvenanceEntry, RunStatus};
use crate::schema::{Actor, TypePath, Value};
use crate::store::{Attribution, EdgeCandidate, GraphState, GraphStore, NodeCandidate, NodeRecord, StoreError, Txn};

use super::module::{AnalysisModule, ModuleDescriptor, ModuleError, NodeRef, RunInput, RunOutput};
use super::objects::{ObjectError, ObjectRef, ObjectStore};

pub const DEFAULT_MAX_DEPTH: u32 = 8;

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error("module {0:?} is already registered")]
    DuplicateModule(String),
    #[error("module {0:?} declares neither ingest types nor listeners")]
    EmptyDescriptor(String),
    #[error("unknown module {0:?}")]
    UnknownModule(String),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("module {module:?} has no prior run on {item}")]
    NoPriorRun { module: String, item: ItemId },
    #[error("{module:?} does not offer {action:?} for {item}")]
    ActionNotOffered { module: String, action: String, item: ItemId },
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Module(#[from] ModuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub max_depth: u32,
    /// 1 runs modules one at a time on the calling thread.
    pub workers: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            max_depth: DEFAULT_MAX_DEPTH,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestJob {
    pub id: JobId,
    pub object: ObjectRef,
    pub media_type: String,
    pub actor: Actor,
    pub status: JobStatus,
    pub document: ItemId,
    pub produced: Vec<ItemId>,
    pub cascade_depth: u32,
    pub modules: Vec<String>,
    pub runs: Vec<RunId>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: RunId,
    pub job: JobId,
    pub module: String,
    pub trigger: ItemId,
    pub source_document: Option<ItemId>,
    pub parameters: Json,
    pub parameters_digest: String,
    pub trigger_digest: String,
    pub depth: u32,
    pub status: RunStatus,
    pub produced: Vec<ItemId>,
    pub detail: Option<String>,
}

impl RunRecord {
    fn from_payload(p: &ModuleRunPayload) -> Self {
        RunRecord {
            run: p.run,
            job: p.job,
            module: p.module.clone(),
            trigger: p.trigger,
            source_document: p.source_document,
            parameters: p.parameters.clone(),
            parameters_digest: p.parameters_digest.clone(),
            trigger_digest: p.trigger_digest.clone(),
            depth: p.depth,
            status: p.status,
            produced: p.produced.clone(),
            detail: p.detail.clone(),
        }
    }

    fn payload(&self) -> ModuleRunPayload {
        ModuleRunPayload {
            run: self.run,
            job: self.job,
            module: self.module.clone(),
            trigger: self.trigger,
            source_document: self.source_document,
            parameters: self.parameters.clone(),
            parameters_digest: self.parameters_digest.clone(),
            trigger_digest: self.trigger_digest.clone(),
            depth: self.depth,
            status: self.status,
            produced: self.produced.clone(),
            detail: self.detail.clone(),
        }
    }

    fn key(&self) -> RunKey {
        (
            self.module.clone(),
            self.trigger,
            self.trigger_digest.clone(),
            self.parameters_digest.clone(),
        )
    }
}

/// (module, trigger, trigger content digest, parameters digest)
type RunKey = (String, ItemId, String, String);

#[derive(Debug, Clone)]
struct PendingRun {
    job: JobId,
    module: String,
    trigger: ItemId,
    parameters: Json,
    parameters_digest: String,
    trigger_digest: String,
    depth: u32,
}

/// A document submitted for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRequest {
    pub bytes: Vec<u8>,
    pub media_type: String,
    pub source_name: Option<String>,
    /// When the evidence itself was created, if known.
    pub timestamp: Option<DateTime<Utc>>,
}

impl IngestRequest {
    pub fn new(bytes: impl Into<Vec<u8>>, media_type: &str) -> Self {
        IngestRequest {
            bytes: bytes.into(),
            media_type: media_type.to_string(),
            source_name: None,
            timestamp: None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.source_name = Some(name.to_string());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RerunReport {
    pub superseded: Vec<RunId>,
    pub hidden: Vec<ItemId>,
    pub new_runs: Vec<RunId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOffer {
    pub module: String,
    pub name: String,
    pub label: String,
    pub target: TypePath,
}

pub fn document_type_for(media_type: &str) -> TypePath {
    let essence = media_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    let sub = match essence.as_str() {
        "message/rfc822" => "Email",
        "application/x-chatlog" | "text/x-chatlog" => "ChatLog",
        m if m.starts_with("text/") => "Text",
        m if m.starts_with("audio/") => "Audio",
        m if m.starts_with("image/") => "Image",
        m if m.starts_with("video/") => "Video",
        _ => "Binary",
    };
    TypePath::root().child("Document").child(sub)
}

/// Digest over what a module sees of a node.
pub fn content_digest(node: &NodeRecord) -> String {
    digest_of(&serde_json::json!({
        "type": node.type_path,
        "label": node.label,
        "attributes": node.attributes,
    }))
}

/// Routes ingested documents and graph changes to analysis modules and
/// commits their results.
pub struct Orchestrator {
    modules: BTreeMap<String, Arc<dyn AnalysisModule>>,
    descriptors: Vec<ModuleDescriptor>,
    objects: Arc<dyn ObjectStore>,
    config: OrchestratorConfig,
    pool: Option<rayon::ThreadPool>,
    jobs: BTreeMap<JobId, IngestJob>,
    runs: BTreeMap<RunId, RunRecord>,
    seen: HashSet<RunKey>,
    pending: VecDeque<PendingRun>,
    next_job: u64,
    next_run: u64,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("modules", &self.modules.keys().collect::<Vec<_>>())
            .field("config", &self.config)
            .field("jobs", &self.jobs.len())
            .field("runs", &self.runs.len())
            .finish()
    }
}

impl Orchestrator {
    pub fn new(objects: Arc<dyn ObjectStore>, config: OrchestratorConfig) -> Self {
        let pool = (config.workers > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .expect("worker pool")
        });
        Orchestrator {
            modules: BTreeMap::new(),
            descriptors: Vec::new(),
            objects,
            config,
            pool,
            jobs: BTreeMap::new(),
            runs: BTreeMap::new(),
            seen: HashSet::new(),
            pending: VecDeque::new(),
            next_job: 1,
            next_run: 1,
        }
    }

    pub fn config(&self) -> OrchestratorConfig {
        self.config
    }

    pub fn objects(&self) -> &Arc<dyn ObjectStore> {
        &self.objects
    }

    pub fn register_module(&mut self, module: Arc<dyn AnalysisModule>) -> Result<ModuleDescriptor, OrchestrationError> {
        let descriptor = module.descriptor();
        if self.modules.contains_key(&descriptor.id) {
            return Err(OrchestrationError::DuplicateModule(descriptor.id));
        }
        if descriptor.ingest_types.is_empty() && descriptor.listeners.is_empty() {
            return Err(OrchestrationError::EmptyDescriptor(descriptor.id));
        }
        self.modules.insert(descriptor.id.clone(), module);
        self.descriptors.push(descriptor.clone());
        Ok(descriptor)
    }

    /// Registration order.
    pub fn descriptors(&self) -> &[ModuleDescriptor] {
        &self.descriptors
    }

    pub fn job(&self, id: JobId) -> Option<&IngestJob> {
        self.jobs.get(&id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &IngestJob> {
        self.jobs.values()
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.values()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    /// Rebuilds job, run and dedup bookkeeping from the provenance log.
    pub fn restore(&mut self, store: &GraphStore) -> Result<(), OrchestrationError> {
        for entry in store.log().entries() {
            match entry.mutation {
                MutationKind::Ingest | MutationKind::ModuleRun => {}
                _ => continue,
            }
            match entry.decode().map_err(StoreError::from)? {
                Mutation::Ingest(p) => {
                    let document = store.node(p.document).ok_or(OrchestrationError::UnknownItem(p.document))?;
                    let media_type = document
                        .attributes
                        .get("media_type")
                        .and_then(Value::as_text)
                        .unwrap_or(&p.object.media_type)
                        .to_string();
                    self.next_job = self.next_job.max(p.job.0 + 1);
                    self.jobs.insert(
                        p.job,
                        IngestJob {
                            id: p.job,
                            object: p.object,
                            media_type,
                            actor: entry.actor.clone(),
                            status: JobStatus::Done,
                            document: p.document,
                            produced: Vec::new(),
                            cascade_depth: 0,
                            modules: Vec::new(),
                            runs: Vec::new(),
                            warnings: Vec::new(),
                        },
                    );
                }
                Mutation::ModuleRun(p) => {
                    let record = RunRecord::from_payload(&p);
                    self.next_run = self.next_run.max(p.run.0 + 1);
                    if p.status == RunStatus::Superseded {
                        self.seen.remove(&record.key());
                        if let Some(r) = self.runs.get_mut(&p.run) {
                            r.status = RunStatus::Superseded;
                        }
                        continue;
                    }
                    self.seen.insert(record.key());
                    if let Some(job) = self.jobs.get_mut(&p.job) {
                        job.runs.push(p.run);
                        job.produced.extend(p.produced.iter().copied());
                        job.cascade_depth = job.cascade_depth.max(p.depth);
                        if !job.modules.contains(&p.module) {
                            job.modules.push(p.module.clone());
                        }
                        if p.status == RunStatus::Failed {
                            job.status = JobStatus::Failed;
                        }
                    }
                    self.runs.insert(p.run, record);
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Stores the payload, creates its Document node and schedules every
    /// module accepting the media type. Work happens in [`Self::advance`].
    pub fn submit(
        &mut self,
        store: &mut GraphStore,
        request: IngestRequest,
        actor: &Actor,
    ) -> Result<JobId, OrchestrationError> {
        let object = self.objects.put(&request.bytes, &request.media_type)?;
        let type_path = document_type_for(&request.media_type);
        let label = request
            .source_name
            .clone()
            .unwrap_or_else(|| format!("{} {}", type_path.name(), &object.digest[..12]));
        let mut candidate = NodeCandidate::new(type_path, label)
            .with_attribute("object", Value::BinaryReference(object.digest.clone()))
            .with_attribute("media_type", Value::Text(request.media_type.clone()))
            .with_attribute("byte_length", Value::Integer(object.byte_length as i64));
        if let Some(name) = &request.source_name {
            candidate = candidate.with_attribute("source_name", Value::Text(name.clone()));
        }
        if let Some(t) = request.timestamp {
            candidate = candidate.with_attribute("timestamp", Value::Timestamp(t));
        }
        let job_id = JobId(self.next_job);
        let mut txn = store.begin();
        let document = txn.create_node(candidate, actor)?;
        txn.push(
            actor,
            Mutation::Ingest(IngestPayload {
                job: job_id,
                document,
                object: object.clone(),
                source_name: request.source_name.clone(),
            }),
        )?;
        txn.commit()?;
        self.next_job += 1;

        let modules: Vec<String> = self
            .descriptors
            .iter()
            .filter(|d| d.accepts(&request.media_type))
            .map(|d| d.id.clone())
            .collect();
        let mut job = IngestJob {
            id: job_id,
            object,
            media_type: request.media_type.clone(),
            actor: actor.clone(),
            status: JobStatus::Queued,
            document,
            produced: vec![document],
            cascade_depth: 0,
            modules: modules.clone(),
            runs: Vec::new(),
            warnings: Vec::new(),
        };
        if modules.is_empty() {
            warn!(media_type = %request.media_type, "no module accepts this media type");
            job.warnings
                .push(format!("no analysis module accepts {}", request.media_type));
            job.status = JobStatus::Done;
        }
        self.jobs.insert(job_id, job);
        for module in modules {
            self.schedule(store, job_id, &module, document, Json::Object(Default::default()), 1)?;
        }
        Ok(job_id)
    }

    /// Submits and drives the cascade to completion.
    pub fn ingest(
        &mut self,
        store: &mut GraphStore,
        request: IngestRequest,
        actor: &Actor,
    ) -> Result<JobId, OrchestrationError> {
        let job = self.submit(store, request, actor)?;
        self.run_until_idle(store)?;
        Ok(job)
    }

    pub fn run_until_idle(&mut self, store: &mut GraphStore) -> Result<(), OrchestrationError> {
        while self.advance(store)? {}
        Ok(())
    }

    /// Executes one wave: every run pending right now. Results are committed
    /// in scheduling order whatever the worker count. Returns false when
    /// nothing was pending.
    pub fn advance(&mut self, store: &mut GraphStore) -> Result<bool, OrchestrationError> {
        if self.pending.is_empty() {
            return Ok(false);
        }
        let wave: Vec<PendingRun> = self.pending.drain(..).collect();
        for run in &wave {
            if let Some(job) = self.jobs.get_mut(&run.job) {
                job.status = match job.status {
                    JobStatus::Failed => JobStatus::Failed,
                    _ => JobStatus::Running,
                };
            }
        }
        let inputs: Vec<Result<RunInput, String>> = wave.iter().map(|p| self.prepare(store.state(), p)).collect();
        let execute = |(p, input): (&PendingRun, &Result<RunInput, String>)| -> Result<RunOutput, String> {
            let input = input.as_ref().map_err(Clone::clone)?;
            self.modules[&p.module].run(input).map_err(|e| e.to_string())
        };
        let outputs: Vec<Result<RunOutput, String>> = match &self.pool {
            Some(pool) => pool.install(|| wave.par_iter().zip(inputs.par_iter()).map(execute).collect()),
            None => wave.iter().zip(inputs.iter()).map(execute).collect(),
        };
        for ((pending, input), output) in wave.into_iter().zip(inputs).zip(outputs) {
            let source = input.as_ref().ok().and_then(|i| source_document(&i.trigger));
            self.commit_run(store, pending, source, output)?;
        }
        let busy: BTreeSet<JobId> = self.pending.iter().map(|p| p.job).collect();
        for job in self.jobs.values_mut() {
            if job.status == JobStatus::Running && !busy.contains(&job.id) {
                job.status = JobStatus::Done;
            }
        }
        Ok(true)
    }

    fn prepare(&self, state: &GraphState, pending: &PendingRun) -> Result<RunInput, String> {
        let trigger = state
            .node(pending.trigger)
            .ok_or_else(|| format!("trigger {} vanished", pending.trigger))?
            .clone();
        let content = match stored_object(&trigger) {
            Some(object) => Some(Arc::new(self.objects.get(&object).map_err(|e| e.to_string())?)),
            None => None,
        };
        Ok(RunInput {
            trigger,
            content,
            parameters: pending.parameters.clone(),
            depth: pending.depth,
        })
    }

    fn commit_run(
        &mut self,
        store: &mut GraphStore,
        pending: PendingRun,
        source: Option<ItemId>,
        output: Result<RunOutput, String>,
    ) -> Result<(), OrchestrationError> {
        let actor = Actor::module(&pending.module);
        let mut record = RunRecord {
            run: RunId(self.next_run),
            job: pending.job,
            module: pending.module.clone(),
            trigger: pending.trigger,
            source_document: source,
            parameters: pending.parameters.clone(),
            parameters_digest: pending.parameters_digest.clone(),
            trigger_digest: pending.trigger_digest.clone(),
            depth: pending.depth,
            status: RunStatus::Completed,
            produced: Vec::new(),
            detail: None,
        };
        self.next_run += 1;
        let attribution = Attribution {
            document: source,
            module: Some(pending.module.clone()),
        };
        let mut entries = Vec::new();
        let outcome = output.and_then(|output| {
            let mut txn = store.begin();
            let produced = materialize(
                &mut txn,
                self.objects.as_ref(),
                &actor,
                &attribution,
                pending.trigger,
                pending.depth,
                output,
            )
                .map_err(|e| e.to_string())?;
            record.produced = produced;
            txn.push(&actor, Mutation::ModuleRun(record.payload()))
                .map_err(|e| e.to_string())?;
            entries = txn.commit().map_err(|e| e.to_string())?;
            Ok(())
        });
        if let Err(detail) = outcome {
            warn!(module = %pending.module, trigger = %pending.trigger, %detail, "module run failed");
            record.status = RunStatus::Failed;
            record.produced.clear();
            record.detail = Some(detail);
            store.record(&actor, Mutation::ModuleRun(record.payload()))?;
        }
        if let Some(job) = self.jobs.get_mut(&pending.job) {
            job.runs.push(record.run);
            job.produced.extend(record.produced.iter().copied());
            job.cascade_depth = job.cascade_depth.max(pending.depth);
            if !job.modules.contains(&pending.module) {
                job.modules.push(pending.module.clone());
            }
            if record.status == RunStatus::Failed {
                job.status = JobStatus::Failed;
            }
        }
        self.runs.insert(record.run, record);
        for (node, kind) in change_events(&entries) {
            self.dispatch_change(store, pending.job, node, kind)?;
        }
        Ok(())
    }

    /// Schedules every module listening for `kind` on the node's type.
    pub fn dispatch_change(
        &mut self,
        store: &mut GraphStore,
        job: JobId,
        node: ItemId,
        kind: MutationKind,
    ) -> Result<Vec<String>, OrchestrationError> {
        let Some(record) = store.node(node) else {
            return Err(OrchestrationError::UnknownItem(node));
        };
        let depth = record.cascade_depth + 1;
        let modules: Vec<String> = self
            .descriptors
            .iter()
            .filter(|d| d.listeners.iter().any(|l| l.matches(&record.type_path, kind)))
            .map(|d| d.id.clone())
            .collect();
        for module in &modules {
            self.schedule(store, job, module, node, Json::Object(Default::default()), depth)?;
        }
        Ok(modules)
    }

    fn schedule(
        &mut self,
        store: &mut GraphStore,
        job: JobId,
        module: &str,
        trigger: ItemId,
        parameters: Json,
        depth: u32,
    ) -> Result<(), OrchestrationError> {
        let node = store.node(trigger).ok_or(OrchestrationError::UnknownItem(trigger))?;
        let pending = PendingRun {
            job,
            module: module.to_string(),
            trigger,
            parameters_digest: digest_of(&parameters),
            parameters,
            trigger_digest: content_digest(node),
            depth,
        };
        let key = (
            pending.module.clone(),
            trigger,
            pending.trigger_digest.clone(),
            pending.parameters_digest.clone(),
        );
        if !self.seen.insert(key) {
            debug!(module, %trigger, "duplicate dispatch suppressed");
            return Ok(());
        }
        if depth > self.config.max_depth {
            warn!(module, %trigger, depth, "cascade depth exceeded; run dropped");
            let record = RunRecord {
                run: RunId(self.next_run),
                job,
                module: pending.module,
                trigger,
                source_document: source_document(node),
                parameters: pending.parameters,
                parameters_digest: pending.parameters_digest,
                trigger_digest: pending.trigger_digest,
                depth,
                status: RunStatus::Dropped,
                produced: Vec::new(),
                detail: Some(format!("cascade depth {depth} exceeds maximum {}", self.config.max_depth)),
            };
            self.next_run += 1;
            store.record(&Actor::module(module), Mutation::ModuleRun(record.payload()))?;
            if let Some(j) = self.jobs.get_mut(&job) {
                j.runs.push(record.run);
                j.warnings.push(record.detail.clone().unwrap_or_default());
            }
            self.runs.insert(record.run, record);
            return Ok(());
        }
        self.pending.push_back(pending);
        Ok(())
    }

    /// Supersedes the latest run of `module` on `item` and everything
    /// downstream of it, then runs the module again with `parameters`.
    pub fn rerun_with_parameters(
        &mut self,
        store: &mut GraphStore,
        item: ItemId,
        module: &str,
        parameters: Json,
        actor: &Actor,
    ) -> Result<RerunReport, OrchestrationError> {
        if !self.modules.contains_key(module) {
            return Err(OrchestrationError::UnknownModule(module.to_string()));
        }
        let prior = self
            .runs
            .values()
            .rev()
            .find(|r| r.module == module && r.trigger == item && r.status == RunStatus::Completed)
            .cloned()
            .ok_or_else(|| OrchestrationError::NoPriorRun {
                module: module.to_string(),
                item,
            })?;
        let digest = digest_of(&parameters);
        if digest == prior.parameters_digest {
            return Ok(RerunReport::default());
        }

        let mut superseded = vec![prior.run];
        let mut produced: BTreeSet<ItemId> = prior.produced.iter().copied().collect();
        loop {
            let downstream: Vec<&RunRecord> = self
                .runs
                .values()
                .filter(|r| {
                    r.status == RunStatus::Completed && !superseded.contains(&r.run) && produced.contains(&r.trigger)
                })
                .collect();
            if downstream.is_empty() {
                break;
            }
            for r in downstream {
                superseded.push(r.run);
                produced.extend(r.produced.iter().copied());
            }
        }
        superseded.sort();
        let dead: HashSet<(Option<ItemId>, Option<String>)> = superseded
            .iter()
            .map(|id| (self.runs[id].source_document, Some(self.runs[id].module.clone())))
            .collect();

        let mut hidden = Vec::new();
        let mut txn = store.begin();
        for id in &superseded {
            let mut record = self.runs[id].clone();
            record.status = RunStatus::Superseded;
            record.detail = Some(format!("superseded by a rerun of {module} on {item} with parameters {digest}"));
            txn.push(actor, Mutation::ModuleRun(record.payload()))?;
        }
        for id in superseded.iter().flat_map(|r| self.runs[r].produced.clone()) {
            let state = txn.state();
            let stale = match (state.node(id), state.edge(id)) {
                (Some(node), _) => !node.hidden && !has_live_attribution(state, node, &dead),
                (None, Some(edge)) => !edge.hidden,
                (None, None) => false,
            };
            if stale {
                hidden.extend(txn.hide(id, actor, "superseded")?);
            }
        }
        txn.commit()?;
        for id in &superseded {
            let key = self.runs[id].key();
            self.seen.remove(&key);
            self.runs.get_mut(id).expect("superseded run exists").status = RunStatus::Superseded;
        }

        let first_new = self.next_run;
        if let Some(job) = self.jobs.get_mut(&prior.job) {
            job.status = JobStatus::Queued;
        }
        self.schedule(store, prior.job, module, item, parameters, prior.depth)?;
        self.run_until_idle(store)?;
        Ok(RerunReport {
            superseded,
            hidden,
            new_runs: (first_new..self.next_run).map(RunId).collect(),
        })
    }

    /// Actions registered for the item's type or any ancestor.
    pub fn list_context_actions(
        &self,
        state: &GraphState,
        item: ItemId,
        include_hidden: bool,
    ) -> Result<Vec<ActionOffer>, OrchestrationError> {
        let node = match (state.node(item), state.edge(item)) {
            (Some(node), _) => node,
            (None, Some(_)) => return Ok(Vec::new()),
            (None, None) => return Err(OrchestrationError::UnknownItem(item)),
        };
        if node.hidden && !include_hidden {
            return Ok(Vec::new());
        }
        Ok(self
            .descriptors
            .iter()
            .flat_map(|d| {
                d.context_actions
                    .iter()
                    .filter(|a| node.type_path.starts_with(&a.target))
                    .map(|a| ActionOffer {
                        module: d.id.clone(),
                        name: a.name.clone(),
                        label: a.label.clone(),
                        target: a.target.clone(),
                    })
            })
            .collect())
    }

    pub fn invoke_action(
        &self,
        state: &GraphState,
        module: &str,
        action: &str,
        item: ItemId,
    ) -> Result<Json, OrchestrationError> {
        let offered = self
            .list_context_actions(state, item, true)?
            .into_iter()
            .any(|a| a.module == module && a.name == action);
        if !offered {
            return Err(OrchestrationError::ActionNotOffered {
                module: module.to_string(),
                action: action.to_string(),
                item,
            });
        }
        let node = state.node(item).expect("offer implies a node");
        Ok(self.modules[module].context_action(action, node, state)?)
    }
}

fn has_live_attribution(
    state: &GraphState,
    node: &NodeRecord,
    dead: &HashSet<(Option<ItemId>, Option<String>)>,
) -> bool {
    node.attributions.is_empty()
        || node.attributions.iter().any(|a| {
            !dead.contains(&(a.document, a.module.clone()))
                && a.document.is_none_or(|d| state.node(d).is_some_and(|doc| !doc.hidden))
        })
}

/// The document a node's analysis is attributed to.
fn source_document(node: &NodeRecord) -> Option<ItemId> {
    if node.is_document() {
        Some(node.id)
    } else {
        node.source_documents().first().copied()
    }
}

/// The object-store reference recorded on a document node.
pub fn stored_object(node: &NodeRecord) -> Option<ObjectRef> {
    let digest = node.attributes.get("object")?.as_text()?.to_string();
    if digest.len() < 4 || !digest.is_ascii() {
        return None;
    }
    let media_type = node
        .attributes
        .get("media_type")
        .and_then(Value::as_text)
        .unwrap_or("application/octet-stream")
        .to_string();
    let byte_length = node.attributes.get("byte_length").and_then(Value::as_integer).unwrap_or(0) as u64;
    Some(ObjectRef {
        path: format!("{}/{}/{}", &digest[0..2], &digest[2..4], digest),
        digest,
        media_type,
        byte_length,
    })
}

fn change_events(entries: &[ProvenanceEntry]) -> Vec<(ItemId, MutationKind)> {
    entries
        .iter()
        .filter_map(|e| match e.decode().ok()? {
            Mutation::CreateNode(n) => Some((n.id, MutationKind::CreateNode)),
            Mutation::UpdateNode(u) => Some((u.id, MutationKind::UpdateNode)),
            _ => None,
        })
        .collect()
}

/// Maps a run's candidates into the graph. Returns produced ids: documents,
/// then nodes, then edges.
fn materialize(
    txn: &mut Txn<'_>,
    objects: &dyn ObjectStore,
    actor: &Actor,
    attribution: &Attribution,
    trigger: ItemId,
    depth: u32,
    output: RunOutput,
) -> Result<Vec<ItemId>, OrchestrationError> {
    let mut produced = Vec::new();
    let mut documents = Vec::with_capacity(output.documents.len());
    for doc in output.documents {
        let object = objects.put(&doc.bytes, &doc.media_type)?;
        let mut candidate = NodeCandidate::new(doc.type_path, doc.label).with_attribution(attribution.clone());
        candidate.attributes = doc.attributes;
        candidate = candidate
            .with_attribute("object", Value::BinaryReference(object.digest.clone()))
            .with_attribute("media_type", Value::Text(object.media_type.clone()))
            .with_attribute("byte_length", Value::Integer(object.byte_length as i64));
        candidate.cascade_depth = depth;
        let id = txn.create_node(candidate, actor)?;
        documents.push(id);
        produced.push(id);
    }
    let mut nodes = Vec::with_capacity(output.nodes.len());
    for node in output.nodes {
        let mut candidate = NodeCandidate::new(node.type_path, node.label).with_attribution(attribution.clone());
        candidate.attributes = node.attributes;
        candidate.cascade_depth = depth;
        let id = txn.upsert_node(candidate, actor)?.id;
        nodes.push(id);
        if !produced.contains(&id) {
            produced.push(id);
        }
    }
    let resolve = |r: NodeRef| -> Result<ItemId, OrchestrationError> {
        match r {
            NodeRef::Trigger => Ok(trigger),
            NodeRef::Node(i) => nodes
                .get(i)
                .copied()
                .ok_or_else(|| ModuleError::Failed(format!("edge references node {i} out of range")).into()),
            NodeRef::Document(i) => documents
                .get(i)
                .copied()
                .ok_or_else(|| ModuleError::Failed(format!("edge references document {i} out of range")).into()),
            NodeRef::Existing(id) => Ok(id),
        }
    };
    for edge in output.edges {
        let candidate = EdgeCandidate {
            kind: edge.kind,
            from: resolve(edge.from)?,
            to: resolve(edge.to)?,
            grade: edge.grade,
            attribution: attribution.clone(),
            attributes: edge.attributes,
            cascade_depth: depth,
        };
        produced.push(txn.upsert_edge(candidate, actor)?);
    }
    Ok(produced)
}

