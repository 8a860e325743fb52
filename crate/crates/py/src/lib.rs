//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists with the same shape as the HTTP API's JSON.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard};

use casegraph_core::config::EngineConfig;
use casegraph_core::engine::Engine as CoreEngine;
use casegraph_core::ner::{evaluate, extract, import_annotations, AnnotationSet, Gazetteer, Span};
use casegraph_core::orchestration::IngestRequest;
use casegraph_core::provenance::{verify_log_bytes, ChainStatus};
use casegraph_core::report::{verify_report as check_report, ReportBundle};
use casegraph_core::schema::{Actor, Attributes, ConfidenceGrade, TypePath};
use casegraph_core::search::SearchQuery;
use casegraph_core::store::{Disposition, EdgeCandidate, NodeCandidate, ViewFilter};
use casegraph_core::layout::LayoutParams;
use casegraph_core::ItemId;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(casegraph, CaseGraphError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    CaseGraphError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn from_py<T: DeserializeOwned + Default>(value: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match value {
        Some(v) if !v.is_none() => Ok(depythonize(v)?),
        _ => Ok(T::default()),
    }
}

fn status_dict<'py>(py: Python<'py>, status: &ChainStatus) -> PyResult<Bound<'py, PyAny>> {
    let json = match status {
        ChainStatus::Ok { entries, head } => serde_json::json!({"ok": true, "entries": entries, "head_hash": head}),
        ChainStatus::Broken { seq, reason } => serde_json::json!({"ok": false, "seq": seq, "reason": reason}),
        ChainStatus::BadHeader(reason) => serde_json::json!({"ok": false, "seq": null, "reason": reason}),
    };
    to_py(py, &json)
}

/// A case: graph, provenance log and analysis modules.
///
/// `Engine()` keeps everything in memory. Pass `data_dir` to persist the log,
/// or `config` as a JSON string with the same keys as the server's config file.
#[pyclass(module = "casegraph")]
struct Engine {
    inner: Mutex<CoreEngine>,
    user: String,
}

impl Engine {
    fn lock(&self) -> PyResult<MutexGuard<'_, CoreEngine>> {
        self.inner.lock().map_err(|_| err("engine lock poisoned"))
    }

    fn actor(&self) -> Actor {
        Actor::user(self.user.clone())
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (data_dir=None, config=None, user="analyst"))]
    fn new(data_dir: Option<PathBuf>, config: Option<&str>, user: &str) -> PyResult<Self> {
        let mut cfg = match config {
            Some(json) => EngineConfig::from_json(json).map_err(err)?,
            None => EngineConfig::default(),
        };
        if data_dir.is_some() {
            cfg.data_dir = data_dir;
        }
        let engine = CoreEngine::open(cfg).map_err(err)?;
        Ok(Engine {
            inner: Mutex::new(engine),
            user: user.to_string(),
        })
    }

    /// Hash of the newest provenance entry.
    #[getter]
    fn head_hash(&self) -> PyResult<String> {
        Ok(self.lock()?.store().log().head_hash())
    }

    #[getter]
    fn log_length(&self) -> PyResult<usize> {
        Ok(self.lock()?.store().log().len())
    }

    /// Ingests a document and runs its analysis cascade. Returns the job.
    #[pyo3(signature = (content, media_type="text/plain", name=None))]
    fn ingest<'py>(
        &self,
        py: Python<'py>,
        content: &Bound<'py, PyAny>,
        media_type: &str,
        name: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let bytes: Vec<u8> = match content.extract::<String>() {
            Ok(text) => text.into_bytes(),
            Err(_) => content.extract::<Vec<u8>>()?,
        };
        let mut request = IngestRequest::new(bytes, media_type);
        if let Some(name) = name {
            request = request.named(name);
        }
        let actor = self.actor();
        let mut engine = self.lock()?;
        let job = engine.ingest(request, &actor).map_err(err)?;
        to_py(py, &engine.orchestrator().job(job).ok_or_else(|| err(format!("unknown job {job}")))?)
    }

    #[pyo3(signature = (type_path, label, attributes=None))]
    fn add_node(&self, type_path: &str, label: &str, attributes: Option<&Bound<'_, PyAny>>) -> PyResult<(u64, bool)> {
        let mut candidate = NodeCandidate::new(TypePath::parse(type_path).map_err(err)?, label);
        candidate.attributes = from_py::<Attributes>(attributes)?;
        let actor = self.actor();
        let up = self.lock()?.store_mut().upsert_node(candidate, &actor).map_err(err)?;
        Ok((up.id.0, up.created))
    }

    #[pyo3(signature = (kind, source, target, grade=None))]
    fn add_edge(&self, kind: &str, source: u64, target: u64, grade: Option<&str>) -> PyResult<u64> {
        let mut candidate = EdgeCandidate::new(kind, ItemId(source), ItemId(target));
        if let Some(g) = grade {
            candidate = candidate.with_grade(g.parse::<ConfidenceGrade>().map_err(err)?);
        }
        let actor = self.actor();
        Ok(self.lock()?.store_mut().upsert_edge(candidate, &actor).map_err(err)?.0)
    }

    /// Hides an item. Hiding a node hides its edges too; returns every hidden id.
    #[pyo3(signature = (item, reason="hidden by analyst"))]
    fn hide(&self, item: u64, reason: &str) -> PyResult<Vec<u64>> {
        let actor = self.actor();
        let receipt = self.lock()?.store_mut().hide(ItemId(item), &actor, reason).map_err(err)?;
        Ok(receipt.items.into_iter().map(|i| i.0).collect())
    }

    fn review(&self, item: u64, grade: &str) -> PyResult<()> {
        let grade = grade.parse::<ConfidenceGrade>().map_err(err)?;
        let actor = self.actor();
        self.lock()?.store_mut().review(ItemId(item), &actor, grade).map_err(err)?;
        Ok(())
    }

    #[pyo3(signature = (item, comment, disposition="none"))]
    fn annotate(&self, item: u64, comment: &str, disposition: &str) -> PyResult<()> {
        let disposition: Disposition =
            serde_json::from_value(serde_json::Value::String(disposition.into())).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let actor = self.actor();
        self.lock()?
            .store_mut()
            .annotate(ItemId(item), &actor, comment, disposition)
            .map_err(err)?;
        Ok(())
    }

    /// The node or edge record, or None when unknown.
    fn item<'py>(&self, py: Python<'py>, item: u64) -> PyResult<Option<Bound<'py, PyAny>>> {
        let engine = self.lock()?;
        let store = engine.store();
        if let Some(node) = store.node(ItemId(item)) {
            return to_py(py, node).map(Some);
        }
        store.edge(ItemId(item)).map(|e| to_py(py, e)).transpose()
    }

    #[pyo3(signature = (filter=None))]
    fn view<'py>(&self, py: Python<'py>, filter: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let filter: ViewFilter = from_py(filter)?;
        to_py(py, &self.lock()?.view(&filter).map_err(err)?)
    }

    #[pyo3(signature = (center, k=1, filter=None))]
    fn neighborhood<'py>(
        &self,
        py: Python<'py>,
        center: u64,
        k: usize,
        filter: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let filter: ViewFilter = from_py(filter)?;
        let view = self.lock()?.store().neighborhood(ItemId(center), k, &filter).map_err(err)?;
        to_py(py, &view)
    }

    /// `query` is a dict like `{"text": "motel", "modes": ["exact", "fuzzy"]}`.
    #[pyo3(signature = (query, filter=None))]
    fn search<'py>(
        &self,
        py: Python<'py>,
        query: &Bound<'py, PyAny>,
        filter: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let query: SearchQuery = if let Ok(text) = query.extract::<String>() {
            SearchQuery {
                text,
                ..SearchQuery::default()
            }
        } else {
            depythonize(query)?
        };
        let filter: ViewFilter = from_py(filter)?;
        let actor = self.actor();
        to_py(py, &self.lock()?.search(&query, &filter, &actor).map_err(err)?)
    }

    #[pyo3(signature = (filter=None, params=None))]
    fn layout<'py>(
        &self,
        py: Python<'py>,
        filter: Option<&Bound<'py, PyAny>>,
        params: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let filter: ViewFilter = from_py(filter)?;
        let params: Option<LayoutParams> = match params {
            Some(p) if !p.is_none() => Some(depythonize(p)?),
            _ => None,
        };
        to_py(py, &self.lock()?.layout(&filter, params.as_ref()).map_err(err)?)
    }

    /// Provenance entries that touched an item, oldest first.
    fn trace<'py>(&self, py: Python<'py>, item: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.lock()?.trace(ItemId(item)).map_err(err)?)
    }

    /// A self-contained report bundle as a JSON string, or HTML.
    #[pyo3(signature = (items, title=None, format="json"))]
    fn report(&self, items: Vec<u64>, title: Option<&str>, format: &str) -> PyResult<String> {
        let ids: Vec<ItemId> = items.into_iter().map(ItemId).collect();
        let bundle = self.lock()?.report(&ids, title).map_err(err)?;
        match format {
            "json" => Ok(bundle.to_json()),
            "html" => Ok(bundle.to_html()),
            other => Err(PyValueError::new_err(format!("unknown report format {other:?}"))),
        }
    }

    fn document_text(&self, item: u64) -> PyResult<String> {
        self.lock()?.document_text(ItemId(item)).map_err(err)
    }

    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        status_dict(py, &self.lock()?.store().verify())
    }
}

/// Checks a provenance log file without loading it into an engine.
#[pyfunction]
fn verify_log<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let bytes = std::fs::read(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    status_dict(py, &verify_log_bytes(&bytes))
}

/// Problems found in a report bundle's JSON; empty when it checks out.
#[pyfunction]
fn verify_report<'py>(py: Python<'py>, bundle: &str) -> PyResult<Bound<'py, PyAny>> {
    let bundle = ReportBundle::from_json(bundle).map_err(err)?;
    to_py(py, &check_report(&bundle))
}

/// Entity mentions in `text` using the bundled gazetteer, or one given as JSON.
#[pyfunction]
#[pyo3(signature = (text, gazetteer=None))]
fn extract_entities<'py>(py: Python<'py>, text: &str, gazetteer: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let gazetteer = match gazetteer {
        Some(json) => Gazetteer::from_json(json).map_err(err)?,
        None => Gazetteer::sample(),
    };
    to_py(py, &extract(text, &gazetteer))
}

/// Scores predictions against gold spans.
///
/// `gold` is NDJSON of `{"doc","start","end","label"}`. `corpus` maps doc ids
/// to text, which is run through the extractor to get predictions.
#[pyfunction]
#[pyo3(signature = (gold, corpus, gazetteer=None))]
fn evaluate_ner<'py>(
    py: Python<'py>,
    gold: &str,
    corpus: BTreeMap<String, String>,
    gazetteer: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let gazetteer = match gazetteer {
        Some(json) => Gazetteer::from_json(json).map_err(err)?,
        None => Gazetteer::sample(),
    };
    let lengths: BTreeMap<String, usize> = corpus.iter().map(|(d, t)| (d.clone(), t.chars().count())).collect();
    let mut predicted = AnnotationSet::new();
    for (doc, text) in &corpus {
        predicted.insert_document(doc, extract(text, &gazetteer).iter().map(Span::from));
    }
    let gold = import_annotations(gold, Some(&lengths)).map_err(err)?;
    to_py(py, &evaluate(&predicted, &gold).map_err(err)?)
}

#[pymodule]
fn casegraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add("CaseGraphError", m.py().get_type::<CaseGraphError>())?;
    m.add_function(wrap_pyfunction!(verify_log, m)?)?;
    m.add_function(wrap_pyfunction!(verify_report, m)?)?;
    m.add_function(wrap_pyfunction!(extract_entities, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_ner, m)?)?;
    Ok(())
}
