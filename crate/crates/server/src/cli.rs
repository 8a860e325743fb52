use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use casegraph_core::config::{Capability, EngineConfig, TokenGrant};
use casegraph_core::engine::{replay_ontology, Engine};
use casegraph_core::ner::{evaluate, extract, import_annotations, AnnotationSet, Gazetteer, Span};
use casegraph_core::orchestration::IngestRequest;
use casegraph_core::provenance::{self, ChainStatus};
use casegraph_core::schema::Actor;
use casegraph_core::search::{OntologyGraph, SearchMode, SearchQuery};
use casegraph_core::store::ViewFilter;
use casegraph_core::ItemId;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::auth::{generate_token, TokenTable};
use crate::routes::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "casegraph", version, about = "Case graph service and tools")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's data directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Ingest a file and run its analysis cascade.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        media_type: Option<String>,
        #[arg(long, default_value = "cli")]
        user: String,
    },
    /// Search node labels and document text.
    Search {
        text: String,
        /// Comma separated: exact, substring, fuzzy, ontological.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        max_edits: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value = "cli")]
        user: String,
    },
    /// Lay out the visible graph and print positions as JSON.
    Layout {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score NER predictions against gold spans.
    EvalNer {
        /// Gold spans, one JSON record per line.
        #[arg(long)]
        gold: PathBuf,
        /// Predicted spans in the same format.
        #[arg(long, conflicts_with = "corpus")]
        predicted: Option<PathBuf>,
        /// `{"doc", "text"}` lines to run the recognizer over.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Rebuild the graph from a log and print a summary.
    Replay {
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Check the hash chain of a log.
    Verify {
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Export a report over the given items.
    ExportReport {
        /// Comma separated item ids.
        #[arg(long, value_delimiter = ',', required = true)]
        items: Vec<String>,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Message(String),
    #[error(transparent)]
    Engine(#[from] casegraph_core::engine::EngineError),
    #[error(transparent)]
    Config(#[from] casegraph_core::config::ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<EngineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Some(dir) = &cli.data_dir {
        config.data_dir = Some(dir.clone());
    }
    Ok(config)
}

fn log_path(cli: &Cli, explicit: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    load_config(cli)?
        .log_path()
        .ok_or_else(|| CliError::Message("no log: pass --log or --data-dir".into()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Serve { port, bind } => {
            let mut config = load_config(&cli)?;
            if let Some(p) = port {
                config.port = *p;
            }
            if let Some(b) = bind {
                config.bind = b.clone();
            }
            serve(config)
        }
        Command::Ingest { file, media_type, user } => {
            let mut engine = Engine::open(load_config(&cli)?)?;
            let bytes = std::fs::read(file).map_err(io_err(file))?;
            let media_type = media_type.clone().unwrap_or_else(|| guess_media_type(file).to_string());
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned());
            let mut request = IngestRequest::new(bytes, &media_type);
            request.source_name = name;
            let job = engine.ingest(request, &Actor::user(user))?;
            let job = engine.orchestrator().job(job).expect("job just ran");
            emit(
                &None,
                &serde_json::to_string_pretty(&json!({
                    "job": job.id.0,
                    "status": job.status,
                    "document": job.document,
                    "produced": job.produced.len(),
                    "cascade_depth": job.cascade_depth,
                    "warnings": job.warnings,
                }))
                .expect("json"),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            text,
            modes,
            max_edits,
            depth,
            user,
        } => {
            let mut engine = Engine::open(load_config(&cli)?)?;
            let defaults = SearchQuery::default();
            let modes = if modes.is_empty() {
                defaults.modes.clone()
            } else {
                modes
                    .iter()
                    .map(|m| {
                        serde_json::from_value::<SearchMode>(json!(m))
                            .map_err(|_| CliError::Message(format!("unknown search mode {m:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            let query = SearchQuery {
                text: text.clone(),
                modes,
                fuzzy_max_edits: max_edits.unwrap_or(defaults.fuzzy_max_edits),
                ontology_max_depth: depth.unwrap_or(defaults.ontology_max_depth),
                decay: engine.config().search_decay,
                ..defaults
            };
            let hits = engine.search(&query, &ViewFilter::default(), &Actor::user(user))?;
            emit(&None, &serde_json::to_string_pretty(&hits).expect("json"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Layout { iterations, seed, out } => {
            let engine = Engine::open(load_config(&cli)?)?;
            let mut params = engine.config().layout;
            if let Some(i) = iterations {
                params.iterations = *i;
            }
            if let Some(s) = seed {
                params.seed = *s;
            }
            let positions = engine.layout(&ViewFilter::default(), Some(&params))?;
            emit(out, &serde_json::to_string_pretty(&positions).expect("json"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalNer {
            gold,
            predicted,
            corpus,
            gazetteer,
        } => eval_ner(gold, predicted.as_deref(), corpus.as_deref(), gazetteer.as_deref()),
        Command::Replay { log } => {
            let path = log_path(&cli, log)?;
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let entries = provenance::parse_log(&bytes).map_err(|e| CliError::Message(e.to_string()))?;
            let state = provenance::replay(&entries, None).map_err(|e| CliError::Message(e.to_string()))?;
            let ontology = replay_ontology(OntologyGraph::sample(), &entries)?;
            let summary = json!({
                "entries": entries.len(),
                "head_hash": entries.last().map_or(provenance::GENESIS_HASH, |e| e.entry_hash.as_str()),
                "nodes": state.node_count(),
                "edges": state.edge_count(),
                "hidden_nodes": state.nodes().filter(|n| n.hidden).count(),
                "hidden_edges": state.edges().filter(|e| e.hidden).count(),
                "ontology_version": ontology.version(),
            });
            emit(&None, &serde_json::to_string_pretty(&summary).expect("json"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { log } => {
            let path = log_path(&cli, log)?;
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            match provenance::verify_log_bytes(&bytes) {
                ChainStatus::Ok { entries, head } => {
                    println!("ok: {entries} entries, head {head}");
                    Ok(ExitCode::SUCCESS)
                }
                ChainStatus::Broken { seq, reason } => {
                    eprintln!("provenance chain broken at seq {seq}: {reason}");
                    Ok(ExitCode::FAILURE)
                }
                ChainStatus::BadHeader(reason) => {
                    eprintln!("provenance log header invalid: {reason}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::ExportReport {
            items,
            format,
            title,
            out,
        } => {
            let engine = Engine::open(load_config(&cli)?)?;
            let selection: Vec<ItemId> = items
                .iter()
                .map(|s| s.parse().map_err(|_| CliError::Message(format!("bad item id {s:?}"))))
                .collect::<Result<_, _>>()?;
            let bundle = engine.report(&selection, title.as_deref())?;
            let text = match format.as_str() {
                "json" => bundle.to_json(),
                "html" => bundle.to_html(),
                other => return Err(CliError::Message(format!("unknown format {other:?}"))),
            };
            emit(out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn guess_media_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "txt" | "md" => "text/plain",
        "eml" => "message/rfc822",
        "chat" => "text/x-chatlog",
        "script" => casegraph_core::orchestration::mocks::SCRIPT_MEDIA_TYPE,
        "wav" => "audio/wav",
        "mp3" => "audio/mpeg",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "mp4" => "video/mp4",
        _ => "application/octet-stream",
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    doc: String,
    text: String,
}

fn eval_ner(
    gold: &Path,
    predicted: Option<&Path>,
    corpus: Option<&Path>,
    gazetteer: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(io_err(p));
    let (gold_set, predicted_set) = match (predicted, corpus) {
        (Some(pred), None) => {
            let gold_set = import_annotations(&read(gold)?, None).map_err(|e| CliError::Message(format!("gold: {e}")))?;
            let pred_set = import_annotations(&read(pred)?, None).map_err(|e| CliError::Message(format!("predicted: {e}")))?;
            (gold_set, pred_set)
        }
        (None, Some(corpus)) => {
            let gazetteer = match gazetteer {
                Some(p) => Gazetteer::load(p).map_err(|e| CliError::Message(e.to_string()))?,
                None => Gazetteer::sample(),
            };
            let mut lengths = BTreeMap::new();
            let mut pred = AnnotationSet::new();
            for (i, line) in read(corpus)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let doc: CorpusLine = serde_json::from_str(line)
                    .map_err(|e| CliError::Message(format!("corpus line {}: {e}", i + 1)))?;
                lengths.insert(doc.doc.clone(), doc.text.chars().count());
                pred.insert_document(&doc.doc, extract(&doc.text, &gazetteer).iter().map(Span::from));
            }
            let gold_set =
                import_annotations(&read(gold)?, Some(&lengths)).map_err(|e| CliError::Message(format!("gold: {e}")))?;
            (gold_set, pred)
        }
        _ => return Err(CliError::Message("pass exactly one of --predicted or --corpus".into())),
    };
    let report = evaluate(&predicted_set, &gold_set).map_err(|e| CliError::Message(e.to_string()))?;
    emit(&None, &serde_json::to_string_pretty(&report).expect("json"))?;
    Ok(ExitCode::SUCCESS)
}

fn serve(mut config: EngineConfig) -> Result<ExitCode, CliError> {
    if config.tokens.is_empty() {
        let token = generate_token();
        eprintln!("no tokens configured; admin token for this run: {token}");
        config.tokens.insert(
            token,
            TokenGrant {
                user: "admin".into(),
                capabilities: [Capability::Admin].into(),
            },
        );
    }
    if config.data_dir.is_none() {
        tracing::warn!("no data_dir configured; the case lives in memory only");
    }
    let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
        .parse()
        .map_err(|e| CliError::Message(format!("bad bind address: {e}")))?;
    let tokens = TokenTable::from_grants(&config.tokens);
    // Opening verifies the whole chain and refuses a broken log.
    let engine = Engine::open(config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Message(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Message(format!("cannot listen on {addr}: {e}")))?;
        tracing::info!(%addr, "serving");
        eprintln!("listening on {}", listener.local_addr().map_err(io_err(Path::new("<socket>")))?);
        axum::serve(listener, router(AppState::new(engine, tokens)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Message(e.to_string()))
    })?;
    Ok(ExitCode::SUCCESS)
}
