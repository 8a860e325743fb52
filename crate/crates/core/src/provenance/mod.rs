//! Write-once, read-many provenance archive.
//!
//! Every graph mutation and analyst action becomes one [`ProvenanceEntry`].
//! Entries are chained by SHA-256 over their canonical JSON form and stored
//! as newline-delimited JSON after a one-line header naming the digest. The
//! graph store is a fold over this log.

mod mutation;
mod trace;

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::schema::Actor;
use crate::store::GraphState;

pub use mutation::{
    ClampPayload, EdgeUpdate, HidePayload, IngestPayload, ModuleRunPayload, Mutation, MutationKind, NodeUpdate,
    OntologyEditPayload, ReviewPayload, RunStatus, SearchPayload,
};
pub use trace::trace;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";
pub const LOG_FORMAT: &str = "casegraph-provenance";
pub const DIGEST_ALGORITHM: &str = "sha256";

#[derive(Debug, Error)]
pub enum ProvenanceError {
    #[error("provenance storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("provenance chain broken at seq {seq}: {reason}")]
    Broken { seq: u64, reason: String },
    #[error("provenance log header invalid: {0}")]
    Header(String),
    #[error("entry {seq} payload does not decode: {message}")]
    Decode { seq: u64, message: String },
    #[error("payload does not serialize: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("no provenance for unknown item {0}")]
    UnknownItem(crate::ids::ItemId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub mutation: MutationKind,
    pub payload: Value,
    pub prev_hash: String,
    pub entry_hash: String,
}

impl ProvenanceEntry {
    /// Digest over every field except `entry_hash`.
    pub fn compute_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("entry serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("entry_hash");
        }
        sha256_hex(to_canonical_string(&value).as_bytes())
    }

    pub fn decode(&self) -> Result<Mutation, ProvenanceError> {
        Mutation::join(self.mutation, &self.payload).map_err(|e| ProvenanceError::Decode {
            seq: self.seq,
            message: e.to_string(),
        })
    }

    /// The exact log line (without the trailing newline).
    pub fn to_line(&self) -> String {
        to_canonical_string(&serde_json::to_value(self).expect("entry serializes"))
    }
}

/// An entry before it is sealed into the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryDraft {
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub digest: String,
}

impl Default for LogHeader {
    fn default() -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            version: 1,
            digest: DIGEST_ALGORITHM.to_string(),
        }
    }
}

impl LogHeader {
    pub fn to_line(&self) -> String {
        to_canonical_string(&serde_json::to_value(self).expect("header serializes"))
    }
}

/// Destination for sealed log lines. `write` receives whole lines for one
/// commit and must not return before they are durable.
pub trait LogSink: Send + Sync {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub bytes: Vec<u8>,
}

impl LogSink for MemorySink {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.bytes.extend_from_slice(bytes);
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    file: File,
}

impl FileSink {
    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogSink for FileSink {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.write_all(bytes)?;
        self.file.sync_data()
    }
}

/// Result of chain verification. A broken chain is a value, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainStatus {
    Ok { entries: u64, head: String },
    Broken { seq: u64, reason: String },
    BadHeader(String),
}

impl ChainStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainStatus::Ok { .. })
    }
}

/// Checks hashes, links and seq contiguity of already-parsed entries.
pub fn verify_chain(entries: &[ProvenanceEntry]) -> ChainStatus {
    let mut prev = GENESIS_HASH.to_string();
    for (index, entry) in entries.iter().enumerate() {
        let expected = index as u64;
        if let Err(reason) = check_entry(entry, expected, &prev) {
            return ChainStatus::Broken { seq: expected, reason };
        }
        prev = entry.entry_hash.clone();
    }
    ChainStatus::Ok {
        entries: entries.len() as u64,
        head: prev,
    }
}

fn check_entry(entry: &ProvenanceEntry, expected_seq: u64, prev: &str) -> Result<(), String> {
    if entry.seq != expected_seq {
        return Err(format!("expected seq {expected_seq}, found {}", entry.seq));
    }
    if entry.prev_hash != prev {
        return Err("prev_hash does not match the preceding entry".into());
    }
    if entry.compute_hash() != entry.entry_hash {
        return Err("entry_hash does not match entry content".into());
    }
    Ok(())
}

/// Parses and verifies raw log bytes (header line plus entries). Each line
/// must be byte-identical to the canonical serialization of the entry it
/// decodes to, so any corruption is attributed to the line it occurs in.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<ProvenanceEntry>, ProvenanceError> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut lines = bytes.split(|b| *b == b'\n');
    let header = lines.next().unwrap_or_default();
    if header != LogHeader::default().to_line().as_bytes() {
        return Err(ProvenanceError::Header(String::from_utf8_lossy(header).into_owned()));
    }
    let mut rest: Vec<&[u8]> = lines.collect();
    match rest.last() {
        Some(&&[]) => {
            rest.pop();
        }
        _ => {
            let seq = rest.len().saturating_sub(1) as u64;
            return Err(ProvenanceError::Broken {
                seq,
                reason: "log does not end with a newline".into(),
            });
        }
    }
    let mut entries = Vec::with_capacity(rest.len());
    let mut prev = GENESIS_HASH.to_string();
    for (index, line) in rest.into_iter().enumerate() {
        let seq = index as u64;
        let broken = |reason: String| ProvenanceError::Broken { seq, reason };
        let text = std::str::from_utf8(line).map_err(|_| broken("line is not UTF-8".into()))?;
        let value: Value = serde_json::from_str(text).map_err(|e| broken(format!("unparsable line: {e}")))?;
        if to_canonical_string(&value) != text {
            return Err(broken("line is not in canonical form".into()));
        }
        let entry: ProvenanceEntry =
            serde_json::from_value(value).map_err(|e| broken(format!("malformed entry: {e}")))?;
        if entry.to_line() != text {
            return Err(broken("line does not round-trip".into()));
        }
        check_entry(&entry, seq, &prev).map_err(broken)?;
        prev = entry.entry_hash.clone();
        entries.push(entry);
    }
    Ok(entries)
}

/// `verify` over raw bytes, reporting instead of erroring.
pub fn verify_log_bytes(bytes: &[u8]) -> ChainStatus {
    match parse_log(bytes) {
        Ok(entries) => ChainStatus::Ok {
            entries: entries.len() as u64,
            head: entries.last().map_or(GENESIS_HASH.to_string(), |e| e.entry_hash.clone()),
        },
        Err(ProvenanceError::Broken { seq, reason }) => ChainStatus::Broken { seq, reason },
        Err(ProvenanceError::Header(h)) => ChainStatus::BadHeader(h),
        Err(other) => ChainStatus::Broken {
            seq: 0,
            reason: other.to_string(),
        },
    }
}

pub fn serialize_log(entries: &[ProvenanceEntry]) -> Vec<u8> {
    let mut out = LogHeader::default().to_line().into_bytes();
    out.push(b'\n');
    for entry in entries {
        out.extend_from_slice(entry.to_line().as_bytes());
        out.push(b'\n');
    }
    out
}

/// The append-only archive. Entries are held in memory for reads and
/// mirrored to a sink for durability.
pub struct ProvenanceLog {
    entries: Vec<ProvenanceEntry>,
    sink: Box<dyn LogSink>,
}

impl std::fmt::Debug for ProvenanceLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProvenanceLog")
            .field("entries", &self.entries.len())
            .field("head", &self.head_hash())
            .finish()
    }
}

impl ProvenanceLog {
    pub fn in_memory() -> Self {
        Self::with_sink(Vec::new(), Box::new(MemorySink::default()))
    }

    /// Wraps already-verified entries and a sink positioned after them.
    pub fn with_sink(entries: Vec<ProvenanceEntry>, sink: Box<dyn LogSink>) -> Self {
        ProvenanceLog { entries, sink }
    }

    /// Opens (or creates) a log file. Existing content is verified first; a
    /// broken chain is refused.
    pub fn open(path: &Path) -> Result<Self, ProvenanceError> {
        let existing = match std::fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let entries = parse_log(&existing)?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if existing.is_empty() {
            let mut header = LogHeader::default().to_line().into_bytes();
            header.push(b'\n');
            file.write_all(&header)?;
            file.sync_data()?;
        }
        Ok(Self::with_sink(
            entries,
            Box::new(FileSink {
                path: path.to_path_buf(),
                file,
            }),
        ))
    }

    pub fn entries(&self) -> &[ProvenanceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn head_hash(&self) -> String {
        self.entries
            .last()
            .map_or_else(|| GENESIS_HASH.to_string(), |e| e.entry_hash.clone())
    }

    /// Seals `drafts` onto the chain and writes them in one sink call. On a
    /// sink failure nothing is added and the caller's mutation must fail.
    pub fn append(&mut self, drafts: &[EntryDraft]) -> Result<Vec<ProvenanceEntry>, ProvenanceError> {
        let mut sealed = Vec::with_capacity(drafts.len());
        let mut prev = self.head_hash();
        let mut bytes = Vec::new();
        for (offset, draft) in drafts.iter().enumerate() {
            let (mutation, payload) = draft.mutation.split()?;
            let mut entry = ProvenanceEntry {
                seq: self.next_seq() + offset as u64,
                timestamp: draft.timestamp,
                actor: draft.actor.clone(),
                mutation,
                payload,
                prev_hash: prev,
                entry_hash: String::new(),
            };
            entry.entry_hash = entry.compute_hash();
            prev = entry.entry_hash.clone();
            bytes.extend_from_slice(entry.to_line().as_bytes());
            bytes.push(b'\n');
            sealed.push(entry);
        }
        self.sink.write(&bytes)?;
        self.entries.extend(sealed.iter().cloned());
        Ok(sealed)
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(&self.entries)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot replay a broken chain (seq {seq}: {reason})")]
    Broken { seq: u64, reason: String },
    #[error(transparent)]
    Decode(#[from] ProvenanceError),
}

/// Reconstructs graph state by folding entries `0..=up_to` in seq order.
pub fn replay(entries: &[ProvenanceEntry], up_to: Option<u64>) -> Result<GraphState, ReplayError> {
    if let ChainStatus::Broken { seq, reason } = verify_chain(entries) {
        return Err(ReplayError::Broken { seq, reason });
    }
    let mut state = GraphState::default();
    for entry in entries.iter().take_while(|e| up_to.is_none_or(|max| e.seq <= max)) {
        state.apply_entry(entry)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ItemId;
    use chrono::TimeZone;

    fn draft(i: u64) -> EntryDraft {
        EntryDraft {
            timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            actor: Actor::user("alisa"),
            mutation: Mutation::Hide(HidePayload {
                id: ItemId(i),
                reason: format!("reason {i}"),
            }),
        }
    }

    #[test]
    fn genesis_and_linking() {
        let mut log = ProvenanceLog::in_memory();
        let first = log.append(&[draft(0)]).unwrap().remove(0);
        assert_eq!(first.seq, 0);
        assert_eq!(first.prev_hash, GENESIS_HASH);
        let second = log.append(&[draft(1)]).unwrap().remove(0);
        assert_eq!(second.prev_hash, first.entry_hash);
        assert!(log.verify().is_ok());
    }

    #[test]
    fn empty_log_verifies() {
        assert!(verify_chain(&[]).is_ok());
        assert!(verify_log_bytes(b"").is_ok());
        assert!(verify_log_bytes(&serialize_log(&[])).is_ok());
    }

    #[test]
    fn removed_entry_breaks_at_gap() {
        let mut log = ProvenanceLog::in_memory();
        let drafts: Vec<_> = (0..10).map(draft).collect();
        log.append(&drafts).unwrap();
        let mut entries = log.entries().to_vec();
        entries.remove(4);
        assert!(matches!(verify_chain(&entries), ChainStatus::Broken { seq: 4, .. }));
        assert!(matches!(
            verify_log_bytes(&serialize_log(&entries)),
            ChainStatus::Broken { seq: 4, .. }
        ));
    }

    #[test]
    fn tampered_payload_detected_at_its_seq() {
        let mut log = ProvenanceLog::in_memory();
        let drafts: Vec<_> = (0..10).map(draft).collect();
        log.append(&drafts).unwrap();
        let mut entries = log.entries().to_vec();
        entries[5].payload["reason"] = Value::String("edited".into());
        assert!(matches!(verify_chain(&entries), ChainStatus::Broken { seq: 5, .. }));
    }

    #[test]
    fn missing_trailing_newline_is_broken() {
        let mut log = ProvenanceLog::in_memory();
        log.append(&[draft(0), draft(1)]).unwrap();
        let mut bytes = serialize_log(log.entries());
        bytes.pop();
        assert!(matches!(verify_log_bytes(&bytes), ChainStatus::Broken { seq: 1, .. }));
    }

    #[test]
    fn file_log_reopens_and_continues_chain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        {
            let mut log = ProvenanceLog::open(&path).unwrap();
            log.append(&[draft(0), draft(1)]).unwrap();
        }
        let mut log = ProvenanceLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        log.append(&[draft(2)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(verify_log_bytes(&bytes), log.verify());
        assert!(matches!(log.verify(), ChainStatus::Ok { entries: 3, .. }));
    }

    #[test]
    fn decode_round_trip() {
        let mut log = ProvenanceLog::in_memory();
        let d = draft(7);
        let entry = log.append(std::slice::from_ref(&d)).unwrap().remove(0);
        assert_eq!(entry.decode().unwrap(), d.mutation);
        assert_eq!(entry.mutation.as_str(), "hide");
    }
}
