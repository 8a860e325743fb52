use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;

/// A stored blob, addressed by the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub digest: String,
    pub media_type: String,
    pub byte_length: u64,
    /// Location relative to the store root, `ab/cd/<digest>`.
    pub path: String,
}

#[derive(Debug, Error)]
pub enum ObjectError {
    #[error("object store io: {0}")]
    Io(#[from] io::Error),
    #[error("refusing to store an empty payload")]
    Empty,
    #[error("object {0} not found")]
    NotFound(String),
    #[error("object {expected} is corrupt: content hashes to {actual}")]
    DigestMismatch { expected: String, actual: String },
}

pub trait ObjectStore: Send + Sync {
    fn put(&self, bytes: &[u8], media_type: &str) -> Result<ObjectRef, ObjectError>;
    /// Reads an object back and checks its digest.
    fn get(&self, object: &ObjectRef) -> Result<Vec<u8>, ObjectError>;
}

fn relative_path(digest: &str) -> String {
    format!("{}/{}/{}", &digest[0..2], &digest[2..4], digest)
}

fn make_ref(bytes: &[u8], media_type: &str) -> Result<ObjectRef, ObjectError> {
    if bytes.is_empty() {
        return Err(ObjectError::Empty);
    }
    let digest = sha256_hex(bytes);
    Ok(ObjectRef {
        path: relative_path(&digest),
        digest,
        media_type: media_type.to_string(),
        byte_length: bytes.len() as u64,
    })
}

fn check(object: &ObjectRef, bytes: Vec<u8>) -> Result<Vec<u8>, ObjectError> {
    let actual = sha256_hex(&bytes);
    if actual != object.digest {
        return Err(ObjectError::DigestMismatch {
            expected: object.digest.clone(),
            actual,
        });
    }
    Ok(bytes)
}

/// Directory tree with two levels of hex fan-out.
#[derive(Debug, Clone)]
pub struct FsObjectStore {
    root: PathBuf,
}

impl FsObjectStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, ObjectError> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(FsObjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ObjectStore for FsObjectStore {
    fn put(&self, bytes: &[u8], media_type: &str) -> Result<ObjectRef, ObjectError> {
        let object = make_ref(bytes, media_type)?;
        let target = self.root.join(&object.path);
        if target.exists() {
            return Ok(object);
        }
        let dir = target.parent().expect("fan-out path has a parent");
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.tmp", object.digest));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &target)?;
        Ok(object)
    }

    fn get(&self, object: &ObjectRef) -> Result<Vec<u8>, ObjectError> {
        match std::fs::read(self.root.join(relative_path(&object.digest))) {
            Ok(bytes) => check(object, bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(ObjectError::NotFound(object.digest.clone())),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Default)]
pub struct MemoryObjectStore {
    blobs: Mutex<HashMap<String, Vec<u8>>>,
}

impl ObjectStore for MemoryObjectStore {
    fn put(&self, bytes: &[u8], media_type: &str) -> Result<ObjectRef, ObjectError> {
        let object = make_ref(bytes, media_type)?;
        self.blobs
            .lock()
            .expect("object map lock")
            .entry(object.digest.clone())
            .or_insert_with(|| bytes.to_vec());
        Ok(object)
    }

    fn get(&self, object: &ObjectRef) -> Result<Vec<u8>, ObjectError> {
        let bytes = self
            .blobs
            .lock()
            .expect("object map lock")
            .get(&object.digest)
            .cloned()
            .ok_or_else(|| ObjectError::NotFound(object.digest.clone()))?;
        check(object, bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_addressing() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsObjectStore::new(dir.path()).unwrap();
        let a = store.put(b"evidence", "text/plain").unwrap();
        let b = store.put(b"evidence", "text/plain").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.byte_length, 8);
        assert!(dir.path().join(&a.path).is_file());
        assert_eq!(&a.path[..6], &format!("{}/{}/", &a.digest[..2], &a.digest[2..4]));
        assert_eq!(store.get(&a).unwrap(), b"evidence");
        assert!(matches!(store.put(b"", "text/plain"), Err(ObjectError::Empty)));
    }

    #[test]
    fn corruption_detected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsObjectStore::new(dir.path()).unwrap();
        let a = store.put(b"original", "text/plain").unwrap();
        std::fs::write(dir.path().join(&a.path), b"tampered").unwrap();
        assert!(matches!(store.get(&a), Err(ObjectError::DigestMismatch { .. })));
    }

    #[test]
    fn memory_store() {
        let store = MemoryObjectStore::default();
        let a = store.put(b"x", "application/octet-stream").unwrap();
        assert_eq!(store.get(&a).unwrap(), b"x");
        let mut missing = a.clone();
        missing.digest = "00".repeat(32);
        assert!(matches!(store.get(&missing), Err(ObjectError::NotFound(_))));
    }
}
