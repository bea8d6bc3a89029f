//! Flat JSON files keyed by id, written atomically (temp file + rename).

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Session,
    Job,
    Result,
}

impl Kind {
    fn dir(self) -> &'static str {
        match self {
            Kind::Session => "sessions",
            Kind::Job => "jobs",
            Kind::Result => "results",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Kind::Session => "session",
            Kind::Job => "job",
            Kind::Result => "result",
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{} {id} not found", kind.label())]
    NotFound { kind: Kind, id: String },
    #[error("cannot read {}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("encoding failed: {0}")]
    Encode(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for kind in [Kind::Session, Kind::Job, Kind::Result] {
            fs::create_dir_all(root.join(kind.dir()))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File backing `id`, or `None` for ids that are not plain tokens.
    pub fn path(&self, kind: Kind, id: &str) -> Option<PathBuf> {
        let plain = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        plain.then(|| self.root.join(kind.dir()).join(format!("{id}.json")))
    }

    fn existing_path(&self, kind: Kind, id: &str) -> Result<PathBuf, StoreError> {
        self.path(kind, id).ok_or_else(|| StoreError::NotFound { kind, id: id.to_string() })
    }

    pub fn save<T: Serialize>(&self, kind: Kind, id: &str, value: &T) -> Result<(), StoreError> {
        let path = self.existing_path(kind, id)?;
        write_atomic(&path, &serde_json::to_vec_pretty(value)?)?;
        Ok(())
    }

    pub fn load<T: DeserializeOwned>(&self, kind: Kind, id: &str) -> Result<T, StoreError> {
        let path = self.existing_path(kind, id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound { kind, id: id.to_string() })
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path, message: e.to_string() })
    }

    /// Ids with a committed file, sorted.
    pub fn list(&self, kind: Kind) -> io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join(kind.dir()))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                if !id.starts_with('.') {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()))
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_staged(path, bytes, None)
}

/// Simulates a crash after `written` bytes reach the temp file: nothing is
/// renamed and an error is returned.
#[doc(hidden)]
pub fn write_atomic_interrupted(path: &Path, bytes: &[u8], written: usize) -> io::Result<()> {
    write_staged(path, bytes, Some(written))
}

fn write_staged(path: &Path, bytes: &[u8], crash_after: Option<usize>) -> io::Result<()> {
    let tmp = temp_path(path);
    let mut f = File::create(&tmp)?;
    if let Some(n) = crash_after {
        f.write_all(&bytes[..n.min(bytes.len())])?;
        return Err(io::Error::new(io::ErrorKind::Interrupted, "write interrupted"));
    }
    let res = f.write_all(bytes).and_then(|_| f.sync_all()).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_must_be_plain_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        assert!(s.path(Kind::Session, "../etc/passwd").is_none());
        assert!(s.path(Kind::Session, "").is_none());
        assert!(s.path(Kind::Job, "a-1_B").is_some());
        assert!(matches!(s.load::<u8>(Kind::Session, "../x"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn list_skips_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        s.save(Kind::Job, "b", &1).unwrap();
        s.save(Kind::Job, "a", &2).unwrap();
        let p = s.path(Kind::Job, "c").unwrap();
        assert!(write_atomic_interrupted(&p, b"123", 1).is_err());
        assert_eq!(s.list(Kind::Job).unwrap(), vec!["a", "b"]);
    }
}
