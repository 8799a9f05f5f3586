use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

/// Response cache keyed by request digest.
///
/// Always memoizes in memory; with a directory it also persists one file per
/// digest. Disk writes go to a temporary file that is then renamed into
/// place, so concurrent writers never expose a partial entry.
#[derive(Debug, Default)]
pub struct ResponseCache {
    memory: RwLock<HashMap<String, String>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { memory: RwLock::default(), dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, digest: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{digest}.txt")))
    }

    pub fn get(&self, digest: &str) -> io::Result<Option<String>> {
        if let Some(hit) = self.memory.read().expect("cache lock").get(digest) {
            return Ok(Some(hit.clone()));
        }
        let Some(path) = self.path(digest) else {
            return Ok(None);
        };
        match fs::read_to_string(&path) {
            Ok(text) => {
                self.memory
                    .write()
                    .expect("cache lock")
                    .insert(digest.to_owned(), text.clone());
                Ok(Some(text))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, digest: &str, text: &str) -> io::Result<()> {
        if let (Some(dir), Some(path)) = (self.dir.as_ref(), self.path(digest)) {
            fs::create_dir_all(dir)?;
            crate::jsonl::write_atomic(&path, text.as_bytes())?;
        }
        self.memory
            .write()
            .expect("cache lock")
            .insert(digest.to_owned(), text.to_owned());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
