use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::Result;

/// Kinds of artifact kept in the store, one directory each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Instance,
    State,
    Correlations,
    Timing,
    Failure,
    Summary,
    Figure,
}

impl ArtifactKind {
    fn dir(&self) -> &'static str {
        match self {
            ArtifactKind::Instance => "instances",
            ArtifactKind::State => "states",
            ArtifactKind::Correlations => "correlations",
            ArtifactKind::Timing => "timing",
            ArtifactKind::Failure => "failures",
            ArtifactKind::Summary => "summary",
            ArtifactKind::Figure => "figures",
        }
    }
}

/// Directory tree of artifacts named by content keys. Files are written to a
/// temporary sibling and renamed into place, so concurrent writers never
/// expose partial files.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: ArtifactKind, name: &str) -> PathBuf {
        self.root.join(kind.dir()).join(name)
    }

    pub fn exists(&self, kind: ArtifactKind, name: &str) -> bool {
        self.path(kind, name).is_file()
    }

    pub fn write(&self, kind: ArtifactKind, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(kind, name);
        let dir = path.parent().expect("artifact paths have a parent");
        std::fs::create_dir_all(dir)?;
        let mut tmp = NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(path)
    }

    pub fn read(&self, kind: ArtifactKind, name: &str) -> Result<Vec<u8>> {
        Ok(std::fs::read(self.path(kind, name))?)
    }

    pub fn read_string(&self, kind: ArtifactKind, name: &str) -> Result<String> {
        Ok(std::fs::read_to_string(self.path(kind, name))?)
    }

    pub fn remove(&self, kind: ArtifactKind, name: &str) -> Result<()> {
        match std::fs::remove_file(self.path(kind, name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }
}

/// Hex SHA-256 over the parts joined by `\n`.
pub fn content_key(parts: &[&str]) -> String {
    hex::encode(Sha256::digest(parts.join("\n").as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_are_atomic_and_readable() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(!store.exists(ArtifactKind::Summary, "a.csv"));
        store.write(ArtifactKind::Summary, "a.csv", b"x,y\n").unwrap();
        store.write(ArtifactKind::Summary, "a.csv", b"x,y\n1,2\n").unwrap();
        assert_eq!(store.read_string(ArtifactKind::Summary, "a.csv").unwrap(), "x,y\n1,2\n");
        let leftovers = std::fs::read_dir(dir.path().join("summary")).unwrap().count();
        assert_eq!(leftovers, 1);
        store.remove(ArtifactKind::Summary, "a.csv").unwrap();
        store.remove(ArtifactKind::Summary, "a.csv").unwrap();
    }

    #[test]
    fn keys_depend_on_every_part() {
        assert_ne!(content_key(&["a", "bc"]), content_key(&["ab", "c"]));
        assert_eq!(content_key(&["a"]).len(), 64);
    }
}
