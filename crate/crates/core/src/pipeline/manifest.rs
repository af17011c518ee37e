//! Stage manifest: which inputs each stage last ran on.
//!
//! A stage is up to date when its input digest is unchanged, all of its
//! outputs still exist, and no stage it depends on ran in this invocation.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub digest: String,
    /// Output paths relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> io::Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }

    pub fn is_current(&self, key: &str, digest: &str, root: &Path) -> bool {
        match self.stages.get(key) {
            Some(entry) => entry.digest == digest && entry.outputs.iter().all(|o| root.join(o).is_file()),
            None => false,
        }
    }

    pub fn record(&mut self, key: &str, digest: String, outputs: &[PathBuf], root: &Path) {
        let outputs = outputs
            .iter()
            .map(|p| p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        self.stages.insert(key.to_string(), StageEntry { digest, outputs });
    }

    pub fn forget(&mut self, key: &str) {
        self.stages.remove(key);
    }
}

/// Incremental sha256 over labelled parameters and file contents.
#[derive(Clone, Default)]
pub struct InputDigest {
    hasher: Sha256,
}

impl InputDigest {
    pub fn new(stage: &str) -> Self {
        let mut d = InputDigest::default();
        d.text("version", env!("CARGO_PKG_VERSION")).text("stage", stage);
        d
    }

    pub fn text(&mut self, label: &str, value: &str) -> &mut Self {
        for part in [label.as_bytes(), value.as_bytes()] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part);
        }
        self
    }

    pub fn json<T: Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        let text = serde_json::to_string(value).expect("serializable parameters");
        self.text(label, &text)
    }

    /// Hashes a file's contents; a missing file hashes as a distinct marker.
    pub fn file(&mut self, path: &Path) -> io::Result<&mut Self> {
        let label = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match fs::read(path) {
            Ok(bytes) => {
                self.hasher.update(b"file");
                self.text(&label, "");
                self.hasher.update((bytes.len() as u64).to_le_bytes());
                self.hasher.update(&bytes);
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.text(&label, "<missing>");
            }
            Err(e) => return Err(e),
        }
        Ok(self)
    }

    pub fn finish(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_contents_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, "one").unwrap();
        let d1 = InputDigest::new("s").file(&f).unwrap().text("k", "1").finish();
        let d2 = InputDigest::new("s").file(&f).unwrap().text("k", "1").finish();
        assert_eq!(d1, d2);
        assert_eq!(d1.len(), 64);
        assert_ne!(d1, InputDigest::new("s").file(&f).unwrap().text("k", "2").finish());
        fs::write(&f, "two").unwrap();
        assert_ne!(d1, InputDigest::new("s").file(&f).unwrap().text("k", "1").finish());
        // label/value boundaries are unambiguous
        assert_ne!(
            InputDigest::new("s").text("ab", "c").finish(),
            InputDigest::new("s").text("a", "bc").finish()
        );
    }

    #[test]
    fn currency_rules() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.csv");
        fs::write(&out, "").unwrap();
        let mut m = Manifest::default();
        assert!(!m.is_current("s", "d", dir.path()));
        m.record("s", "d".into(), &[out.clone()], dir.path());
        assert_eq!(m.stages["s"].outputs, ["x.csv"]);
        assert!(m.is_current("s", "d", dir.path()));
        assert!(!m.is_current("s", "e", dir.path()));
        fs::remove_file(&out).unwrap();
        assert!(!m.is_current("s", "d", dir.path()));

        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), m);
        assert_eq!(Manifest::load(&dir.path().join("none")).unwrap(), Manifest::default());
    }
}
