//! Run manifests: the complete record needed to reproduce an experiment's
//! artifacts bit-identically — model hash, seed list, every numeric
//! parameter, and a checksum for each output file.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub tool_version: String,
    /// Hash of the exact model text the run used.
    pub model_hash: String,
    pub seeds: Vec<u64>,
    /// Every numeric parameter of the run, keyed `section.name`. BTreeMap so
    /// serialization order — and hence the manifest bytes — is canonical.
    pub params: BTreeMap<String, f64>,
    /// Output file name -> SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(experiment: &str, model_hash: &str, seeds: Vec<u64>) -> Self {
        RunManifest {
            experiment: experiment.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            model_hash: model_hash.to_string(),
            seeds,
            params: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: f64) -> &mut Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// Record an artifact that was just written into `dir`.
    pub fn add_artifact(&mut self, dir: &Path, name: &str) -> std::io::Result<()> {
        let sum = sha256_file(&dir.join(name))?;
        self.artifacts.insert(name.to_string(), sum);
        Ok(())
    }

    /// Write `manifest.json` into `dir`. The manifest itself is not listed in
    /// `artifacts` (it could not contain its own checksum).
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Compare this manifest's recorded checksums against the files in `dir`.
    /// Returns the names whose bytes differ or are missing.
    pub fn verify_artifacts(&self, dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for (name, want) in &self.artifacts {
            match sha256_file(&dir.join(name)) {
                Ok(got) if &got == want => {}
                _ => bad.push(name.clone()),
            }
        }
        bad
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write;
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write;
        write!(s, "{b:02x}").unwrap();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        // FIPS 180-2 test vector for "abc".
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.csv"), "a,b\n1,2\n").unwrap();
        let mut m = RunManifest::new("demo", "deadbeef", vec![1, 2, 3]);
        m.set("sde.h", 1e-3).set("clt.t", 400.0);
        m.add_artifact(dir.path(), "data.csv").unwrap();
        m.write(dir.path()).unwrap();

        let r = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(r.experiment, "demo");
        assert_eq!(r.seeds, vec![1, 2, 3]);
        assert_eq!(r.get("sde.h"), Some(1e-3));
        assert!(r.verify_artifacts(dir.path()).is_empty());

        std::fs::write(dir.path().join("data.csv"), "tampered").unwrap();
        assert_eq!(r.verify_artifacts(dir.path()), vec!["data.csv".to_string()]);
    }

    #[test]
    fn manifest_bytes_canonical() {
        let mut a = RunManifest::new("demo", "x", vec![5]);
        a.set("b.key", 2.0).set("a.key", 1.0);
        let mut b = RunManifest::new("demo", "x", vec![5]);
        b.set("a.key", 1.0).set("b.key", 2.0);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
