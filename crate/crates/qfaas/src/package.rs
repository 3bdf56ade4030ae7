//! Function packages and the content-addressed registry.
//!
//! A package is a tar archive holding `manifest.json` and `circuit.qir`.
//! Archives are built with fixed metadata (mtime 0, uid/gid 0, mode 0644)
//! so the same manifest and source always produce the same bytes and the
//! same `sha256:` digest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use qfaas_core::ir::{Dialect, TemplateKind};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::store::{DocStore, StorageError};
use crate::util::{self, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SOURCE_FILE: &str = "circuit.qir";

const REGISTRY: &str = "registry";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub name: String,
    pub dialect_tag: Dialect,
    #[serde(default)]
    pub kind: Option<TemplateKind>,
    #[serde(default)]
    pub declared_params: Vec<String>,
    pub pre_processor: String,
    pub post_processor: String,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Manifest defaults for a dialect: the function skeleton an engineer's
/// code is merged into.
pub fn skeleton(name: &str, dialect: Dialect) -> Manifest {
    let (sdk, handler, runtime) = match dialect {
        Dialect::Qiskit => ("qiskit", "handler.py", "python3"),
        Dialect::Cirq => ("cirq", "handler.py", "python3"),
        Dialect::Braket => ("braket", "handler.py", "python3"),
        Dialect::Qsharp => ("qsharp", "handler.qs", "dotnet"),
    };
    let config = [("sdk", sdk), ("handler", handler), ("runtime", runtime)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    Manifest {
        name: name.to_owned(),
        dialect_tag: dialect,
        kind: None,
        declared_params: Vec::new(),
        pre_processor: "identity".into(),
        post_processor: "raw_counts".into(),
        config,
    }
}

fn append(builder: &mut tar::Builder<Vec<u8>>, path: &str, data: &[u8]) -> std::io::Result<()> {
    let mut h = tar::Header::new_ustar();
    h.set_path(path)?;
    h.set_size(data.len() as u64);
    h.set_mode(0o644);
    h.set_mtime(0);
    h.set_uid(0);
    h.set_gid(0);
    h.set_entry_type(tar::EntryType::Regular);
    h.set_cksum();
    builder.append(&h, data)
}

/// Deterministic archive of `manifest` and `source`.
pub fn build_package(manifest: &Manifest, source: &str) -> Vec<u8> {
    let manifest_json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    let mut b = tar::Builder::new(Vec::new());
    append(&mut b, MANIFEST_FILE, &manifest_json).expect("in-memory tar");
    append(&mut b, SOURCE_FILE, source.as_bytes()).expect("in-memory tar");
    b.into_inner().expect("in-memory tar")
}

pub fn unpack(bytes: &[u8]) -> Result<(Manifest, String)> {
    let bad = |m: String| Error::Internal(format!("malformed package: {m}"));
    let mut manifest = None;
    let mut source = None;
    let mut archive = tar::Archive::new(bytes);
    for entry in archive.entries().map_err(|e| bad(e.to_string()))? {
        let mut entry = entry.map_err(|e| bad(e.to_string()))?;
        let path = entry.path().map_err(|e| bad(e.to_string()))?.to_string_lossy().into_owned();
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(|e| bad(e.to_string()))?;
        match path.as_str() {
            MANIFEST_FILE => manifest = Some(serde_json::from_slice(&data).map_err(|e| bad(e.to_string()))?),
            SOURCE_FILE => source = Some(String::from_utf8(data).map_err(|e| bad(e.to_string()))?),
            other => return Err(bad(format!("unexpected entry `{other}`"))),
        }
    }
    match (manifest, source) {
        (Some(m), Some(s)) => Ok((m, s)),
        _ => Err(bad("missing manifest or source".into())),
    }
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", sha256_hex(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub image_digest: String,
    pub size: usize,
    pub built_at: String,
}

/// Immutable blob store keyed by digest: `<root>/sha256/<hex>.tar`, with
/// an entry document per blob in the `registry` collection.
pub struct Registry {
    root: PathBuf,
    store: Arc<DocStore>,
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>, store: Arc<DocStore>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sha256")).map_err(StorageError::from)?;
        Ok(Registry { root, store })
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        let hex = digest.trim_start_matches("sha256:");
        self.root.join("sha256").join(format!("{hex}.tar"))
    }

    /// Stores `bytes` under their digest. Writing an existing digest is a
    /// no-op; the stored bytes are never replaced.
    pub fn push(&self, bytes: &[u8]) -> Result<RegistryEntry> {
        let d = digest(bytes);
        if let Ok(e) = self.store.get_typed::<RegistryEntry>(REGISTRY, &d) {
            if self.blob_path(&d).exists() {
                return Ok(e);
            }
        }
        let path = self.blob_path(&d);
        let tmp = path.with_extension(format!("{}.tmp", util::random_hex(4)));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(StorageError::from)?;
        let entry = RegistryEntry {
            image_digest: d.clone(),
            size: bytes.len(),
            built_at: util::format_ts(&util::now_ms()),
        };
        self.store.put_typed(REGISTRY, &d, &entry)?;
        Ok(entry)
    }

    pub fn get(&self, digest: &str) -> Result<Vec<u8>> {
        let bytes = fs::read(self.blob_path(digest)).map_err(|_| Error::NotFound(format!("image {digest}")))?;
        if self::digest(&bytes) != digest {
            return Err(Error::Internal(format!("registry blob {digest} does not match its digest")));
        }
        Ok(bytes)
    }

    pub fn entry(&self, digest: &str) -> Result<RegistryEntry> {
        Ok(self.store.get_typed(REGISTRY, digest)?)
    }

    pub fn entries(&self) -> Result<Vec<RegistryEntry>> {
        self.store
            .list(REGISTRY)?
            .into_iter()
            .map(|d| serde_json::from_value(d.body).map_err(|e| StorageError::from(e).into()))
            .collect()
    }

    pub fn describe(&self, digest: &str) -> serde_json::Value {
        match self.entry(digest) {
            Ok(e) => json!(e),
            Err(_) => serde_json::Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packages_are_deterministic_and_round_trip() {
        let m = skeleton("qrng", Dialect::Qiskit);
        let a = build_package(&m, "builtin qrng;");
        let b = build_package(&m, "builtin qrng;");
        assert_eq!(a, b);
        assert_eq!(digest(&a), digest(&b));
        assert_ne!(digest(&a), digest(&build_package(&m, "builtin qrng; ")));
        let (m2, src) = unpack(&a).unwrap();
        assert_eq!(m2, m);
        assert_eq!(src, "builtin qrng;");
    }

    #[test]
    fn registry_is_write_once() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(DocStore::open(dir.path().join("db")).unwrap());
        let reg = Registry::open(dir.path().join("reg"), store).unwrap();
        let bytes = build_package(&skeleton("x", Dialect::Cirq), "qubits 1; h 0; measure all;");
        let e1 = reg.push(&bytes).unwrap();
        let e2 = reg.push(&bytes).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(reg.get(&e1.image_digest).unwrap(), bytes);
        assert_eq!(reg.entries().unwrap().len(), 1);
    }
}
