//! File-backed document store.
//!
//! Layout: `<root>/<collection>/<escaped id>.doc`, one file per document.
//! Each file is a single header line followed by the payload:
//!
//! ```text
//! qdoc1 <revision> <json|gzip|tomb> <payload length> <sha256 hex>\n<payload>
//! ```
//!
//! Writes go to a temporary sibling, are fsynced, then renamed over the
//! target, so a reader sees either the old or the new file. Deletes leave a
//! tombstone so revisions keep increasing if the id is reused. Leftover
//! `*.tmp` files from interrupted writes are removed on open.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Payloads above this size are stored gzip-compressed.
pub const COMPRESS_THRESHOLD: usize = 64 * 1024;

const MAGIC: &str = "qdoc1";
const EXT: &str = "doc";

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("document {collection}/{id} not found")]
    NotFound { collection: String, id: String },
    #[error("invalid collection name `{0}`")]
    BadCollection(String),
    #[error("document id must be non-empty")]
    EmptyId,
    #[error("corrupt document {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("injected crash at {0:?}")]
    InjectedCrash(CrashPoint),
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
    #[error("document encoding: {0}")]
    Json(#[from] serde_json::Error),
}

/// A point inside `put` where the fault hook may abort the write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Temporary file created, nothing written.
    AfterCreate,
    /// Only the first `n` bytes of the file reached the disk.
    MidWrite(usize),
    /// Fully written and synced, not yet renamed.
    BeforeRename,
    /// Renamed into place but the call never returned.
    AfterRename,
}

/// Decides, per write, whether and where to crash. Receives the collection
/// and the total encoded file length.
pub type FaultHook = Arc<dyn Fn(&str, usize) -> Option<CrashPoint> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub collection: String,
    pub id: String,
    pub revision: u64,
    pub body: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Json,
    Gzip,
    Tomb,
}

impl Encoding {
    fn as_str(self) -> &'static str {
        match self {
            Encoding::Json => "json",
            Encoding::Gzip => "gzip",
            Encoding::Tomb => "tomb",
        }
    }
}

struct Header {
    revision: u64,
    encoding: Encoding,
}

pub struct DocStore {
    root: PathBuf,
    locks: Mutex<HashMap<(String, String), Arc<Mutex<()>>>>,
    fault: Mutex<Option<FaultHook>>,
    tmp_counter: AtomicU64,
}

impl std::fmt::Debug for DocStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocStore").field("root", &self.root).finish()
    }
}

fn check_collection(name: &str) -> Result<(), StorageError> {
    let ok = !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(StorageError::BadCollection(name.to_owned()))
    }
}

/// Ids may hold any text; bytes outside `[A-Za-z0-9_-]` are `%XX`-escaped.
fn escape_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn unescape_id(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = name.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    // directory fsync makes the rename durable; not supported everywhere
    match File::open(dir).and_then(|d| d.sync_all()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::PermissionDenied => Ok(()),
        Err(e) if e.raw_os_error() == Some(22) => Ok(()),
        Err(e) => Err(e),
    }
}

impl DocStore {
    /// Opens (creating if needed) a store rooted at `root` and removes
    /// temporary files left behind by interrupted writes.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        for entry in fs::read_dir(&root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            for f in fs::read_dir(entry.path())? {
                let p = f?.path();
                if p.extension().is_some_and(|e| e == "tmp") {
                    fs::remove_file(&p)?;
                }
            }
        }
        Ok(DocStore {
            root,
            locks: Mutex::new(HashMap::new()),
            fault: Mutex::new(None),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.lock() = hook;
    }

    fn doc_path(&self, collection: &str, id: &str) -> PathBuf {
        self.root
            .join(collection)
            .join(format!("{}.{EXT}", escape_id(id)))
    }

    fn doc_lock(&self, collection: &str, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .entry((collection.to_owned(), id.to_owned()))
            .or_default()
            .clone()
    }

    fn read_file(path: &Path) -> Result<Option<(Header, Vec<u8>)>, StorageError> {
        let raw = match fs::read(path) {
            Ok(r) => r,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: &str| StorageError::Corrupt {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        let nl = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header"))?;
        let header = std::str::from_utf8(&raw[..nl]).map_err(|_| corrupt("header not utf-8"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 5 || fields[0] != MAGIC {
            return Err(corrupt("bad header"));
        }
        let revision: u64 = fields[1].parse().map_err(|_| corrupt("bad revision"))?;
        let encoding = match fields[2] {
            "json" => Encoding::Json,
            "gzip" => Encoding::Gzip,
            "tomb" => Encoding::Tomb,
            _ => return Err(corrupt("bad encoding")),
        };
        let len: usize = fields[3].parse().map_err(|_| corrupt("bad length"))?;
        let payload = &raw[nl + 1..];
        if payload.len() != len {
            return Err(corrupt("length mismatch"));
        }
        if hex::encode(Sha256::digest(payload)) != fields[4] {
            return Err(corrupt("checksum mismatch"));
        }
        Ok(Some((Header { revision, encoding }, payload.to_vec())))
    }

    fn decode(path: &Path, header: &Header, payload: &[u8]) -> Result<Option<Value>, StorageError> {
        match header.encoding {
            Encoding::Tomb => Ok(None),
            Encoding::Json => Ok(Some(serde_json::from_slice(payload)?)),
            Encoding::Gzip => {
                let mut buf = Vec::new();
                GzDecoder::new(payload)
                    .read_to_end(&mut buf)
                    .map_err(|e| StorageError::Corrupt {
                        path: path.to_owned(),
                        reason: e.to_string(),
                    })?;
                Ok(Some(serde_json::from_slice(&buf)?))
            }
        }
    }

    fn write_file(&self, collection: &str, path: &Path, revision: u64, encoding: Encoding, payload: &[u8]) -> Result<(), StorageError> {
        let mut bytes = format!(
            "{MAGIC} {revision} {} {} {}\n",
            encoding.as_str(),
            payload.len(),
            hex::encode(Sha256::digest(payload))
        )
        .into_bytes();
        bytes.extend_from_slice(payload);

        let crash = self.fault.lock().as_ref().and_then(|h| h(collection, bytes.len()));
        let dir = path.parent().expect("document path has a parent");
        let tmp = dir.join(format!(
            "{}.{}.{}.tmp",
            path.file_name().unwrap().to_string_lossy(),
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = OpenOptions::new().write(true).create_new(true).open(&tmp)?;
        if crash == Some(CrashPoint::AfterCreate) {
            return Err(StorageError::InjectedCrash(CrashPoint::AfterCreate));
        }
        if let Some(CrashPoint::MidWrite(n)) = crash {
            f.write_all(&bytes[..n.min(bytes.len())])?;
            return Err(StorageError::InjectedCrash(CrashPoint::MidWrite(n)));
        }
        f.write_all(&bytes)?;
        // data plus the size needed to read it back; the rename is made durable below
        f.sync_data()?;
        drop(f);
        if crash == Some(CrashPoint::BeforeRename) {
            return Err(StorageError::InjectedCrash(CrashPoint::BeforeRename));
        }
        fs::rename(&tmp, path)?;
        sync_dir(dir)?;
        if crash == Some(CrashPoint::AfterRename) {
            return Err(StorageError::InjectedCrash(CrashPoint::AfterRename));
        }
        Ok(())
    }

    /// Writes `body`, returning its new revision. Durable on return.
    pub fn put(&self, collection: &str, id: &str, body: &Value) -> Result<u64, StorageError> {
        check_collection(collection)?;
        if id.is_empty() {
            return Err(StorageError::EmptyId);
        }
        let lock = self.doc_lock(collection, id);
        let _guard = lock.lock();
        fs::create_dir_all(self.root.join(collection))?;
        let path = self.doc_path(collection, id);
        let prev = Self::read_file(&path)?.map_or(0, |(h, _)| h.revision);
        let revision = prev + 1;
        let json = serde_json::to_vec(body)?;
        let (encoding, payload) = if json.len() > COMPRESS_THRESHOLD {
            let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
            enc.write_all(&json)?;
            (Encoding::Gzip, enc.finish()?)
        } else {
            (Encoding::Json, json)
        };
        self.write_file(collection, &path, revision, encoding, &payload)?;
        Ok(revision)
    }

    pub fn put_typed<T: Serialize>(&self, collection: &str, id: &str, body: &T) -> Result<u64, StorageError> {
        self.put(collection, id, &serde_json::to_value(body)?)
    }

    pub fn get(&self, collection: &str, id: &str) -> Result<Document, StorageError> {
        check_collection(collection)?;
        let path = self.doc_path(collection, id);
        let not_found = || StorageError::NotFound {
            collection: collection.to_owned(),
            id: id.to_owned(),
        };
        let (header, payload) = Self::read_file(&path)?.ok_or_else(not_found)?;
        let body = Self::decode(&path, &header, &payload)?.ok_or_else(not_found)?;
        Ok(Document {
            collection: collection.to_owned(),
            id: id.to_owned(),
            revision: header.revision,
            body,
        })
    }

    pub fn get_typed<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<T, StorageError> {
        Ok(serde_json::from_value(self.get(collection, id)?.body)?)
    }

    /// Every live document in the collection, ordered by id.
    pub fn list(&self, collection: &str) -> Result<Vec<Document>, StorageError> {
        check_collection(collection)?;
        let dir = self.root.join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != EXT) {
                continue;
            }
            let Some(id) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(unescape_id)
            else {
                continue;
            };
            // a concurrent delete may remove the file between listing and reading
            let Some((header, payload)) = Self::read_file(&path)? else {
                continue;
            };
            if let Some(body) = Self::decode(&path, &header, &payload)? {
                out.push(Document {
                    collection: collection.to_owned(),
                    id,
                    revision: header.revision,
                    body,
                });
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Documents whose top-level fields equal every `(field, value)` pair.
    pub fn query(&self, collection: &str, predicate: &[(&str, Value)]) -> Result<Vec<Document>, StorageError> {
        Ok(self
            .list(collection)?
            .into_iter()
            .filter(|d| predicate.iter().all(|(k, v)| d.body.get(*k) == Some(v)))
            .collect())
    }

    /// Removes a document. Deleting a missing document is not an error.
    pub fn delete(&self, collection: &str, id: &str) -> Result<(), StorageError> {
        check_collection(collection)?;
        let lock = self.doc_lock(collection, id);
        let _guard = lock.lock();
        let path = self.doc_path(collection, id);
        match Self::read_file(&path)? {
            Some((h, _)) if h.encoding != Encoding::Tomb => {
                self.write_file(collection, &path, h.revision + 1, Encoding::Tomb, &[])
            }
            _ => Ok(()),
        }
    }
}
