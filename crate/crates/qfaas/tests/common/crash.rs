//! Randomised crash-and-restart trials against the document store.
//!
//! Each trial writes a few documents, injects one crash at a random point
//! inside a random write, then reopens the store and compares every
//! document with a model of acknowledged writes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use qfaas::store::{CrashPoint, DocStore, StorageError};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde_json::{json, Value};

const IDS: [&str; 6] = ["alpha", "beta", "gamma", "job/1", "job 2", "large"];

#[derive(Debug, Default)]
pub struct CrashReport {
    pub trials: usize,
    pub crashes: usize,
    pub acknowledged: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, PartialEq, Debug)]
struct Entry {
    revision: u64,
    body: Option<Value>,
}

fn body(rng: &mut StdRng, id: &str, step: usize) -> Value {
    if id == "large" {
        // above the compression threshold
        let blob: String = (0..70_000).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect();
        json!({"step": step, "blob": blob})
    } else {
        json!({"step": step, "value": rng.random::<u32>(), "tags": ["x", id]})
    }
}

fn observe(store: &DocStore, id: &str) -> Result<Option<(u64, Value)>, StorageError> {
    match store.get("docs", id) {
        Ok(d) => Ok(Some((d.revision, d.body))),
        Err(StorageError::NotFound { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run(dir: &Path, trials: usize, seed: u64) -> CrashReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut model: BTreeMap<&str, Entry> = BTreeMap::new();
    let mut report = CrashReport::default();

    for trial in 0..trials {
        report.trials += 1;
        let store = match DocStore::open(dir) {
            Ok(s) => s,
            Err(e) => {
                report.violations.push(format!("trial {trial}: reopen failed: {e}"));
                return report;
            }
        };
        let ops = rng.random_range(1..6usize);
        let crash_at = rng.random_range(0..ops);
        let point = match rng.random_range(0..4u8) {
            0 => CrashPoint::AfterCreate,
            1 => CrashPoint::MidWrite(usize::MAX),
            2 => CrashPoint::BeforeRename,
            _ => CrashPoint::AfterRename,
        };
        let cut: f64 = rng.random();
        let writes = Arc::new(AtomicUsize::new(0));
        let counter = writes.clone();
        store.set_fault_hook(Some(Arc::new(move |_c: &str, len: usize| {
            if counter.fetch_add(1, Ordering::SeqCst) != crash_at {
                return None;
            }
            Some(match point {
                CrashPoint::MidWrite(_) => CrashPoint::MidWrite(((len as f64) * cut) as usize),
                p => p,
            })
        })));

        for step in 0..ops {
            let id = IDS[rng.random_range(0..IDS.len())];
            let before = model.get(id).cloned().unwrap_or(Entry { revision: 0, body: None });
            let delete = before.body.is_some() && rng.random_range(0..5u8) == 0;
            let next_body = if delete { None } else { Some(body(&mut rng, id, step)) };
            let outcome = match &next_body {
                Some(b) => store.put("docs", id, b).map(Some),
                None => store.delete("docs", id).map(|_| None),
            };
            match outcome {
                Ok(rev) => {
                    report.acknowledged += 1;
                    let revision = rev.unwrap_or(before.revision + 1);
                    if rev.is_some() && rev != Some(before.revision + 1) {
                        report.violations.push(format!("trial {trial}: {id} got revision {rev:?}, expected {}", before.revision + 1));
                    }
                    model.insert(id, Entry { revision, body: next_body });
                }
                Err(StorageError::InjectedCrash(p)) => {
                    report.crashes += 1;
                    drop(store);
                    let reopened = match DocStore::open(dir) {
                        Ok(s) => s,
                        Err(e) => {
                            report.violations.push(format!("trial {trial}: reopen after crash failed: {e}"));
                            return report;
                        }
                    };
                    // a write that reached the rename is durable, anything earlier is lost
                    let renamed = matches!(p, CrashPoint::AfterRename);
                    let expect = if renamed {
                        Entry { revision: before.revision + 1, body: next_body.clone() }
                    } else {
                        before.clone()
                    };
                    match observe(&reopened, id) {
                        Ok(seen) if seen == expect.body.clone().map(|b| (expect.revision, b)) => {
                            model.insert(id, expect);
                        }
                        Ok(seen) => report.violations.push(format!("trial {trial}: {id} after {p:?} shows {seen:?}")),
                        Err(e) => report.violations.push(format!("trial {trial}: {id} unreadable after {p:?}: {e}")),
                    }
                    break;
                }
                Err(e) => {
                    report.violations.push(format!("trial {trial}: unexpected error: {e}"));
                    break;
                }
            }
        }

        // restart and check every acknowledged document
        let store = match DocStore::open(dir) {
            Ok(s) => s,
            Err(e) => {
                report.violations.push(format!("trial {trial}: reopen failed: {e}"));
                return report;
            }
        };
        for (id, entry) in &model {
            match observe(&store, id) {
                Ok(seen) => {
                    let want = entry.body.clone().map(|b| (entry.revision, b));
                    if seen != want {
                        report.violations.push(format!("trial {trial}: {id} is {seen:?}, acknowledged {want:?}"));
                    }
                }
                Err(e) => report.violations.push(format!("trial {trial}: {id} unreadable: {e}")),
            }
        }
        if let Err(e) = store.list("docs") {
            report.violations.push(format!("trial {trial}: list failed: {e}"));
        }
        let leftovers = std::fs::read_dir(dir.join("docs"))
            .map(|d| d.filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "tmp")).count())
            .unwrap_or(0);
        if leftovers > 0 {
            report.violations.push(format!("trial {trial}: {leftovers} temporary files survived reopen"));
        }
    }
    report
}
