//! Backend manager: one FIFO worker per backend, the job lifecycle, live
//! queue lengths, and completion notification for blocking waiters.
//!
//! Every backend executes on the embedded simulator. Mock provider backends
//! add a seeded queue delay before a job starts and a service-time model
//! while it runs.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use dashmap::DashMap;
use parking_lot::Mutex;
use qfaas_core::backend::{to_cents, Backend};
use qfaas_core::plugins::{post_process, PostContext, PostProcessor};
use qfaas_core::statevec::run_circuit;
use qfaas_core::Circuit;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::{mpsc, watch};

use crate::auth::User;
use crate::catalog::{Catalog, CatalogEntry, ProviderKind};
use crate::error::{Error, Result};
use crate::store::{DocStore, StorageError};
use crate::util::{self, random_hex};

const JOBS: &str = "jobs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Error,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Error)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Queued => "QUEUED",
            JobStatus::Running => "RUNNING",
            JobStatus::Done => "DONE",
            JobStatus::Error => "ERROR",
        }
    }
}

/// Why a job failed, or why its post-processing did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub provider_job_id: String,
    pub owner: String,
    pub function: Option<String>,
    pub function_version: Option<u64>,
    pub backend: String,
    pub provider: String,
    pub shots: u64,
    pub seed: u64,
    pub num_qubits: usize,
    pub post_processor: PostProcessor,
    pub status: JobStatus,
    #[serde(with = "util::ts")]
    pub submit_time: DateTime<Utc>,
    #[serde(with = "util::ts_opt", default)]
    pub running_start_time: Option<DateTime<Utc>>,
    #[serde(with = "util::ts_opt", default)]
    pub completion_time: Option<DateTime<Utc>>,
    /// Seconds, millisecond resolution.
    pub total_run_time: Option<f64>,
    /// Estimated charge for one task at this job's shot count, in cents.
    pub estimated_cost: String,
    pub counts: Option<BTreeMap<String, u64>>,
    pub result: Option<Value>,
    pub detail: Option<Map<String, Value>>,
    pub error: Option<JobFailure>,
}

impl Job {
    /// The `provider_info` block of an invocation response.
    pub fn provider_info(&self) -> Value {
        json!({
            "shots": self.shots,
            "job_id": self.job_id,
            "job_status": self.status.as_str(),
            "running_start_time": self.running_start_time.as_ref().map(util::format_ts),
            "completion_time": self.completion_time.as_ref().map(util::format_ts),
            "total_run_time": self.total_run_time,
        })
    }
}

/// Everything needed to run a job.
#[derive(Debug, Clone)]
pub struct JobRequest {
    pub owner: String,
    pub function: Option<String>,
    pub function_version: Option<u64>,
    pub circuit: Circuit,
    pub backend: String,
    pub shots: u64,
    /// Derived from the job id when absent.
    pub seed: Option<u64>,
    pub post: PostProcessor,
    pub context: PostContext,
}

struct Work {
    circuit: Circuit,
    post: PostProcessor,
    context: PostContext,
}

struct JobSlot {
    job: Mutex<Job>,
    work: Mutex<Option<Work>>,
    status: watch::Sender<JobStatus>,
}

struct BackendSlot {
    entry: CatalogEntry,
    kind: ProviderKind,
    operational: AtomicBool,
    /// Jobs on this backend that are QUEUED or RUNNING.
    pending: AtomicUsize,
    jitter: Mutex<StdRng>,
    tx: mpsc::UnboundedSender<Arc<JobSlot>>,
}

impl BackendSlot {
    fn queue_delay(&self) -> Duration {
        let base = self.entry.queue_delay_millis;
        let jitter = match self.entry.jitter_millis {
            0 => 0,
            j => self.jitter.lock().random_range(0..=j),
        };
        Duration::from_millis(base + jitter)
    }

    fn snapshot(&self) -> Backend {
        let mut b = self.entry.to_backend(self.pending.load(Ordering::SeqCst));
        b.operational = self.operational.load(Ordering::SeqCst);
        b
    }
}

/// Job ids follow the 12-byte ObjectId layout: seconds, a per-process
/// random tag, and a counter.
struct IdGen {
    tag: [u8; 5],
    counter: AtomicU32,
}

impl IdGen {
    fn new() -> Self {
        let mut tag = [0u8; 5];
        rand::fill(&mut tag);
        IdGen {
            tag,
            counter: AtomicU32::new(rand::random::<u32>() & 0xff_ffff),
        }
    }

    fn next(&self) -> String {
        let secs = Utc::now().timestamp() as u32;
        let n = self.counter.fetch_add(1, Ordering::Relaxed) & 0xff_ffff;
        let mut b = Vec::with_capacity(12);
        b.extend_from_slice(&secs.to_be_bytes());
        b.extend_from_slice(&self.tag);
        b.extend_from_slice(&n.to_be_bytes()[1..]);
        hex::encode(b)
    }
}

fn provider_job_id(kind: ProviderKind) -> String {
    match kind {
        ProviderKind::Internal => format!("sim-{}", random_hex(8)),
        ProviderKind::MockIbmq => random_hex(12),
        ProviderKind::MockBraket => {
            let h = random_hex(16);
            format!(
                "arn:aws:braket:us-east-1:000000000000:quantum-task/{}-{}-{}-{}-{}",
                &h[0..8],
                &h[8..12],
                &h[12..16],
                &h[16..20],
                &h[20..32]
            )
        }
    }
}

/// Default seed: first eight bytes of SHA-256 of the job id.
pub fn seed_for(job_id: &str) -> u64 {
    let digest = util::sha256_hex(job_id.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

struct Inner {
    backends: BTreeMap<String, BackendSlot>,
    jobs: DashMap<String, Arc<JobSlot>>,
    store: Arc<DocStore>,
    max_qubits: usize,
    ids: IdGen,
}

#[derive(Clone)]
pub struct JobManager {
    inner: Arc<Inner>,
}

/// Per-status job totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JobTotals {
    pub total: usize,
    pub queued: usize,
    pub running: usize,
    pub done: usize,
    pub error: usize,
}

impl JobTotals {
    pub fn add(&mut self, s: JobStatus) {
        self.total += 1;
        match s {
            JobStatus::Queued => self.queued += 1,
            JobStatus::Running => self.running += 1,
            JobStatus::Done => self.done += 1,
            JobStatus::Error => self.error += 1,
        }
    }
}

impl JobManager {
    /// Loads persisted jobs and spawns one worker per backend. Jobs that
    /// were still pending when the previous process stopped are marked ERROR.
    /// Must be called inside a tokio runtime.
    pub fn start(catalog: &Catalog, store: Arc<DocStore>, max_qubits: usize, jitter_seed: u64) -> Result<Self> {
        let mut receivers = Vec::new();
        let mut backends = BTreeMap::new();
        for (i, entry) in catalog.entries.iter().enumerate() {
            let (tx, rx) = mpsc::unbounded_channel();
            receivers.push((entry.name.clone(), rx));
            backends.insert(
                entry.name.clone(),
                BackendSlot {
                    kind: ProviderKind::for_provider(&entry.provider),
                    operational: AtomicBool::new(entry.operational),
                    pending: AtomicUsize::new(0),
                    jitter: Mutex::new(StdRng::seed_from_u64(jitter_seed.wrapping_add(i as u64))),
                    entry: entry.clone(),
                    tx,
                },
            );
        }
        let inner = Arc::new(Inner {
            backends,
            jobs: DashMap::new(),
            store,
            max_qubits,
            ids: IdGen::new(),
        });
        inner.recover()?;
        for (name, rx) in receivers {
            tokio::spawn(worker(inner.clone(), name, rx));
        }
        Ok(JobManager { inner })
    }

    pub fn backends(&self) -> Vec<Backend> {
        self.inner.backends.values().map(BackendSlot::snapshot).collect()
    }

    pub fn backend(&self, name: &str) -> Result<Backend> {
        self.inner
            .backends
            .get(name)
            .map(BackendSlot::snapshot)
            .ok_or_else(|| Error::BackendNotFound(name.to_owned()))
    }

    pub fn catalog_entry(&self, name: &str) -> Option<&CatalogEntry> {
        self.inner.backends.get(name).map(|b| &b.entry)
    }

    pub fn set_operational(&self, name: &str, operational: bool) -> Result<()> {
        let slot = self
            .inner
            .backends
            .get(name)
            .ok_or_else(|| Error::BackendNotFound(name.to_owned()))?;
        slot.operational.store(operational, Ordering::SeqCst);
        Ok(())
    }

    /// Validates capacity and availability, records the job as QUEUED and
    /// hands it to the backend's worker.
    pub fn submit(&self, req: JobRequest) -> Result<Job> {
        let slot = self
            .inner
            .backends
            .get(&req.backend)
            .ok_or_else(|| Error::BackendNotFound(req.backend.clone()))?;
        let n = req.circuit.num_qubits;
        if n > slot.entry.qubits {
            return Err(Error::CapacityExceeded {
                backend: req.backend.clone(),
                required: n,
                capacity: slot.entry.qubits,
            });
        }
        if !slot.operational.load(Ordering::SeqCst) {
            return Err(Error::BackendUnavailable(req.backend.clone()));
        }
        if n > self.inner.max_qubits {
            return Err(Error::QubitLimitExceeded {
                requested: n,
                limit: self.inner.max_qubits,
            });
        }
        if req.shots == 0 {
            return Err(Error::BadRequest("shots must be at least 1".into()));
        }
        let job_id = loop {
            let id = self.inner.ids.next();
            if !self.inner.jobs.contains_key(&id) {
                break id;
            }
        };
        let job = Job {
            seed: req.seed.unwrap_or_else(|| seed_for(&job_id)),
            provider_job_id: provider_job_id(slot.kind),
            owner: req.owner,
            function: req.function,
            function_version: req.function_version,
            backend: req.backend.clone(),
            provider: slot.entry.provider.clone(),
            shots: req.shots,
            num_qubits: n,
            post_processor: req.post,
            status: JobStatus::Queued,
            submit_time: util::now_ms(),
            running_start_time: None,
            completion_time: None,
            total_run_time: None,
            estimated_cost: to_cents(slot.entry.pricing().estimate(1, req.shots)).to_string(),
            counts: None,
            result: None,
            detail: None,
            error: None,
            job_id: job_id.clone(),
        };
        self.inner.store.put_typed(JOBS, &job_id, &job)?;
        let (status, _) = watch::channel(JobStatus::Queued);
        let js = Arc::new(JobSlot {
            job: Mutex::new(job.clone()),
            work: Mutex::new(Some(Work {
                circuit: req.circuit,
                post: req.post,
                context: req.context,
            })),
            status,
        });
        self.inner.jobs.insert(job_id, js.clone());
        slot.pending.fetch_add(1, Ordering::SeqCst);
        if slot.tx.send(js).is_err() {
            slot.pending.fetch_sub(1, Ordering::SeqCst);
            return Err(Error::BackendUnavailable(req.backend));
        }
        Ok(job)
    }

    fn slot(&self, job_id: &str) -> Result<Arc<JobSlot>> {
        self.inner
            .jobs
            .get(job_id)
            .map(|s| s.clone())
            .ok_or_else(|| Error::JobNotFound(job_id.to_owned()))
    }

    /// Snapshot of a job, without access control.
    pub fn job(&self, job_id: &str) -> Result<Job> {
        Ok(self.slot(job_id)?.job.lock().clone())
    }

    /// Snapshot of a job the requester owns (or any job, for administrators).
    pub fn get_job(&self, job_id: &str, requester: &User) -> Result<Job> {
        let job = self.job(job_id)?;
        if !requester.may_access(&job.owner) {
            return Err(Error::forbidden(format!("job `{job_id}` belongs to another user")));
        }
        Ok(job)
    }

    /// Jobs visible to the requester, oldest first. Administrators see every
    /// job unless `owner` narrows the list.
    pub fn list_jobs(&self, requester: &User, owner: Option<&str>, status: Option<JobStatus>) -> Vec<Job> {
        let mut v: Vec<Job> = self
            .inner
            .jobs
            .iter()
            .map(|e| e.value().job.lock().clone())
            .filter(|j| {
                if requester.is_admin() {
                    owner.is_none_or(|o| j.owner == o)
                } else {
                    j.owner == requester.id
                }
            })
            .filter(|j| status.is_none_or(|s| j.status == s))
            .collect();
        v.sort_by(|a, b| a.submit_time.cmp(&b.submit_time).then_with(|| a.job_id.cmp(&b.job_id)));
        v
    }

    /// Removes a finished job.
    pub fn delete_job(&self, job_id: &str, requester: &User) -> Result<()> {
        let job = self.get_job(job_id, requester)?;
        if !job.status.is_terminal() {
            return Err(Error::JobNotFinished(job_id.to_owned()));
        }
        self.inner.store.delete(JOBS, job_id)?;
        self.inner.jobs.remove(job_id);
        Ok(())
    }

    /// Waits for the job to finish or for `timeout`, then returns its
    /// snapshot. Waiters subscribe to status changes and never hold locks.
    pub async fn wait(&self, job_id: &str, timeout: Duration) -> Result<Job> {
        let slot = self.slot(job_id)?;
        let mut rx = slot.status.subscribe();
        let deadline = tokio::time::Instant::now() + timeout;
        while !rx.borrow_and_update().is_terminal() {
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => {}
                Ok(Err(_)) | Err(_) => break,
            }
        }
        let job = slot.job.lock().clone();
        Ok(job)
    }

    pub fn totals(&self) -> JobTotals {
        let mut t = JobTotals::default();
        for e in self.inner.jobs.iter() {
            t.add(e.value().job.lock().status);
        }
        t
    }

    /// Per-backend count of QUEUED and RUNNING jobs, recomputed from the
    /// job table rather than the live counters.
    pub fn pending_by_backend(&self) -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for e in self.inner.jobs.iter() {
            let j = e.value().job.lock();
            if !j.status.is_terminal() {
                *m.entry(j.backend.clone()).or_insert(0) += 1;
            }
        }
        m
    }
}

impl Inner {
    fn recover(&self) -> Result<()> {
        for doc in self.store.list(JOBS)? {
            let mut job: Job = serde_json::from_value(doc.body).map_err(StorageError::from)?;
            if !job.status.is_terminal() {
                let now = util::now_ms();
                job.status = JobStatus::Error;
                job.completion_time = Some(now.max(job.submit_time));
                job.error = Some(JobFailure {
                    code: "JobInterrupted".into(),
                    message: "the server restarted before the job finished".into(),
                });
                self.store.put_typed(JOBS, &job.job_id, &job)?;
            }
            let (status, _) = watch::channel(job.status);
            self.jobs.insert(
                job.job_id.clone(),
                Arc::new(JobSlot {
                    job: Mutex::new(job),
                    work: Mutex::new(None),
                    status,
                }),
            );
        }
        Ok(())
    }

    /// Applies `f` to the job, persists it on the blocking pool, then
    /// publishes the new status.
    async fn update(&self, slot: &JobSlot, f: impl FnOnce(&mut Job)) {
        let job = {
            let mut job = slot.job.lock();
            f(&mut job);
            job.clone()
        };
        let store = self.store.clone();
        let status = job.status;
        let saved = tokio::task::spawn_blocking(move || store.put_typed(JOBS, &job.job_id, &job).map_err(|e| (job.job_id, e))).await;
        match saved {
            Ok(Err((id, e))) => tracing::error!(job = %id, "persisting job failed: {e}"),
            Err(e) => tracing::error!("persisting job failed: {e}"),
            Ok(Ok(_)) => {}
        }
        slot.status.send_replace(status);
    }
}

type Outcome = std::result::Result<(BTreeMap<String, u64>, std::result::Result<(Value, Map<String, Value>), JobFailure>), JobFailure>;

fn execute(work: Work, shots: u64, seed: u64, max_qubits: usize) -> Outcome {
    let counts = run_circuit(&work.circuit, shots, seed, max_qubits).map_err(|e| JobFailure {
        code: "SimulationError".into(),
        message: e.to_string(),
    })?;
    let post = post_process(work.post, &counts, &work.context)
        .map(|o| (o.result, o.detail))
        .map_err(|e| {
            let err = Error::from(e);
            JobFailure {
                code: err.code().into(),
                message: err.to_string(),
            }
        });
    Ok((counts.counts, post))
}

/// External backends drain their queue one job at a time. The internal
/// simulator runs inside the calling replica, so its jobs run concurrently.
async fn worker(inner: Arc<Inner>, name: String, mut rx: mpsc::UnboundedReceiver<Arc<JobSlot>>) {
    let concurrent = inner.backends[&name].kind == ProviderKind::Internal;
    while let Some(slot) = rx.recv().await {
        if concurrent {
            tokio::spawn(run_job(inner.clone(), name.clone(), slot));
        } else {
            run_job(inner.clone(), name.clone(), slot).await;
        }
    }
}

async fn run_job(inner: Arc<Inner>, name: String, slot: Arc<JobSlot>) {
    let backend = &inner.backends[&name];
    let delay = backend.queue_delay();
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }
    // not persisted: after a restart QUEUED and RUNNING jobs are both interrupted
    let status = {
        let mut j = slot.job.lock();
        j.status = JobStatus::Running;
        j.running_start_time = Some(util::now_ms().max(j.submit_time));
        j.status
    };
    slot.status.send_replace(status);
    let (shots, seed) = {
        let j = slot.job.lock();
        (j.shots, j.seed)
    };
    let work = slot.work.lock().take();
    let gates = work.as_ref().map_or(0, |w| w.circuit.gates.len());
    let max_qubits = inner.max_qubits;
    let outcome = match work {
        Some(w) => tokio::task::spawn_blocking(move || execute(w, shots, seed, max_qubits))
            .await
            .unwrap_or_else(|e| {
                Err(JobFailure {
                    code: "SimulationError".into(),
                    message: format!("simulator task failed: {e}"),
                })
            }),
        None => Err(JobFailure {
            code: "SimulationError".into(),
            message: "job has no circuit".into(),
        }),
    };
    let service = backend.entry.service_time(shots, gates);
    if !service.is_zero() {
        tokio::time::sleep(service).await;
    }
    inner.update(&slot, |j| {
        let start = j.running_start_time.unwrap_or(j.submit_time);
        let done = util::now_ms().max(start);
        j.completion_time = Some(done);
        j.total_run_time = Some((done - start).num_milliseconds() as f64 / 1000.0);
        match outcome {
            Ok((counts, post)) => {
                j.status = JobStatus::Done;
                j.counts = Some(counts);
                match post {
                    Ok((result, detail)) => {
                        j.result = Some(result);
                        j.detail = Some(detail);
                    }
                    Err(f) => j.error = Some(f),
                }
            }
            Err(f) => {
                j.status = JobStatus::Error;
                j.error = Some(f);
            }
        }
        backend.pending.fetch_sub(1, Ordering::SeqCst);
    })
    .await;
}
