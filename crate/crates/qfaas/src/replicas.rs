//! Replica pools standing in for a function's pods.
//!
//! A replica serves one invocation at a time. Requests are spread
//! round-robin over warm replicas; when none is warm the first request
//! activates one after the cold-start delay. A pool is bound to one build of
//! the function, so a rolling update swaps whole pools and drains the old one.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use tokio::sync::{Mutex as AsyncMutex, Notify, OwnedMutexGuard};

#[derive(Debug)]
pub struct Replica {
    pub id: u64,
    busy: Arc<AsyncMutex<()>>,
    served: AtomicU64,
}

impl Replica {
    pub fn served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }
}

pub struct ReplicaPool<B> {
    build: Arc<B>,
    replicas: Mutex<Vec<Arc<Replica>>>,
    next: AtomicUsize,
    next_id: AtomicU64,
    activation: AsyncMutex<()>,
    cold_start: Duration,
    in_flight: AtomicUsize,
    drained: Notify,
    retired: AtomicBool,
    cold_starts: AtomicU64,
}

/// Exclusive use of one replica for the duration of an invocation.
pub struct Lease<B> {
    pool: Arc<ReplicaPool<B>>,
    replica: Arc<Replica>,
    _busy: OwnedMutexGuard<()>,
}

impl<B> Lease<B> {
    pub fn build(&self) -> &Arc<B> {
        &self.pool.build
    }

    pub fn replica_id(&self) -> u64 {
        self.replica.id
    }
}

impl<B> Drop for Lease<B> {
    fn drop(&mut self) {
        self.pool.leave();
    }
}

/// Admission to a pool that has not yet picked a replica; keeps the pool
/// from counting as drained.
pub struct Ticket<B> {
    pool: Arc<ReplicaPool<B>>,
    armed: bool,
}

impl<B> Drop for Ticket<B> {
    fn drop(&mut self) {
        if self.armed {
            self.pool.leave();
        }
    }
}

impl<B> Ticket<B> {
    /// Waits for a replica, activating one first if the pool is cold.
    pub async fn acquire(mut self) -> Lease<B> {
        let pool = self.pool.clone();
        let replica = loop {
            if let Some(r) = pool.pick() {
                break r;
            }
            let _activating = pool.activation.lock().await;
            if pool.replicas.lock().is_empty() {
                tokio::time::sleep(pool.cold_start).await;
                pool.cold_starts.fetch_add(1, Ordering::SeqCst);
                let r = pool.new_replica();
                pool.replicas.lock().push(r);
            }
        };
        let busy = replica.busy.clone().lock_owned().await;
        replica.served.fetch_add(1, Ordering::SeqCst);
        self.armed = false;
        Lease {
            pool,
            replica,
            _busy: busy,
        }
    }
}

impl<B> ReplicaPool<B> {
    /// A pool with no warm replicas.
    pub fn new(build: Arc<B>, cold_start: Duration) -> Arc<Self> {
        Arc::new(ReplicaPool {
            build,
            replicas: Mutex::new(Vec::new()),
            next: AtomicUsize::new(0),
            next_id: AtomicU64::new(0),
            activation: AsyncMutex::new(()),
            cold_start,
            in_flight: AtomicUsize::new(0),
            drained: Notify::new(),
            retired: AtomicBool::new(false),
            cold_starts: AtomicU64::new(0),
        })
    }

    pub fn build(&self) -> &Arc<B> {
        &self.build
    }

    fn new_replica(&self) -> Arc<Replica> {
        Arc::new(Replica {
            id: self.next_id.fetch_add(1, Ordering::SeqCst),
            busy: Arc::new(AsyncMutex::new(())),
            served: AtomicU64::new(0),
        })
    }

    fn pick(&self) -> Option<Arc<Replica>> {
        let reps = self.replicas.lock();
        if reps.is_empty() {
            return None;
        }
        let i = self.next.fetch_add(1, Ordering::SeqCst) % reps.len();
        Some(reps[i].clone())
    }

    fn leave(&self) {
        if self.in_flight.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.drained.notify_waiters();
        }
    }

    /// Registers an incoming request. Callers must do this while the pool
    /// is still the published one so draining can account for it.
    pub fn admit(self: &Arc<Self>) -> Ticket<B> {
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        Ticket {
            pool: self.clone(),
            armed: true,
        }
    }

    pub fn warm(&self) -> usize {
        self.replicas.lock().len()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    pub fn cold_starts(&self) -> u64 {
        self.cold_starts.load(Ordering::SeqCst)
    }

    /// Requests served by each warm replica, in replica order.
    pub fn served(&self) -> Vec<u64> {
        self.replicas.lock().iter().map(|r| r.served()).collect()
    }

    /// Resizes to `n` warm replicas. Growing pays one cold start for the
    /// whole batch; shrinking lets removed replicas finish what they hold.
    pub async fn scale(&self, n: usize) {
        let _activating = self.activation.lock().await;
        let current = self.replicas.lock().len();
        if n > current {
            if !self.cold_start.is_zero() {
                tokio::time::sleep(self.cold_start).await;
            }
            let fresh: Vec<_> = (current..n).map(|_| self.new_replica()).collect();
            self.replicas.lock().extend(fresh);
        } else {
            self.replicas.lock().truncate(n);
        }
    }

    /// Adds warm replicas up to `n` without the cold-start delay. Used when
    /// restoring pools at startup.
    pub fn prefill(&self, n: usize) {
        let mut reps = self.replicas.lock();
        while reps.len() < n {
            reps.push(self.new_replica());
        }
    }

    /// Marks the pool as no longer published and waits until every
    /// admitted request has finished.
    pub async fn drain(&self) {
        self.retired.store(true, Ordering::SeqCst);
        loop {
            let notified = self.drained.notified();
            if self.in_flight.load(Ordering::SeqCst) == 0 {
                break;
            }
            notified.await;
        }
        self.replicas.lock().clear();
    }

    pub fn is_retired(&self) -> bool {
        self.retired.load(Ordering::SeqCst)
    }
}
