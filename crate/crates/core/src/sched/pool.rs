use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use super::{guided_next_chunk, static_chunk, IterRange, PoolConfig, ScheduleKind, SchedError, SchedulerSpec};

/// Work item broadcast to every worker for one loop. The pointee lives on the
/// dispatching thread's stack; `WorkerPool::dispatch` does not return before
/// every worker has finished with it.
#[derive(Clone, Copy)]
struct JobRef(*const (dyn Fn(usize) + Sync));

unsafe impl Send for JobRef {}

struct Slot {
    epoch: u64,
    job: Option<JobRef>,
    pending: usize,
    shutdown: bool,
}

struct Shared {
    slot: Mutex<Slot>,
    wake: Condvar,
    done: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Fixed-size pool of worker threads executing parallel loops. The calling
/// thread participates as worker 0.
pub struct WorkerPool {
    config: PoolConfig,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    dispatch_lock: Mutex<()>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool").field("n_threads", &self.config.n_threads()).finish()
    }
}

impl WorkerPool {
    pub fn new(config: PoolConfig) -> Result<Self, SchedError> {
        let shared = Arc::new(Shared {
            slot: Mutex::new(Slot { epoch: 0, job: None, pending: 0, shutdown: false }),
            wake: Condvar::new(),
            done: Condvar::new(),
        });
        let mut workers = Vec::with_capacity(config.n_threads() - 1);
        for id in 1..config.n_threads() {
            let shared = Arc::clone(&shared);
            let handle = thread::Builder::new()
                .name(format!("autochunk-worker-{id}"))
                .spawn(move || worker_loop(&shared, id))?;
            workers.push(handle);
        }
        Ok(Self { config, shared, workers, dispatch_lock: Mutex::new(()) })
    }

    pub fn with_threads(n_threads: usize) -> Result<Self, SchedError> {
        Self::new(PoolConfig::new(n_threads)?)
    }

    pub fn config(&self) -> PoolConfig {
        self.config
    }

    pub fn n_threads(&self) -> usize {
        self.config.n_threads()
    }

    /// Runs `body` once for every index of `range` under `spec` and returns
    /// the elapsed wall time in seconds, distribution overhead included.
    ///
    /// Concurrent calls on distinct indices must not write overlapping state.
    /// All body effects happen-before the return.
    pub fn parallel_for<F>(&self, range: IterRange, spec: &SchedulerSpec, body: F) -> Result<f64, SchedError>
    where
        F: Fn(usize) + Sync,
    {
        self.try_parallel_for(range, spec, |i| {
            body(i);
            Ok::<(), std::convert::Infallible>(())
        })
    }

    /// Fallible variant of [`parallel_for`](Self::parallel_for). The first
    /// failure (or panic) stops further chunk distribution and is reported
    /// with the index that failed.
    pub fn try_parallel_for<F, E>(&self, range: IterRange, spec: &SchedulerSpec, body: F) -> Result<f64, SchedError>
    where
        F: Fn(usize) -> Result<(), E> + Sync,
        E: std::fmt::Display,
    {
        let n_threads = self.n_threads();
        let start = Instant::now();
        if range.is_empty() {
            return Ok(start.elapsed().as_secs_f64());
        }
        let chunk = spec.effective_chunk(range, n_threads)?;
        let failure = FailureSlot::default();
        let run_range = |r: IterRange| -> bool {
            let mut current = r.start;
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
                for i in r.start..r.end {
                    current = i;
                    if let Err(e) = body(i) {
                        return Err((i, e.to_string()));
                    }
                }
                Ok(())
            }));
            match outcome {
                Ok(Ok(())) => true,
                Ok(Err((index, message))) => {
                    failure.record(index, message);
                    false
                }
                Err(payload) => {
                    failure.record(current, panic_message(payload.as_ref()));
                    false
                }
            }
        };

        match spec.kind() {
            ScheduleKind::Static => {
                let n_chunks = range.len().div_ceil(chunk);
                let job = |worker: usize| {
                    let mut k = worker;
                    while k < n_chunks && !failure.aborted() {
                        if !run_range(static_chunk(range, chunk, k)) {
                            return;
                        }
                        k += n_threads;
                    }
                };
                self.dispatch(&job);
            }
            ScheduleKind::Dynamic | ScheduleKind::Guided => {
                let queue = SharedQueue::new(range, spec.kind(), chunk, n_threads);
                let job = |_worker: usize| {
                    while !failure.aborted() {
                        match queue.next_chunk() {
                            Some(r) => {
                                if !run_range(r) {
                                    return;
                                }
                            }
                            None => return,
                        }
                    }
                };
                self.dispatch(&job);
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        match failure.take() {
            Some((index, message)) => Err(SchedError::BodyFailed { index, message }),
            None => Ok(elapsed),
        }
    }

    /// Runs `job(worker_id)` on every worker, including the caller as 0, and
    /// waits for all of them.
    fn dispatch(&self, job: &(dyn Fn(usize) + Sync)) {
        if self.workers.is_empty() {
            job(0);
            return;
        }
        let _serial = self.dispatch_lock.lock().unwrap_or_else(|e| e.into_inner());
        // SAFETY: the lifetime is erased only for the duration of this call;
        // we block below until `pending` reaches zero, after which no worker
        // holds the reference.
        let erased: &'static (dyn Fn(usize) + Sync) = unsafe { std::mem::transmute(job) };
        {
            let mut slot = self.shared.lock();
            slot.job = Some(JobRef(erased as *const _));
            slot.pending = self.workers.len();
            slot.epoch = slot.epoch.wrapping_add(1);
        }
        self.shared.wake.notify_all();
        // Job closures catch panics from the body, so this cannot unwind past
        // the wait below.
        job(0);
        let mut slot = self.shared.lock();
        while slot.pending > 0 {
            slot = self.shared.done.wait(slot).unwrap_or_else(|e| e.into_inner());
        }
        slot.job = None;
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.shared.lock().shutdown = true;
        self.shared.wake.notify_all();
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

fn worker_loop(shared: &Shared, id: usize) {
    let mut seen = 0u64;
    loop {
        let job = {
            let mut slot = shared.lock();
            while !slot.shutdown && slot.epoch == seen {
                slot = shared.wake.wait(slot).unwrap_or_else(|e| e.into_inner());
            }
            if slot.shutdown {
                return;
            }
            seen = slot.epoch;
            slot.job
        };
        if let Some(JobRef(ptr)) = job {
            // SAFETY: see `WorkerPool::dispatch`.
            let f = unsafe { &*ptr };
            let _ = panic::catch_unwind(AssertUnwindSafe(|| f(id)));
        }
        let mut slot = shared.lock();
        slot.pending -= 1;
        if slot.pending == 0 {
            shared.done.notify_all();
        }
    }
}

#[derive(Default)]
struct FailureSlot {
    aborted: AtomicBool,
    first: Mutex<Option<(usize, String)>>,
}

impl FailureSlot {
    fn aborted(&self) -> bool {
        self.aborted.load(Ordering::Relaxed)
    }

    fn record(&self, index: usize, message: String) {
        self.aborted.store(true, Ordering::Relaxed);
        let mut first = self.first.lock().unwrap_or_else(|e| e.into_inner());
        if first.is_none() {
            *first = Some((index, message));
        }
    }

    fn take(&self) -> Option<(usize, String)> {
        self.first.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".to_string()
    }
}

/// Global chunk queue shared by dynamic and guided loops: a single atomic
/// cursor over the range.
#[derive(Debug)]
pub struct SharedQueue {
    cursor: AtomicUsize,
    end: usize,
    kind: ScheduleKind,
    chunk: usize,
    n_threads: usize,
}

impl SharedQueue {
    /// `chunk` is the fixed chunk for dynamic, the minimum chunk for guided.
    /// A static kind is served like dynamic.
    pub fn new(range: IterRange, kind: ScheduleKind, chunk: usize, n_threads: usize) -> Self {
        Self { cursor: AtomicUsize::new(range.start), end: range.end, kind, chunk: chunk.max(1), n_threads: n_threads.max(1) }
    }

    pub fn next_chunk(&self) -> Option<IterRange> {
        match self.kind {
            ScheduleKind::Guided => {
                let mut cur = self.cursor.load(Ordering::Relaxed);
                loop {
                    if cur >= self.end {
                        return None;
                    }
                    let size = guided_next_chunk(self.end - cur, self.n_threads, self.chunk);
                    match self.cursor.compare_exchange_weak(cur, cur + size, Ordering::Relaxed, Ordering::Relaxed) {
                        Ok(_) => return Some(IterRange { start: cur, end: cur + size }),
                        Err(actual) => cur = actual,
                    }
                }
            }
            ScheduleKind::Dynamic | ScheduleKind::Static => {
                if self.cursor.load(Ordering::Relaxed) >= self.end {
                    return None;
                }
                let start = self.cursor.fetch_add(self.chunk, Ordering::Relaxed);
                if start >= self.end {
                    return None;
                }
                Some(IterRange { start, end: (start + self.chunk).min(self.end) })
            }
        }
    }
}
