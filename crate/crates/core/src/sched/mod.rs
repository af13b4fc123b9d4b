//! Loop scheduling: chunk-size rules for static, dynamic and guided
//! distribution, and a persistent worker pool that executes parallel loops.
//!
//! The pool is built once and reused, so thread start-up never shows up in
//! the wall time of a loop. See [`WorkerPool::parallel_for`].

mod pool;

pub use pool::{SharedQueue, WorkerPool};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Golden ratio as used by the competitor chunk-size heuristic.
pub const COMPETITOR_PHI: f64 = 1.618;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("empty iteration range")]
    EmptyRange,
    #[error("invalid iteration range: end {end} < start {start}")]
    InvertedRange { start: usize, end: usize },
    #[error("chunk size must be at least 1")]
    ZeroChunk,
    #[error("thread count must be at least 1")]
    ZeroThreads,
    #[error("formula undefined for N < P (N = {n_iters}, P = {n_threads})")]
    CompetitorUndefined { n_iters: usize, n_threads: usize },
    #[error("loop body failed at index {index}: {message}")]
    BodyFailed { index: usize, message: String },
    #[error("failed to spawn worker thread: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("unknown scheduler kind `{0}`")]
    UnknownKind(String),
}

/// Half-open range of loop indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IterRange {
    pub start: usize,
    pub end: usize,
}

impl IterRange {
    pub fn new(start: usize, end: usize) -> Result<Self, SchedError> {
        if end < start {
            return Err(SchedError::InvertedRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn with_len(len: usize) -> Self {
        Self { start: 0, end: len }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

impl fmt::Display for IterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Static,
    Dynamic,
    Guided,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Static, ScheduleKind::Dynamic, ScheduleKind::Guided];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::Static => "static",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::Guided => "guided",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(ScheduleKind::Static),
            "dynamic" => Ok(ScheduleKind::Dynamic),
            "guided" => Ok(ScheduleKind::Guided),
            other => Err(SchedError::UnknownKind(other.to_string())),
        }
    }
}

/// Scheduler kind plus an optional explicit chunk size. Without a chunk the
/// kind's default rule applies (see [`default_chunk`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchedulerSpec {
    kind: ScheduleKind,
    chunk: Option<usize>,
}

impl SchedulerSpec {
    pub fn new(kind: ScheduleKind, chunk: Option<usize>) -> Result<Self, SchedError> {
        if chunk == Some(0) {
            return Err(SchedError::ZeroChunk);
        }
        Ok(Self { kind, chunk })
    }

    pub fn with_default_chunk(kind: ScheduleKind) -> Self {
        Self { kind, chunk: None }
    }

    pub fn static_default() -> Self {
        Self::with_default_chunk(ScheduleKind::Static)
    }

    pub fn dynamic(chunk: usize) -> Result<Self, SchedError> {
        Self::new(ScheduleKind::Dynamic, Some(chunk))
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn chunk(&self) -> Option<usize> {
        self.chunk
    }

    /// Chunk size actually used for `range` on `n_threads` workers. For the
    /// guided kind this is the minimum chunk.
    pub fn effective_chunk(&self, range: IterRange, n_threads: usize) -> Result<usize, SchedError> {
        match self.chunk {
            Some(c) => Ok(c),
            None => default_chunk(self.kind, range, n_threads),
        }
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chunk {
            Some(c) => write!(f, "{}({})", self.kind, c),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    n_threads: usize,
}

impl PoolConfig {
    pub fn new(n_threads: usize) -> Result<Self, SchedError> {
        if n_threads == 0 {
            return Err(SchedError::ZeroThreads);
        }
        Ok(Self { n_threads })
    }

    pub fn n_threads(&self) -> usize {
        self.n_threads
    }
}

/// Default chunk when none is given: about `N_i / N_t` for static (ceiling,
/// so one round-robin pass covers the range), 1 for dynamic and guided.
pub fn default_chunk(kind: ScheduleKind, range: IterRange, n_threads: usize) -> Result<usize, SchedError> {
    if range.is_empty() {
        return Err(SchedError::EmptyRange);
    }
    if n_threads == 0 {
        return Err(SchedError::ZeroThreads);
    }
    Ok(match kind {
        ScheduleKind::Static => range.len().div_ceil(n_threads),
        ScheduleKind::Dynamic | ScheduleKind::Guided => 1,
    })
}

/// Round-robin static distribution: chunk `k` goes to thread `k % n_threads`.
/// Returned in chunk order.
pub fn static_assignment(range: IterRange, chunk: usize, n_threads: usize) -> Result<Vec<(usize, IterRange)>, SchedError> {
    if chunk == 0 {
        return Err(SchedError::ZeroChunk);
    }
    if n_threads == 0 {
        return Err(SchedError::ZeroThreads);
    }
    let n_chunks = range.len().div_ceil(chunk);
    Ok((0..n_chunks)
        .map(|k| (k % n_threads, static_chunk(range, chunk, k)))
        .collect())
}

#[inline]
pub(crate) fn static_chunk(range: IterRange, chunk: usize, k: usize) -> IterRange {
    let start = range.start + k * chunk;
    IterRange { start, end: (start + chunk).min(range.end) }
}

/// Size of the next guided chunk: `ceil(remaining / n_threads)`, never below
/// `min_chunk` except for the final chunk.
pub fn guided_next_chunk(remaining: usize, n_threads: usize, min_chunk: usize) -> usize {
    let share = remaining.div_ceil(n_threads.max(1));
    share.max(min_chunk.max(1)).min(remaining)
}

/// Chunk-size heuristic used as a competitor baseline:
/// `floor(N / (2^f * 2P))` with `f = floor(log2(N/P) / phi)`, clamped to 1.
pub fn competitor_chunk(n_iters: usize, n_threads: usize) -> Result<usize, SchedError> {
    if n_threads == 0 {
        return Err(SchedError::ZeroThreads);
    }
    if n_iters < n_threads {
        return Err(SchedError::CompetitorUndefined { n_iters, n_threads });
    }
    let ratio = n_iters as f64 / n_threads as f64;
    let f = (ratio.log2() * (1.0 / COMPETITOR_PHI)).floor() as u32;
    let denom = (2 * n_threads as u128) << f;
    Ok(((n_iters as u128 / denom) as usize).max(1))
}
