//! Online chunk-size tuning: coupled simulated annealing driven by the
//! measured wall time of the first forward stencil step.

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::csa::{csa_run, CsaConfig, CsaError, SearchBounds};
use crate::sched::{SchedError, SchedulerSpec, WorkerPool};
use crate::wave::{Propagator, WaveError, Wavefield};

pub const DEFAULT_MIN_CHUNK: usize = 50;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("invalid tuning policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("tuning search failed: {0}")]
    Search(String),
    #[error("cannot write tuning trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningPolicy {
    pub enabled: bool,
    pub csa: CsaConfig,
    /// Smallest chunk the search may probe.
    pub min_chunk: usize,
    /// Executions per probe whose timing is thrown away before the kept one.
    pub repeat_discard: usize,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        Self { enabled: true, csa: CsaConfig::standard(0x5eed), min_chunk: DEFAULT_MIN_CHUNK, repeat_discard: 1 }
    }
}

impl TuningPolicy {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self { csa: CsaConfig::standard(seed), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        if self.min_chunk == 0 {
            return Err(TunerError::Policy("min_chunk must be at least 1".into()));
        }
        self.csa.validate().map_err(TunerError::Policy)
    }
}

/// Timing of one probe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    /// The kept (last) execution.
    pub seconds: f64,
    /// Earlier executions whose timings were dropped.
    pub discarded_seconds: f64,
    /// Time spent restoring the scratch state before each execution.
    pub reset_seconds: f64,
}

/// Something whose loop can be timed at a given dynamic chunk size.
pub trait TuningTarget {
    /// Iterations of the tuned loop.
    fn n_iterations(&self) -> usize;
    fn n_threads(&self) -> usize;
    fn measure(&mut self, chunk: usize, repeat_discard: usize) -> Result<Measurement, TunerError>;
}

/// Times the first stencil step of a propagation on a private copy of the
/// initial wavefield. The caller's state is never touched.
pub struct FirstStepContext<'a> {
    prop: &'a Propagator,
    pool: &'a WorkerPool,
    pristine: Wavefield,
    scratch: Wavefield,
}

impl<'a> FirstStepContext<'a> {
    pub fn new(prop: &'a Propagator, pool: &'a WorkerPool, initial: &Wavefield) -> Self {
        Self { prop, pool, pristine: initial.clone(), scratch: initial.clone() }
    }
}

/// Runs the first step `repeat_discard + 1` times from the pristine state
/// with dynamic scheduling at `chunk`; only the last timing is kept.
pub fn cost_first_step(ctx: &mut FirstStepContext<'_>, chunk: usize, repeat_discard: usize) -> Result<Measurement, TunerError> {
    let spec = SchedulerSpec::dynamic(chunk)?;
    let mut m = Measurement::default();
    for rep in 0..=repeat_discard {
        let t0 = Instant::now();
        ctx.scratch.copy_from(&ctx.pristine);
        m.reset_seconds += t0.elapsed().as_secs_f64();
        let secs = ctx.prop.step(&mut ctx.scratch, &spec, ctx.pool)?;
        if rep == repeat_discard {
            m.seconds = secs;
        } else {
            m.discarded_seconds += secs;
        }
    }
    Ok(m)
}

impl TuningTarget for FirstStepContext<'_> {
    fn n_iterations(&self) -> usize {
        self.prop.n_lines()
    }

    fn n_threads(&self) -> usize {
        self.pool.n_threads()
    }

    fn measure(&mut self, chunk: usize, repeat_discard: usize) -> Result<Measurement, TunerError> {
        cost_first_step(self, chunk, repeat_discard)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningEvaluation {
    pub iteration: usize,
    pub optimizer: usize,
    pub chunk: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub chunk: usize,
    /// Search interval `[lo, hi]`.
    pub bounds: (usize, usize),
    pub evaluations: Vec<TuningEvaluation>,
    /// Wall time of the whole tuning call.
    pub tuning_wall_time: f64,
    pub measured_seconds: f64,
    pub discarded_seconds: f64,
    pub reset_seconds: f64,
    /// Set when the interval was too small to search.
    pub note: Option<String>,
}

impl TuningResult {
    /// Tuning time not covered by the step executions and state resets.
    pub fn bookkeeping_seconds(&self) -> f64 {
        self.tuning_wall_time - self.measured_seconds - self.discarded_seconds - self.reset_seconds
    }

    /// Writes `chunk,seconds,iteration,optimizer` rows.
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<(), TunerError> {
        writeln!(w, "chunk,seconds,iteration,optimizer")?;
        for e in &self.evaluations {
            writeln!(w, "{},{:e},{},{}", e.chunk, e.seconds, e.iteration, e.optimizer)?;
        }
        Ok(())
    }
}

/// `ceil(n_iterations / n_threads)`.
pub fn upper_chunk(n_iterations: usize, n_threads: usize) -> usize {
    n_iterations.div_ceil(n_threads.max(1)).max(1)
}

/// Searches `[min_chunk, ceil(N_i / N_t)]` with CSA, one probe per cost
/// evaluation. A degenerate interval returns the upper bound unsearched.
pub fn autotune_chunk<T: TuningTarget + ?Sized>(target: &mut T, policy: &TuningPolicy) -> Result<TuningResult, TunerError> {
    policy.validate()?;
    let start = Instant::now();
    let hi = upper_chunk(target.n_iterations(), target.n_threads());
    let lo = policy.min_chunk;
    let mut result = TuningResult {
        chunk: hi,
        bounds: (lo.min(hi), hi),
        evaluations: Vec::new(),
        tuning_wall_time: 0.0,
        measured_seconds: 0.0,
        discarded_seconds: 0.0,
        reset_seconds: 0.0,
        note: None,
    };
    if hi <= lo {
        result.note = Some(format!("degenerate search space: upper bound {hi} <= minimum chunk {lo}"));
        result.tuning_wall_time = start.elapsed().as_secs_f64();
        return Ok(result);
    }
    let bounds = SearchBounds::new(lo as i64, hi as i64).expect("lo < hi");
    let mut measured = Vec::with_capacity(policy.csa.evaluation_budget());
    let outcome = csa_run(&policy.csa, bounds, |x| {
        let m = target.measure(x as usize, policy.repeat_discard)?;
        measured.push(m);
        Ok::<_, TunerError>(m.seconds)
    })
    .map_err(|e| match e {
        CsaError::Config(msg) => TunerError::Policy(msg),
        CsaError::Cost { source, .. } => source,
    })?;
    for m in &measured {
        result.measured_seconds += m.seconds;
        result.discarded_seconds += m.discarded_seconds;
        result.reset_seconds += m.reset_seconds;
    }
    result.evaluations = outcome
        .history
        .iter()
        .zip(&measured)
        .map(|(e, m)| TuningEvaluation { iteration: e.iteration, optimizer: e.optimizer, chunk: e.solution as usize, seconds: m.seconds })
        .collect();
    result.chunk = outcome.best as usize;
    result.tuning_wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
