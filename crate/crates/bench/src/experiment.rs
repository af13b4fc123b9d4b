use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use autochunk::fwi::{fwi_run, FwiOutcome, SchedulerChoice};
use autochunk::sched::{IterRange, WorkerPool};
use autochunk::tuner::TuningPolicy;
use autochunk::wave::{Propagator, Seismogram};

use crate::config::ExperimentConfig;
use crate::record::{host_tag, read_records_if_present, CellKey, RecordSink, RunRecord};
use crate::scenario::{Scenario, SchedulerLabel};
use crate::BenchError;

/// Timing of one run, as reported by a runner.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seconds: f64,
    pub chunk: usize,
    pub tuned_chunk: Option<usize>,
    pub tuning_seconds: f64,
}

/// Executes one run of a cell. `rep` is `None` for the warm-up run.
pub trait CellRunner {
    fn run(&mut self, cell: &CellKey, label: SchedulerLabel, rep: Option<usize>) -> Result<RunOutcome, BenchError>;
}

/// Every cell of the grid, in execution order.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<(CellKey, SchedulerLabel)>, BenchError> {
    let mut out = Vec::new();
    for dims in &cfg.models {
        for &shots in &cfg.shots {
            for s in &cfg.schedulers {
                let label: SchedulerLabel = s.parse()?;
                out.push((CellKey { scheduler: label.to_string(), dims: *dims, threads: cfg.threads, shots }, label));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    /// Records produced by this invocation.
    pub records: Vec<RunRecord>,
    /// Repetitions already present in the output and not rerun.
    pub skipped: usize,
    pub failures: Vec<(CellKey, usize, String)>,
    /// Cells that still miss repetitions.
    pub incomplete: Vec<CellKey>,
}

/// Runs every missing repetition of every cell, appending each record to
/// `cfg.output` as soon as it exists. Repetitions already in the file are
/// skipped, so an interrupted experiment resumes where it stopped.
pub fn run_experiment(cfg: &ExperimentConfig, runner: &mut dyn CellRunner, log: &mut dyn Write) -> Result<ExperimentReport, BenchError> {
    cfg.validate()?;
    let existing = read_records_if_present(&cfg.output)?;
    let mut done: HashMap<CellKey, BTreeSet<usize>> = HashMap::new();
    for r in &existing {
        done.entry(r.cell()).or_default().insert(r.rep);
    }
    let mut sink = RecordSink::open(&cfg.output)?;
    let host = host_tag();
    let mut report = ExperimentReport::default();
    for (cell, label) in cells(cfg)? {
        let have = done.remove(&cell).unwrap_or_default();
        let missing: Vec<usize> = (0..cfg.repetitions).filter(|r| !have.contains(r)).collect();
        report.skipped += cfg.repetitions - missing.len();
        if missing.is_empty() {
            continue;
        }
        if cfg.warmup {
            writeln!(log, "warm-up {cell}")?;
            if let Err(e) = runner.run(&cell, label, None) {
                writeln!(log, "warm-up failed for {cell}: {e}")?;
            }
        }
        let mut complete = true;
        for rep in missing {
            match runner.run(&cell, label, Some(rep)) {
                Ok(o) => {
                    let record = RunRecord {
                        scheduler: cell.scheduler.clone(),
                        chunk: o.chunk,
                        n1: cell.dims[0],
                        n2: cell.dims[1],
                        n3: cell.dims[2],
                        threads: cell.threads,
                        shots: cell.shots,
                        rep,
                        seconds: o.seconds,
                        tuned_chunk: o.tuned_chunk,
                        tuning_seconds: o.tuning_seconds,
                        host: host.clone(),
                    };
                    sink.append(&record)?;
                    writeln!(log, "{cell} rep {rep}: {:.3} s (chunk {})", o.seconds, o.chunk)?;
                    report.records.push(record);
                }
                Err(e) => {
                    writeln!(log, "{cell} rep {rep} failed: {e}")?;
                    report.failures.push((cell.clone(), rep, e.to_string()));
                    complete = false;
                }
            }
        }
        if !complete {
            report.incomplete.push(cell);
        }
    }
    Ok(report)
}

/// Runs full FWI for each repetition on a shared worker pool. Models and
/// observed data are built once per (dims, shots) and reused.
pub struct FwiRunner {
    cfg: ExperimentConfig,
    pool: WorkerPool,
    cache: HashMap<([usize; 3], usize), (Scenario, Vec<Seismogram>)>,
    /// Outcome of the last run, kept for per-shot reporting.
    pub last: Option<FwiOutcome>,
}

impl FwiRunner {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, BenchError> {
        Ok(Self { cfg: cfg.clone(), pool: WorkerPool::with_threads(cfg.threads)?, cache: HashMap::new(), last: None })
    }

    fn prepare(&mut self, dims: [usize; 3], shots: usize) -> Result<(), BenchError> {
        if !self.cache.contains_key(&(dims, shots)) {
            let s = Scenario::from_experiment(&self.cfg, dims, shots)?;
            let obs = s.observed(&self.pool)?;
            self.cache.insert((dims, shots), (s, obs));
        }
        Ok(())
    }
}

impl CellRunner for FwiRunner {
    fn run(&mut self, cell: &CellKey, label: SchedulerLabel, rep: Option<usize>) -> Result<RunOutcome, BenchError> {
        let threads = self.pool.n_threads();
        let seed = self.cfg.seed.wrapping_add(rep.unwrap_or(usize::MAX) as u64);
        let policy = self.cfg.tuning.policy(seed);
        self.prepare(cell.dims, cell.shots)?;
        let (scenario, obs) = &self.cache[&(cell.dims, cell.shots)];
        let n_lines = Propagator::new(&scenario.start, &scenario.fwi.sim)?.n_lines();
        let choice = label.resolve(n_lines, threads)?;
        let policy = if choice == SchedulerChoice::Tuned { policy } else { TuningPolicy::disabled() };
        let out = fwi_run(&scenario.start, obs, &scenario.fwi, choice, &policy, &self.pool)?;
        let spec = out.propagation_spec;
        let outcome = RunOutcome {
            seconds: out.timing.total_seconds,
            chunk: spec.effective_chunk(IterRange::with_len(n_lines), threads)?,
            tuned_chunk: out.tuning.as_ref().map(|t| t.chunk),
            tuning_seconds: out.timing.tuning_seconds,
        };
        self.last = Some(out);
        Ok(outcome)
    }
}
