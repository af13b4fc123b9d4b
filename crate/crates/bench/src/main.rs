use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autochunk::fwi::{fwi_run, model_observed, SchedulerChoice};
use autochunk::revolve;
use autochunk::sched::WorkerPool;
use autochunk::tuner::{autotune_chunk, cost_first_step, FirstStepContext, TuningPolicy};
use autochunk::wave::{make_gaussian_sphere_model, Dims3, Propagator, Seismogram, VelocityModel};
use autochunk_bench::experiment::{cells, run_experiment, FwiRunner};
use autochunk_bench::record::read_records;
use autochunk_bench::report::{overhead_fraction, overhead_prediction, per_shot_report, summarize, write_per_shot, write_summary};
use autochunk_bench::scenario::make_shots;
use autochunk_bench::{BenchError, CellKey, CellRunner, ExperimentConfig, RunOutcome, Scenario, SchedulerLabel};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autochunk", version, about = "Chunk-size tuning for a checkpointed 3D acoustic FWI")]
struct Cli {
    /// Worker threads, the caller included.
    #[arg(long, global = true, env = "AUTOCHUNK_THREADS")]
    threads: Option<usize>,
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the true (Gaussian sphere) or starting (homogeneous) model.
    ModelGen {
        #[arg(long, value_parser = parse_dims)]
        dims: [usize; 3],
        #[arg(long)]
        homogeneous: bool,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Model one shot and write its seismogram.
    Forward {
        #[arg(long)]
        model: PathBuf,
        /// Source grid index; defaults to the first source of the shot layout.
        #[arg(long, value_parser = parse_dims)]
        source: Option<[usize; 3]>,
        #[arg(long, default_value = "static")]
        scheduler: SchedulerLabel,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Run FWI on a synthetic scenario.
    Fwi {
        #[arg(long, value_parser = parse_dims)]
        dims: Option<[usize; 3]>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long, default_value = "dynamic+tuned")]
        scheduler: SchedulerLabel,
        #[arg(long)]
        n_fwi: Option<usize>,
        /// Final model.
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Per-shot timing CSV.
        #[arg(long)]
        per_shot: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Tune the chunk of the first propagation step of a model.
    Tune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Every probe as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Run the experiment grid, appending to the output CSV.
    Bench {
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Per-shot timing CSV of every run, concatenated.
        #[arg(long)]
        per_shot: Option<PathBuf>,
    },
    /// Medians and speedups of a run CSV.
    Summarize {
        #[arg(long, short)]
        input: PathBuf,
        /// Baseline scheduler; repeatable.
        #[arg(long = "baseline", default_values = ["static", "guided", "dynamic"])]
        baselines: Vec<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the checkpoint schedule for a step count and snapshot budget.
    Plan {
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        snapshots: Option<usize>,
    },
}

#[derive(Args)]
struct SimFlags {
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    f_peak: Option<f64>,
    #[arg(long)]
    boundary_width: Option<usize>,
}

impl SimFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.nt {
            cfg.sim.nt = v;
        }
        if let Some(v) = self.dt {
            cfg.sim.dt = v;
        }
        if let Some(v) = self.f_peak {
            cfg.sim.f_peak = v;
        }
        if let Some(v) = self.boundary_width {
            cfg.sim.boundary_width = v;
        }
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split([',', 'x']).map(|p| p.trim().parse().map_err(|_| format!("bad dims `{s}`"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected three dims, got `{s}`"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let threads = cfg.threads;
    let pool = || WorkerPool::with_threads(threads);

    match cli.cmd {
        Cmd::ModelGen { dims, homogeneous, output } => {
            let d = Dims3::new(dims[0], dims[1], dims[2]);
            let m = &cfg.model;
            let model = if homogeneous {
                VelocityModel::homogeneous(d, m.dx, m.v_bg)?
            } else {
                make_gaussian_sphere_model(d, m.dx, m.v_bg, m.v_peak, m.center, m.radius_scale)?
            };
            model.save(&output)?;
            println!("wrote {} ({}x{}x{}, {:.1}..{:.1} m/s)", output.display(), d.n1, d.n2, d.n3, model.min_velocity(), model.max_velocity());
        }
        Cmd::Forward { model, source, scheduler, output, sim } => {
            sim.apply(&mut cfg);
            let model = VelocityModel::load(&model)?;
            let mut shot = make_shots(model.dims(), 1, &cfg.sim, &cfg.fwi).remove(0);
            if let Some(s) = source {
                shot.source = s;
            }
            let pool = pool()?;
            let prop = Propagator::new(&model, &cfg.sim.to_sim())?;
            let spec = match scheduler.resolve(prop.n_lines(), pool.n_threads())? {
                SchedulerChoice::Fixed(s) => s,
                SchedulerChoice::Tuned => {
                    let mut ctx = FirstStepContext::new(&prop, &pool, &prop.zero_field());
                    let r = autotune_chunk(&mut ctx, &cfg.tuning.policy(cfg.seed))?;
                    autochunk::sched::SchedulerSpec::dynamic(r.chunk)?
                }
            };
            let out = prop.forward_modeling(&shot, cfg.sim.nt, &spec, &pool, None)?;
            out.seismogram.save(&output, cfg.sim.dt)?;
            let loop_secs: f64 = out.step_seconds.iter().sum();
            println!("wrote {} ({} steps, {} receivers, {spec}, stencil {loop_secs:.3} s)", output.display(), cfg.sim.nt, shot.receivers.len());
        }
        Cmd::Fwi { dims, shots, scheduler, n_fwi, model_out, per_shot, seed, sim } => {
            sim.apply(&mut cfg);
            if let Some(n) = n_fwi {
                cfg.fwi.n_fwi = n;
            }
            let dims = dims.unwrap_or(cfg.models[0]);
            let shots = shots.unwrap_or(cfg.shots[0]);
            let pool = pool()?;
            let scenario = Scenario::from_experiment(&cfg, dims, shots)?;
            let observed: Vec<Seismogram> = model_observed(&scenario.truth, &scenario.fwi.shots, &scenario.fwi.sim, &pool)?;
            let n_lines = Propagator::new(&scenario.start, &scenario.fwi.sim)?.n_lines();
            let choice = scheduler.resolve(n_lines, pool.n_threads())?;
            let policy = if choice == SchedulerChoice::Tuned { cfg.tuning.policy(seed.unwrap_or(cfg.seed)) } else { TuningPolicy::disabled() };
            let out = fwi_run(&scenario.start, &observed, &scenario.fwi, choice, &policy, &pool)?;
            for (k, j) in out.objectives.iter().enumerate() {
                println!("iteration {k}: objective {j:.6e}");
            }
            println!("stop: {:?}; loops: {}; total {:.3} s", out.stop, out.propagation_spec, out.timing.total_seconds);
            if let Some(t) = &out.tuning {
                println!(
                    "tuned chunk {} in {:.3} s ({} probes, overhead {:.2}%)",
                    t.chunk,
                    t.tuning_wall_time,
                    t.evaluations.len(),
                    100.0 * overhead_fraction(out.timing.tuning_seconds, out.timing.total_seconds)
                );
            }
            if let Some(p) = model_out {
                out.models.last().expect("initial model").save(&p)?;
            }
            if let Some(p) = per_shot {
                write_per_shot(create(&p)?, &per_shot_report(&out, &scheduler.to_string()))?;
            }
        }
        Cmd::Tune { model, seed, trace, sim } => {
            sim.apply(&mut cfg);
            let model = VelocityModel::load(&model)?;
            let pool = pool()?;
            let prop = Propagator::new(&model, &cfg.sim.to_sim())?;
            let policy = cfg.tuning.policy(seed.unwrap_or(cfg.seed));
            let mut ctx = FirstStepContext::new(&prop, &pool, &prop.zero_field());
            let r = autotune_chunk(&mut ctx, &policy)?;
            let first = cost_first_step(&mut ctx, r.chunk, policy.repeat_discard)?.seconds;
            println!("chunk {} in [{}, {}] after {} probes", r.chunk, r.bounds.0, r.bounds.1, r.evaluations.len());
            println!(
                "tuning {:.3} s; predicted {:.3} s from a {:.2e} s first step",
                r.tuning_wall_time,
                overhead_prediction(&r, first, policy.repeat_discard),
                first
            );
            if let Some(n) = &r.note {
                println!("note: {n}");
            }
            if let Some(p) = trace {
                r.write_trace(create(&p)?)?;
            }
        }
        Cmd::Bench { output, repetitions, per_shot } => {
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            let mut runner = PerShotRunner::new(FwiRunner::new(&cfg)?, per_shot.as_deref())?;
            let report = run_experiment(&cfg, &mut runner, &mut std::io::stderr())?;
            println!("{} new records, {} already present, {} failures", report.records.len(), report.skipped, report.failures.len());
            for c in &report.incomplete {
                println!("incomplete: {c}");
            }
            if !report.failures.is_empty() {
                bail!("{} runs failed", report.failures.len());
            }
        }
        Cmd::Summarize { input, baselines, output } => {
            let records = read_records(&input)?;
            let expected = if cli.config.is_some() { cells(&cfg)?.into_iter().map(|(c, _)| c).collect() } else { Vec::new() };
            let rows = summarize(&records, &baselines, &expected, cfg.repetitions);
            match output {
                Some(p) => write_summary(create(&p)?, &rows, &baselines)?,
                None => write_summary(std::io::stdout().lock(), &rows, &baselines)?,
            }
        }
        Cmd::Plan { steps, snapshots } => {
            let s = snapshots.unwrap_or_else(|| revolve::default_snapshots(steps));
            let plan = revolve::plan(steps, s)?;
            let mut out = std::io::stdout().lock();
            out.write_all(plan.dump().as_bytes())?;
            writeln!(out, "# extra forward steps: {}", plan.recomputation())?;
        }
    }
    Ok(())
}

/// Adds per-shot CSV output to the FWI runner, one table for all runs.
struct PerShotRunner {
    inner: FwiRunner,
    out: Option<csv::Writer<BufWriter<File>>>,
}

impl PerShotRunner {
    fn new(inner: FwiRunner, path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                let mut w = csv::Writer::from_writer(create(p)?);
                w.write_record(["scheduler", "n1", "n2", "n3", "threads", "shots", "rep", "shot", "seconds", "tuning_seconds"])?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { inner, out })
    }
}

impl CellRunner for PerShotRunner {
    fn run(&mut self, cell: &CellKey, label: SchedulerLabel, rep: Option<usize>) -> Result<RunOutcome, BenchError> {
        let o = self.inner.run(cell, label, rep)?;
        if let (Some(w), Some(last), Some(rep)) = (self.out.as_mut(), self.inner.last.as_ref(), rep) {
            for r in per_shot_report(last, &cell.scheduler) {
                let d = cell.dims;
                w.serialize((&r.scheduler, d[0], d[1], d[2], cell.threads, cell.shots, rep, r.shot, r.seconds, r.tuning_seconds))?;
            }
            w.flush()?;
        }
        Ok(o)
    }
}
