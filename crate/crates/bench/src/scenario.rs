use std::fmt;
use std::str::FromStr;

use autochunk::fwi::{model_observed, FwiConfig, SchedulerChoice};
use autochunk::sched::{competitor_chunk, ScheduleKind, SchedulerSpec, WorkerPool};
use autochunk::wave::{make_gaussian_sphere_model, ricker, surface_receivers, Dims3, Seismogram, Shot, VelocityModel};

use crate::config::{ExperimentConfig, FwiSection, ModelSection, SimSection};
use crate::BenchError;

/// Scheduler as written in configs and records: `static`, `dynamic:64`,
/// `guided-competitor`, `dynamic+tuned`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerLabel {
    /// Kind with an explicit chunk or the kind's default.
    Plain(ScheduleKind, Option<usize>),
    /// Kind with the competitor chunk formula.
    Competitor(ScheduleKind),
    Tuned,
}

impl fmt::Display for SchedulerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerLabel::Plain(k, None) => write!(f, "{k}"),
            SchedulerLabel::Plain(k, Some(c)) => write!(f, "{k}:{c}"),
            SchedulerLabel::Competitor(k) => write!(f, "{k}-competitor"),
            SchedulerLabel::Tuned => f.write_str("dynamic+tuned"),
        }
    }
}

impl FromStr for SchedulerLabel {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BenchError::Config(format!("unknown scheduler `{s}`"));
        if s == "dynamic+tuned" || s == "tuned" {
            return Ok(SchedulerLabel::Tuned);
        }
        if let Some(kind) = s.strip_suffix("-competitor") {
            return Ok(SchedulerLabel::Competitor(kind.parse().map_err(|_| bad())?));
        }
        match s.split_once(':') {
            Some((kind, chunk)) => {
                let chunk: usize = chunk.parse().map_err(|_| bad())?;
                if chunk == 0 {
                    return Err(bad());
                }
                Ok(SchedulerLabel::Plain(kind.parse().map_err(|_| bad())?, Some(chunk)))
            }
            None => Ok(SchedulerLabel::Plain(s.parse().map_err(|_| bad())?, None)),
        }
    }
}

impl SchedulerLabel {
    /// Concrete choice for a loop of `n_iters` iterations on `n_threads`.
    pub fn resolve(&self, n_iters: usize, n_threads: usize) -> Result<SchedulerChoice, BenchError> {
        Ok(match *self {
            SchedulerLabel::Plain(kind, chunk) => SchedulerChoice::Fixed(SchedulerSpec::new(kind, chunk)?),
            SchedulerLabel::Competitor(kind) => SchedulerChoice::Fixed(SchedulerSpec::new(kind, Some(competitor_chunk(n_iters, n_threads)?))?),
            SchedulerLabel::Tuned => SchedulerChoice::Tuned,
        })
    }
}

/// Sources at depth index 2 on a regular grid over the horizontal plane.
pub fn source_positions(dims: Dims3, n: usize) -> Vec<[usize; 3]> {
    let g = (1..).find(|g| g * g >= n).expect("finite");
    let depth = 2.min(dims.n1 - 1);
    (0..n)
        .map(|k| {
            let (a, b) = (k / g, k % g);
            let at = |i: usize, len: usize| (((2 * i + 1) * len) / (2 * g)).min(len - 1);
            [depth, at(a, dims.n2), at(b, dims.n3)]
        })
        .collect()
}

pub fn make_shots(dims: Dims3, n: usize, sim: &SimSection, fwi: &FwiSection) -> Vec<Shot> {
    let wavelet = ricker(sim.f_peak, sim.dt, sim.nt);
    let mut receivers = surface_receivers(dims, fwi.receiver_every);
    if fwi.bottom_receivers && dims.n1 > 3 {
        let bottom: Vec<_> = receivers.iter().map(|r| [dims.n1 - 3, r[1], r[2]]).collect();
        receivers.extend(bottom);
    }
    source_positions(dims, n)
        .into_iter()
        .map(|source| Shot { source, receivers: receivers.clone(), wavelet: wavelet.clone() })
        .collect()
}

/// True model, starting model and FWI setup for one experiment cell.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: VelocityModel,
    pub start: VelocityModel,
    pub fwi: FwiConfig,
}

impl Scenario {
    pub fn new(dims: [usize; 3], n_shots: usize, model: &ModelSection, sim: &SimSection, fwi: &FwiSection) -> Result<Self, BenchError> {
        let dims = Dims3::new(dims[0], dims[1], dims[2]);
        let truth = make_gaussian_sphere_model(dims, model.dx, model.v_bg, model.v_peak, model.center, model.radius_scale)?;
        let start = VelocityModel::homogeneous(dims, model.dx, model.v_bg)?;
        let mut cfg = FwiConfig::new(fwi.n_fwi, make_shots(dims, n_shots, sim, fwi), sim.to_sim());
        cfg.step0 = fwi.step0;
        cfg.mask_radius = fwi.mask_radius;
        cfg.n_snapshots = fwi.snapshots;
        cfg.validate()?;
        Ok(Self { truth, start, fwi: cfg })
    }

    pub fn from_experiment(cfg: &ExperimentConfig, dims: [usize; 3], n_shots: usize) -> Result<Self, BenchError> {
        Self::new(dims, n_shots, &cfg.model, &cfg.sim, &cfg.fwi)
    }

    pub fn observed(&self, pool: &WorkerPool) -> Result<Vec<Seismogram>, BenchError> {
        Ok(model_observed(&self.truth, &self.fwi.shots, &self.fwi.sim, pool)?)
    }
}
