//! Adjoint-state full-waveform inversion with checkpointed reverse
//! propagation and a normalized steepest-descent update.

use std::cell::RefCell;
use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::revolve::{self, CheckpointPlan, RevolveError, SnapshotStore};
use crate::sched::{ScheduleKind, SchedError, SchedulerSpec, WorkerPool};
use crate::tuner::{autotune_chunk, FirstStepContext, TunerError, TuningPolicy, TuningResult};
use crate::wave::{AdjointField, CheckpointSink, Dims3, Propagator, Seismogram, Shot, SimConfig, VelocityModel, WaveError, Wavefield};

pub const V_MIN_GUARD: f64 = 1000.0;
pub const V_MAX_GUARD: f64 = 6000.0;
pub const MAX_HALVINGS: usize = 5;

#[derive(Debug, Error)]
pub enum FwiError {
    #[error("invalid FWI config: {0}")]
    Config(String),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error("checkpointing failed: {0}")]
    Checkpoint(String),
}

impl From<RevolveError<WaveError>> for FwiError {
    fn from(e: RevolveError<WaveError>) -> Self {
        match e {
            RevolveError::Callback(inner) => FwiError::Wave(inner),
            other => FwiError::Checkpoint(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwiConfig {
    pub n_fwi: usize,
    pub shots: Vec<Shot>,
    pub sim: SimConfig,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
    /// First trial step as a fraction of the mean model velocity.
    pub step0: f64,
    /// Snapshot slots for checkpointing; `None` uses the default budget.
    pub n_snapshots: Option<usize>,
    pub v_min: f64,
    pub v_max: f64,
    /// Gradient is zeroed within this many grid points (per axis) of every
    /// source and receiver. 0 disables the mask.
    pub mask_radius: usize,
}

impl FwiConfig {
    pub fn new(n_fwi: usize, shots: Vec<Shot>, sim: SimConfig) -> Self {
        Self {
            n_fwi,
            shots,
            sim,
            tol: 0.0,
            step0: 0.02,
            n_snapshots: None,
            v_min: V_MIN_GUARD,
            v_max: V_MAX_GUARD,
            mask_radius: 0,
        }
    }

    pub fn snapshots(&self) -> usize {
        self.n_snapshots.unwrap_or_else(|| revolve::default_snapshots(self.sim.nt))
    }

    pub fn validate(&self) -> Result<(), FwiError> {
        if self.n_fwi == 0 {
            return Err(FwiError::Config("n_fwi must be at least 1".into()));
        }
        if self.shots.is_empty() {
            return Err(FwiError::Config("at least one shot is required".into()));
        }
        if self.sim.nt == 0 {
            return Err(FwiError::Config("nt must be at least 1".into()));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(FwiError::Config(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return Err(FwiError::Config(format!("bad velocity guards [{}, {}]", self.v_min, self.v_max)));
        }
        Ok(())
    }
}

/// Schedule applied to the forward, adjoint and recompute loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerChoice {
    Fixed(SchedulerSpec),
    /// Dynamic scheduling with the chunk found by the tuner.
    Tuned,
}

impl fmt::Display for SchedulerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerChoice::Fixed(spec) => write!(f, "{spec}"),
            SchedulerChoice::Tuned => f.write_str("dynamic+tuned"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Forward,
    Adjoint,
    Recompute,
    Gradient,
    Tuning,
}

/// Which schedule each phase's loops ran with, and how often.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleLog {
    pub entries: Vec<(Phase, SchedulerSpec, usize)>,
}

impl ScheduleLog {
    pub fn record(&mut self, phase: Phase, spec: SchedulerSpec) {
        match self.entries.iter_mut().find(|(p, s, _)| *p == phase && *s == spec) {
            Some(e) => e.2 += 1,
            None => self.entries.push((phase, spec, 1)),
        }
    }

    pub fn specs(&self, phase: Phase) -> Vec<SchedulerSpec> {
        self.entries.iter().filter(|(p, ..)| *p == phase).map(|(_, s, _)| *s).collect()
    }

    pub fn calls(&self, phase: Phase) -> usize {
        self.entries.iter().filter(|(p, ..)| *p == phase).map(|e| e.2).sum()
    }

    pub fn merge(&mut self, other: &ScheduleLog) {
        for &(p, s, n) in &other.entries {
            match self.entries.iter_mut().find(|(q, t, _)| *q == p && *t == s) {
                Some(e) => e.2 += n,
                None => self.entries.push((p, s, n)),
            }
        }
    }
}

/// `d_calc - d_obs`.
pub fn residual(calc: &Seismogram, obs: &Seismogram) -> Result<Seismogram, FwiError> {
    if calc.nt != obs.nt || calc.n_receivers != obs.n_receivers {
        return Err(WaveError::Mismatch(format!(
            "calculated data {}x{} vs observed {}x{}",
            calc.nt, calc.n_receivers, obs.nt, obs.n_receivers
        ))
        .into());
    }
    let data = calc.data.iter().zip(&obs.data).map(|(c, o)| c - o).collect();
    Ok(Seismogram { nt: calc.nt, n_receivers: calc.n_receivers, data })
}

/// Half the squared norm over all shots, time samples and receivers.
pub fn objective(residuals: &[Seismogram]) -> f64 {
    0.5 * residuals.iter().flat_map(|r| &r.data).map(|x| x * x).sum::<f64>()
}

/// 1 everywhere except within `radius` points (per axis) of any source or
/// receiver, where it is 0.
pub fn acquisition_mask(dims: Dims3, shots: &[Shot], radius: usize) -> Vec<f64> {
    let mut mask = vec![1.0; dims.len()];
    if radius == 0 {
        return mask;
    }
    let span = |c: usize, n: usize| c.saturating_sub(radius)..(c + radius + 1).min(n);
    for p in shots.iter().flat_map(|s| std::iter::once(&s.source).chain(&s.receivers)) {
        for i1 in span(p[0], dims.n1) {
            for i2 in span(p[1], dims.n2) {
                for i3 in span(p[2], dims.n3) {
                    mask[dims.index(i1, i2, i3)] = 0.0;
                }
            }
        }
    }
    mask
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotGradient {
    /// Sensitivity on the model grid.
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub forward_seconds: f64,
    pub reverse_seconds: f64,
}

/// Collects the forward-sweep checkpoints of a plan plus the last state.
struct SweepSink {
    slot_at: Vec<Option<usize>>,
    store: SnapshotStore<Wavefield>,
    last: Option<Wavefield>,
}

impl CheckpointSink for SweepSink {
    fn wants(&self, t: usize) -> bool {
        self.slot_at[t].is_some() || t + 1 == self.slot_at.len()
    }

    fn save(&mut self, t: usize, field: &Wavefield) {
        if let Some(slot) = self.slot_at[t] {
            self.store.put(slot, t, field);
        }
        if t + 1 == self.slot_at.len() {
            self.last = Some(field.clone());
        }
    }
}

/// Objective and gradient of one shot. The forward pass stores the plan's
/// checkpoints; the reverse pass recomputes missing states with `spec`,
/// runs the adjoint with `spec` and accumulates the gradient under static
/// scheduling.
pub fn shot_gradient(
    prop: &Propagator,
    shot: &Shot,
    observed: &Seismogram,
    nt: usize,
    spec: &SchedulerSpec,
    pool: &WorkerPool,
    plan: &CheckpointPlan,
    log: &mut ScheduleLog,
) -> Result<ShotGradient, FwiError> {
    if plan.n_steps != nt {
        return Err(FwiError::Config(format!("plan covers {} steps, simulation has {nt}", plan.n_steps)));
    }
    let start = Instant::now();
    let mut sink = SweepSink { slot_at: vec![None; nt], store: SnapshotStore::new(plan.n_snapshots), last: None };
    for (slot, step) in plan.sweep_stores() {
        sink.slot_at[step] = Some(slot);
    }
    let out = prop.forward_modeling(shot, nt, spec, pool, Some(&mut sink))?;
    for _ in 0..nt {
        log.record(Phase::Forward, *spec);
    }
    let res = residual(&out.seismogram, observed)?;
    let obj = objective(std::slice::from_ref(&res));
    let forward_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let gradient_spec = SchedulerSpec::static_default();
    let mut adj = AdjointField::zeros(prop.dims());
    let mut grad = vec![0.0; prop.dims().len()];
    let mut current = sink.last.take().expect("sink keeps the last forward state");
    let SweepSink { mut store, .. } = sink;
    let log_cell = RefCell::new(std::mem::take(log));
    revolve::replay_from(
        plan,
        plan.first_reverse(),
        nt - 1,
        &mut store,
        &mut current,
        |field, t| {
            log_cell.borrow_mut().record(Phase::Recompute, *spec);
            prop.advance(field, shot, t, spec, pool).map(|_| ())
        },
        |t, field| {
            prop.inject_residual(&mut adj, shot, res.row(t));
            prop.accumulate_gradient(&mut grad, field, &adj, shot, t, &gradient_spec, pool)?;
            prop.adjoint_step(&mut adj, spec, pool)?;
            let mut l = log_cell.borrow_mut();
            l.record(Phase::Gradient, gradient_spec);
            l.record(Phase::Adjoint, *spec);
            Ok(())
        },
    )?;
    *log = log_cell.into_inner();
    Ok(ShotGradient {
        gradient: prop.fold_gradient(&grad),
        objective: obj,
        forward_seconds,
        reverse_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `m - step * g / max|g|`, clamped to `[v_min, v_max]`. `None` when the
/// gradient vanishes.
pub fn update_model(model: &VelocityModel, gradient: &[f64], step: f64, v_min: f64, v_max: f64) -> Result<Option<VelocityModel>, FwiError> {
    if gradient.len() != model.values().len() {
        return Err(WaveError::Mismatch(format!("gradient has {} points, model {}", gradient.len(), model.dims())).into());
    }
    let gmax = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if gmax == 0.0 {
        return Ok(None);
    }
    if !gmax.is_finite() {
        return Err(FwiError::Config("gradient is not finite".into()));
    }
    let v = model.values().iter().zip(gradient).map(|(v, g)| (v - step * g / gmax).clamp(v_min, v_max)).collect();
    Ok(Some(VelocityModel::new(model.dims(), model.dx(), v)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted step, 0 when no trial decreased the objective.
    pub step: f64,
    pub objective: f64,
    pub model: Option<VelocityModel>,
    pub trials: usize,
}

impl LineSearchOutcome {
    pub fn converged(&self) -> bool {
        self.model.is_none()
    }
}

/// Backtracking from `step0 * mean(v)`, halving until the objective drops
/// below `j0` or `MAX_HALVINGS` halvings have failed. `eval` returns `None`
/// for trial models that cannot be simulated.
pub fn line_search<F>(
    model: &VelocityModel,
    gradient: &[f64],
    j0: f64,
    step0: f64,
    v_min: f64,
    v_max: f64,
    mut eval: F,
) -> Result<LineSearchOutcome, FwiError>
where
    F: FnMut(&VelocityModel) -> Result<Option<f64>, FwiError>,
{
    let fail = |trials| LineSearchOutcome { step: 0.0, objective: j0, model: None, trials };
    if j0 <= f64::MIN_POSITIVE {
        return Ok(fail(0));
    }
    let mut step = step0 * model.mean_velocity();
    for trial in 0..=MAX_HALVINGS {
        let Some(candidate) = update_model(model, gradient, step, v_min, v_max)? else {
            return Ok(fail(trial));
        };
        if let Some(j) = eval(&candidate)? {
            if j < j0 {
                return Ok(LineSearchOutcome { step, objective: j, model: Some(candidate), trials: trial + 1 });
            }
        }
        step *= 0.5;
    }
    Ok(fail(MAX_HALVINGS + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    IterationCap,
    ZeroObjective,
    SmallGradient,
    LineSearchFailed,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingReport {
    /// Wall time per shot (gradient evaluation only), one row per iteration.
    pub shot_seconds: Vec<Vec<f64>>,
    /// Wall time per iteration including the line search.
    pub iteration_seconds: Vec<f64>,
    pub tuning_seconds: f64,
    pub tuner_invocations: usize,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwiOutcome {
    pub models: Vec<VelocityModel>,
    /// Objective of every model in `models`.
    pub objectives: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub stop: StopReason,
    pub timing: TimingReport,
    pub tuning: Option<TuningResult>,
    /// Schedule actually used by the propagation loops.
    pub propagation_spec: SchedulerSpec,
    pub log: ScheduleLog,
}

/// Synthetic observed data for every shot, static scheduling.
pub fn model_observed(model: &VelocityModel, shots: &[Shot], sim: &SimConfig, pool: &WorkerPool) -> Result<Vec<Seismogram>, FwiError> {
    let prop = Propagator::new(model, sim)?;
    let spec = SchedulerSpec::static_default();
    shots.iter().map(|s| Ok(prop.forward_modeling(s, sim.nt, &spec, pool, None)?.seismogram)).collect()
}

struct Driver<'a> {
    cfg: &'a FwiConfig,
    observed: &'a [Seismogram],
    pool: &'a WorkerPool,
    choice: SchedulerChoice,
    policy: &'a TuningPolicy,
    plan: CheckpointPlan,
    mask: Vec<f64>,
    spec: Option<SchedulerSpec>,
    tuning: Option<TuningResult>,
    timing: TimingReport,
    log: ScheduleLog,
}

impl Driver<'_> {
    /// Schedule for the propagation loops, tuning it on first use.
    fn propagation_spec(&mut self, prop: &Propagator) -> Result<SchedulerSpec, FwiError> {
        if let Some(s) = self.spec {
            return Ok(s);
        }
        let spec = match self.choice {
            SchedulerChoice::Fixed(s) => s,
            SchedulerChoice::Tuned if self.policy.enabled => {
                let mut ctx = FirstStepContext::new(prop, self.pool, &prop.zero_field());
                let result = autotune_chunk(&mut ctx, self.policy)?;
                self.timing.tuner_invocations += 1;
                self.timing.tuning_seconds += result.tuning_wall_time;
                for e in &result.evaluations {
                    self.log.record(Phase::Tuning, SchedulerSpec::dynamic(e.chunk)?);
                }
                let spec = SchedulerSpec::dynamic(result.chunk)?;
                self.tuning = Some(result);
                spec
            }
            SchedulerChoice::Tuned => SchedulerSpec::with_default_chunk(ScheduleKind::Dynamic),
        };
        self.spec = Some(spec);
        Ok(spec)
    }

    /// Total objective and gradient over all shots, summed in shot order.
    fn evaluate(&mut self, model: &VelocityModel) -> Result<(f64, Vec<f64>, Vec<f64>), FwiError> {
        let prop = Propagator::new(model, &self.cfg.sim)?;
        let mut total = vec![0.0; model.values().len()];
        let mut j = 0.0;
        let mut shot_seconds = Vec::with_capacity(self.cfg.shots.len());
        for (shot, obs) in self.cfg.shots.iter().zip(self.observed) {
            let spec = self.propagation_spec(&prop)?;
            let start = Instant::now();
            let g = shot_gradient(&prop, shot, obs, self.cfg.sim.nt, &spec, self.pool, &self.plan, &mut self.log)?;
            for (t, x) in total.iter_mut().zip(&g.gradient) {
                *t += x;
            }
            j += g.objective;
            shot_seconds.push(start.elapsed().as_secs_f64());
        }
        for (t, m) in total.iter_mut().zip(&self.mask) {
            *t *= m;
        }
        Ok((j, total, shot_seconds))
    }

    /// Objective only; `None` if the model violates the stability limit.
    fn objective_of(&mut self, model: &VelocityModel) -> Result<Option<f64>, FwiError> {
        let prop = match Propagator::new(model, &self.cfg.sim) {
            Ok(p) => p,
            Err(WaveError::Cfl { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let spec = self.propagation_spec(&prop)?;
        let mut j = 0.0;
        for (shot, obs) in self.cfg.shots.iter().zip(self.observed) {
            let out = prop.forward_modeling(shot, self.cfg.sim.nt, &spec, self.pool, None)?;
            for _ in 0..self.cfg.sim.nt {
                self.log.record(Phase::Forward, spec);
            }
            j += objective(std::slice::from_ref(&residual(&out.seismogram, obs)?));
        }
        Ok(Some(j))
    }
}

/// Runs up to `n_fwi` descent iterations over all shots. The tuner, if
/// selected, runs once before the first shot of the first iteration.
pub fn fwi_run(
    initial: &VelocityModel,
    observed: &[Seismogram],
    cfg: &FwiConfig,
    choice: SchedulerChoice,
    policy: &TuningPolicy,
    pool: &WorkerPool,
) -> Result<FwiOutcome, FwiError> {
    cfg.validate()?;
    if observed.len() != cfg.shots.len() {
        return Err(FwiError::Config(format!("{} observed gathers for {} shots", observed.len(), cfg.shots.len())));
    }
    let run_start = Instant::now();
    let plan = revolve::plan(cfg.sim.nt, cfg.snapshots()).map_err(|e| FwiError::Checkpoint(e.to_string()))?;
    let mut d = Driver {
        cfg,
        observed,
        pool,
        choice,
        policy,
        plan,
        mask: acquisition_mask(initial.dims(), &cfg.shots, cfg.mask_radius),
        spec: None,
        tuning: None,
        timing: TimingReport::default(),
        log: ScheduleLog::default(),
    };
    let mut model = initial.clone();
    let mut models = vec![model.clone()];
    let mut objectives = Vec::new();
    let mut gradient_norms = Vec::new();
    let mut stop = StopReason::IterationCap;

    let iter_start = Instant::now();
    let (mut j, mut grad, shots) = d.evaluate(&model)?;
    d.timing.shot_seconds.push(shots);
    objectives.push(j);
    for k in 0..cfg.n_fwi {
        let iter_start = if k == 0 { iter_start } else { Instant::now() };
        let norm = l2_norm(&grad);
        gradient_norms.push(norm);
        if j <= f64::MIN_POSITIVE {
            stop = StopReason::ZeroObjective;
            d.timing.iteration_seconds.push(iter_start.elapsed().as_secs_f64());
            break;
        }
        if norm < cfg.tol {
            stop = StopReason::SmallGradient;
            d.timing.iteration_seconds.push(iter_start.elapsed().as_secs_f64());
            break;
        }
        let ls = line_search(&model, &grad, j, cfg.step0, cfg.v_min, cfg.v_max, |m| d.objective_of(m))?;
        let Some(next) = ls.model else {
            stop = StopReason::LineSearchFailed;
            d.timing.iteration_seconds.push(iter_start.elapsed().as_secs_f64());
            break;
        };
        model = next;
        models.push(model.clone());
        if k + 1 < cfg.n_fwi {
            let (jn, gn, shots) = d.evaluate(&model)?;
            debug_assert_eq!(jn.to_bits(), ls.objective.to_bits());
            (j, grad) = (jn, gn);
            d.timing.shot_seconds.push(shots);
        } else {
            j = ls.objective;
        }
        objectives.push(j);
        d.timing.iteration_seconds.push(iter_start.elapsed().as_secs_f64());
    }
    d.timing.total_seconds = run_start.elapsed().as_secs_f64();
    let propagation_spec = d.spec.expect("set by the first evaluation");
    Ok(FwiOutcome { models, objectives, gradient_norms, stop, timing: d.timing, tuning: d.tuning, propagation_spec, log: d.log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_definition() {
        let a = Seismogram { nt: 2, n_receivers: 1, data: vec![3.0, 0.0] };
        assert_eq!(objective(&[a.clone()]), 4.5);
        let z = residual(&a, &a).unwrap();
        assert_eq!(objective(&[z]), 0.0);
        let scaled = Seismogram { data: a.data.iter().map(|x| 2.0 * x).collect(), ..a.clone() };
        assert_eq!(objective(&[scaled]), 4.0 * objective(&[a.clone()]));
        let b = Seismogram::zeros(3, 1);
        assert!(residual(&a, &b).is_err());
    }

    #[test]
    fn update_rules() {
        let m = VelocityModel::homogeneous(Dims3::cube(2), 10.0, 2000.0).unwrap();
        let same = update_model(&m, &[1.0; 8], 0.0, V_MIN_GUARD, V_MAX_GUARD).unwrap().unwrap();
        assert_eq!(same, m);
        assert!(update_model(&m, &[0.0; 8], 5.0, V_MIN_GUARD, V_MAX_GUARD).unwrap().is_none());
        let down = update_model(&m, &[3.0; 8], 25.0, V_MIN_GUARD, V_MAX_GUARD).unwrap().unwrap();
        assert!(down.values().iter().all(|&v| v == 1975.0));
        let clamped = update_model(&m, &[1.0; 8], 5000.0, V_MIN_GUARD, V_MAX_GUARD).unwrap().unwrap();
        assert!(clamped.values().iter().all(|&v| v == V_MIN_GUARD));
    }

    #[test]
    fn line_search_on_quadratic() {
        // J(v) = (v - 1500)^2 with a single parameter
        let m = VelocityModel::homogeneous(Dims3::cube(1), 10.0, 2000.0).unwrap();
        let j = |m: &VelocityModel| (m.values()[0] - 1500.0).powi(2);
        let g = [2.0 * (2000.0 - 1500.0)];
        let ls = line_search(&m, &g, j(&m), 0.5, V_MIN_GUARD, V_MAX_GUARD, |m| Ok(Some(j(m)))).unwrap();
        assert!(ls.objective < j(&m));
        assert_eq!(ls.trials, 2);
        assert_eq!(ls.step, 500.0);

        let zero = line_search(&m, &g, 0.0, 0.5, V_MIN_GUARD, V_MAX_GUARD, |_| unreachable!()).unwrap();
        assert!(zero.converged() && zero.step == 0.0);

        let mut calls = 0;
        let stuck = line_search(&m, &g, 1.0, 0.5, V_MIN_GUARD, V_MAX_GUARD, |_| {
            calls += 1;
            Ok(Some(2.0))
        })
        .unwrap();
        assert!(stuck.converged());
        assert_eq!(calls, MAX_HALVINGS + 1);
    }

    #[test]
    fn mask_zeroes_neighbourhood() {
        let dims = Dims3::cube(6);
        let shot = Shot { source: [0, 0, 0], receivers: vec![[5, 5, 5]], wavelet: vec![] };
        let m = acquisition_mask(dims, &[shot.clone()], 1);
        assert_eq!(m.iter().filter(|&&x| x == 0.0).count(), 16);
        assert_eq!(m[dims.index(1, 1, 1)], 0.0);
        assert_eq!(m[dims.index(2, 0, 0)], 1.0);
        assert!(acquisition_mask(dims, &[shot], 0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn schedule_log_counts() {
        let mut log = ScheduleLog::default();
        let s = SchedulerSpec::dynamic(64).unwrap();
        log.record(Phase::Forward, s);
        log.record(Phase::Forward, s);
        log.record(Phase::Adjoint, s);
        assert_eq!(log.calls(Phase::Forward), 2);
        assert_eq!(log.specs(Phase::Adjoint), vec![s]);
        assert!(log.specs(Phase::Recompute).is_empty());
    }
}
