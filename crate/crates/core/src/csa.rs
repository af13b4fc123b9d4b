//! Coupled Simulated Annealing over a bounded 1-D integer search space.
//!
//! `m` annealers run side by side. Their acceptance probabilities are
//! coupled through a shared normalization term, and the acceptance
//! temperature is steered so that the variance of those probabilities tracks
//! a target value.
//!
//! Cost evaluations are strictly sequential: the cost is usually a timed
//! parallel loop, and overlapping two of them would corrupt the measurement.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Multiplicative step applied to the acceptance temperature each iteration.
pub const AC_TEMPERATURE_STEP: f64 = 0.05;

/// Cap on a single generation step, keeps the rounding in `i64` range.
const MAX_STEP: f64 = 1e15;

#[derive(Debug, Error)]
pub enum CsaError<E>
where
    E: std::error::Error + 'static,
{
    #[error("invalid CSA configuration: {0}")]
    Config(String),
    #[error("cost evaluation failed at solution {solution}")]
    Cost {
        solution: i64,
        #[source]
        source: E,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaConfig {
    /// Number of coupled optimizers.
    pub n_optimizers: usize,
    /// Generation/acceptance rounds after initialization.
    pub n_iterations: usize,
    pub t0_gen: f64,
    pub t0_ac: f64,
    pub variance_target: f64,
    pub rng_seed: u64,
}

impl CsaConfig {
    /// Four optimizers, 40 iterations, initial temperatures 100 (generation)
    /// and 0.9 (acceptance).
    pub fn standard(rng_seed: u64) -> Self {
        Self::with(4, 40, 100.0, 0.9, rng_seed)
    }

    /// Builds a config with the default variance target for `n_optimizers`.
    pub fn with(n_optimizers: usize, n_iterations: usize, t0_gen: f64, t0_ac: f64, rng_seed: u64) -> Self {
        Self {
            n_optimizers,
            n_iterations,
            t0_gen,
            t0_ac,
            variance_target: default_variance_target(n_optimizers),
            rng_seed,
        }
    }

    /// Total cost evaluations of a full run: `m * (N + 1)`.
    pub fn evaluation_budget(&self) -> usize {
        self.n_optimizers * (self.n_iterations + 1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_optimizers < 1 {
            return Err("n_optimizers must be >= 1".into());
        }
        if self.n_iterations < 1 {
            return Err("n_iterations must be >= 1".into());
        }
        if !(self.t0_gen > 0.0 && self.t0_gen.is_finite()) {
            return Err(format!("t0_gen must be positive, got {}", self.t0_gen));
        }
        if !(self.t0_ac > 0.0 && self.t0_ac.is_finite()) {
            return Err(format!("t0_ac must be positive, got {}", self.t0_ac));
        }
        if !(self.variance_target > 0.0 && self.variance_target < 1.0) {
            return Err(format!("variance_target must lie in (0, 1), got {}", self.variance_target));
        }
        Ok(())
    }
}

/// `0.99 * (m - 1) / m^2`, just under the largest possible variance of `m`
/// probabilities that sum to one. Falls back to a small positive value for a
/// single optimizer, where the variance is always zero.
pub fn default_variance_target(m: usize) -> f64 {
    if m < 2 {
        return 0.01;
    }
    let m = m as f64;
    0.99 * (m - 1.0) / (m * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    lo: i64,
    hi: i64,
}

impl SearchBounds {
    pub fn new(lo: i64, hi: i64) -> Option<Self> {
        (lo <= hi).then_some(Self { lo, hi })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn contains(&self, x: i64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    /// Folds `x` back into the bounds by mirror reflection at both ends.
    pub fn reflect(&self, x: i64) -> i64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let width = (self.hi - self.lo) as i128;
        let period = 2 * width;
        let mut y = (x as i128 - self.lo as i128).rem_euclid(period);
        if y > width {
            y = period - y;
        }
        (self.lo as i128 + y) as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaState {
    pub current: Vec<i64>,
    pub current_cost: Vec<f64>,
    pub best: i64,
    pub best_cost: f64,
    pub t_gen: f64,
    pub t_ac: f64,
    /// Completed generation/acceptance rounds.
    pub iteration: usize,
    /// Coupled acceptance probabilities from the last acceptance round.
    pub acceptance: Vec<f64>,
}

impl CsaState {
    fn observe(&mut self, solution: i64, cost: f64) {
        if cost.is_finite() && (cost < self.best_cost || !self.best_cost.is_finite()) {
            self.best = solution;
            self.best_cost = cost;
        }
    }
}

/// One cost-function call made during a run. Iteration 0 is initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub iteration: usize,
    pub optimizer: usize,
    pub solution: i64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaOutcome {
    pub best: i64,
    pub best_cost: f64,
    pub history: Vec<Evaluation>,
}

/// Draws `m` starting points uniformly from `bounds` and evaluates each once.
pub fn csa_init<R, F, E>(
    config: &CsaConfig,
    bounds: SearchBounds,
    mut cost_fn: F,
    rng: &mut R,
    history: &mut Vec<Evaluation>,
) -> Result<CsaState, CsaError<E>>
where
    R: Rng + ?Sized,
    F: FnMut(i64) -> Result<f64, E>,
    E: std::error::Error + 'static,
{
    config.validate().map_err(CsaError::Config)?;
    let m = config.n_optimizers;
    let current: Vec<i64> = (0..m).map(|_| rng.gen_range(bounds.lo..=bounds.hi)).collect();
    let mut state = CsaState {
        current: current.clone(),
        current_cost: Vec::with_capacity(m),
        best: current[0],
        best_cost: f64::INFINITY,
        t_gen: config.t0_gen,
        t_ac: config.t0_ac,
        iteration: 0,
        acceptance: vec![1.0 / m as f64; m],
    };
    for (i, &x) in current.iter().enumerate() {
        let cost = sanitize(cost_fn(x).map_err(|source| CsaError::Cost { solution: x, source })?);
        history.push(Evaluation { iteration: 0, optimizer: i, solution: x, cost });
        state.current_cost.push(cost);
        state.observe(x, cost);
    }
    Ok(state)
}

/// Proposes one candidate per optimizer: a Cauchy step of scale `t_gen`,
/// rounded and reflected into the bounds.
pub fn csa_generate<R: Rng + ?Sized>(state: &CsaState, bounds: SearchBounds, rng: &mut R) -> Vec<i64> {
    state
        .current
        .iter()
        .map(|&x| {
            let u: f64 = rng.gen();
            let step = (state.t_gen * (PI * (u - 0.5)).tan()).clamp(-MAX_STEP, MAX_STEP).round() as i64;
            bounds.reflect(x.saturating_add(step))
        })
        .collect()
}

/// Coupled acceptance probabilities for the given current costs.
/// Non-finite costs get probability zero and do not enter the maximum.
pub fn coupled_acceptance(current_cost: &[f64], t_ac: f64) -> Vec<f64> {
    let max = current_cost.iter().copied().filter(|c| c.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; current_cost.len()];
    }
    let weights: Vec<f64> = current_cost
        .iter()
        .map(|&c| if c.is_finite() { ((c - max) / t_ac).exp() } else { 0.0 })
        .collect();
    let gamma: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / gamma).collect()
}

/// Acceptance round. Each optimizer takes its candidate when it is strictly
/// better, otherwise with its coupled acceptance probability. Non-finite
/// candidate costs are never accepted.
pub fn csa_accept<R: Rng + ?Sized>(state: &mut CsaState, candidates: &[i64], candidate_costs: &[f64], rng: &mut R) {
    debug_assert_eq!(candidates.len(), state.current.len());
    let acceptance = coupled_acceptance(&state.current_cost, state.t_ac);
    for i in 0..state.current.len() {
        let u: f64 = rng.gen();
        let cand = sanitize(candidate_costs[i]);
        state.observe(candidates[i], cand);
        if !cand.is_finite() {
            continue;
        }
        let cur = state.current_cost[i];
        if cand < cur || !cur.is_finite() || acceptance[i] > u {
            state.current[i] = candidates[i];
            state.current_cost[i] = cand;
        }
    }
    state.acceptance = acceptance;
}

/// Hyperbolic generation schedule `t0_gen / iteration`; the acceptance
/// temperature is cooled while the probability variance is below target and
/// heated otherwise (ties heat).
pub fn csa_update_temperatures(state: &mut CsaState, config: &CsaConfig) {
    let k = state.iteration.max(1) as f64;
    state.t_gen = config.t0_gen / k;
    if acceptance_variance(&state.acceptance) < config.variance_target {
        state.t_ac *= 1.0 - AC_TEMPERATURE_STEP;
    } else {
        state.t_ac *= 1.0 + AC_TEMPERATURE_STEP;
    }
}

/// Population variance of the acceptance probabilities.
pub fn acceptance_variance(acceptance: &[f64]) -> f64 {
    if acceptance.is_empty() {
        return 0.0;
    }
    let m = acceptance.len() as f64;
    let mean = acceptance.iter().sum::<f64>() / m;
    acceptance.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / m
}

/// Full optimization: initialization plus `n_iterations` rounds, exactly
/// `m * (N + 1)` cost evaluations.
pub fn csa_run<F, E>(config: &CsaConfig, bounds: SearchBounds, mut cost_fn: F) -> Result<CsaOutcome, CsaError<E>>
where
    F: FnMut(i64) -> Result<f64, E>,
    E: std::error::Error + 'static,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut history = Vec::with_capacity(config.evaluation_budget());
    let mut state = csa_init(config, bounds, &mut cost_fn, &mut rng, &mut history)?;
    for k in 1..=config.n_iterations {
        let candidates = csa_generate(&state, bounds, &mut rng);
        let mut costs = Vec::with_capacity(candidates.len());
        for (i, &x) in candidates.iter().enumerate() {
            let cost = sanitize(cost_fn(x).map_err(|source| CsaError::Cost { solution: x, source })?);
            history.push(Evaluation { iteration: k, optimizer: i, solution: x, cost });
            costs.push(cost);
        }
        csa_accept(&mut state, &candidates, &costs, &mut rng);
        state.iteration = k;
        csa_update_temperatures(&mut state, config);
    }
    Ok(CsaOutcome { best: state.best, best_cost: state.best_cost, history })
}

fn sanitize(cost: f64) -> f64 {
    if cost.is_finite() {
        cost
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn ok(f: impl Fn(i64) -> f64) -> impl FnMut(i64) -> Result<f64, Infallible> {
        move |x| Ok(f(x))
    }

    #[test]
    fn init_is_seeded_and_in_range() {
        let cfg = CsaConfig::standard(11);
        let b = SearchBounds::new(50, 5000).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            csa_init(&cfg, b, ok(|x| x as f64), &mut rng, &mut Vec::new()).unwrap()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        assert_eq!(a.current.len(), 4);
        assert!(a.current.iter().all(|&x| b.contains(x)));
        assert_eq!(a.t_gen, 100.0);
        assert_eq!(a.t_ac, 0.9);
    }

    #[test]
    fn singleton_bounds() {
        let cfg = CsaConfig::standard(1);
        let b = SearchBounds::new(7, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = csa_init(&cfg, b, ok(|_| 1.0), &mut rng, &mut Vec::new()).unwrap();
        assert!(s.current.iter().all(|&x| x == 7));
        assert_eq!(b.reflect(-1_000_000), 7);
    }

    #[test]
    fn reflection() {
        let b = SearchBounds::new(0, 10).unwrap();
        assert_eq!(b.reflect(12), 8);
        assert_eq!(b.reflect(-3), 3);
        assert_eq!(b.reflect(20), 0);
        assert_eq!(b.reflect(21), 1);
        assert!(b.contains(b.reflect(i64::MAX)));
        assert!(b.contains(b.reflect(i64::MIN)));
    }

    #[test]
    fn tiny_generation_temperature_stays_put() {
        let b = SearchBounds::new(0, 1000).unwrap();
        let state = CsaState {
            current: vec![10, 500, 990],
            current_cost: vec![1.0; 3],
            best: 10,
            best_cost: 1.0,
            t_gen: 1e-9,
            t_ac: 1.0,
            iteration: 0,
            acceptance: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(csa_generate(&state, b, &mut rng), state.current);
        }
    }

    #[test]
    fn coupling_symmetry() {
        let a = coupled_acceptance(&[3.0, 3.0], 1.0);
        assert_eq!(a, vec![0.5, 0.5]);
        let a = coupled_acceptance(&[2.0; 4], 0.9);
        assert!(a.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        // Non-finite costs drop out.
        let a = coupled_acceptance(&[1.0, f64::INFINITY], 1.0);
        assert_eq!(a, vec![1.0, 0.0]);
    }

    #[test]
    fn better_candidate_always_accepted_and_nan_never() {
        let mut state = CsaState {
            current: vec![1, 2],
            current_cost: vec![5.0, 5.0],
            best: 1,
            best_cost: 5.0,
            t_gen: 1.0,
            t_ac: 1e-12,
            iteration: 0,
            acceptance: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        csa_accept(&mut state, &[3, 4], &[4.0, f64::NAN], &mut rng);
        assert_eq!(state.current, vec![3, 2]);
        assert_eq!(state.best, 3);
        assert_eq!(state.best_cost, 4.0);
    }

    #[test]
    fn temperature_schedule() {
        let cfg = CsaConfig::standard(0);
        let mut state = CsaState {
            current: vec![0; 4],
            current_cost: vec![0.0; 4],
            best: 0,
            best_cost: 0.0,
            t_gen: 100.0,
            t_ac: 0.9,
            iteration: 1,
            acceptance: vec![0.25; 4],
        };
        csa_update_temperatures(&mut state, &cfg);
        assert_eq!(state.t_gen, 100.0);
        // zero variance is below target: cool
        assert!((state.t_ac - 0.9 * 0.95).abs() < 1e-15);
        state.iteration = 40;
        state.acceptance = vec![1.0, 0.0, 0.0, 0.0];
        let before = state.t_ac;
        csa_update_temperatures(&mut state, &cfg);
        assert_eq!(state.t_gen, 2.5);
        assert!((state.t_ac - before * 1.05).abs() < 1e-15);
    }

    #[test]
    fn variance_at_target_heats() {
        let mut cfg = CsaConfig::standard(0);
        let acceptance = vec![0.5, 0.5, 0.0, 0.0];
        cfg.variance_target = acceptance_variance(&acceptance);
        let mut state = CsaState {
            current: vec![0; 4],
            current_cost: vec![0.0; 4],
            best: 0,
            best_cost: 0.0,
            t_gen: 1.0,
            t_ac: 1.0,
            iteration: 3,
            acceptance,
        };
        csa_update_temperatures(&mut state, &cfg);
        assert_eq!(state.t_ac, 1.05);
    }

    #[test]
    fn run_budget_and_flat_landscape() {
        let cfg = CsaConfig::standard(9);
        let b = SearchBounds::new(0, 100).unwrap();
        let mut calls = 0;
        let out = csa_run(&cfg, b, |_| {
            calls += 1;
            Ok::<_, Infallible>(3.5)
        })
        .unwrap();
        assert_eq!(calls, 164);
        assert_eq!(out.history.len(), 164);
        assert_eq!(out.best_cost, 3.5);
    }

    #[test]
    fn singleton_run() {
        let cfg = CsaConfig::standard(2);
        let out = csa_run(&cfg, SearchBounds::new(50, 50).unwrap(), ok(|x| (x * x) as f64)).unwrap();
        assert_eq!(out.best, 50);
        assert_eq!(out.history.len(), 164);
        assert!(out.history.iter().all(|e| e.solution == 50));
    }

    #[derive(Debug, thiserror::Error)]
    #[error("nope")]
    struct Nope;

    #[test]
    fn cost_failure_names_solution() {
        let cfg = CsaConfig::standard(2);
        let err = csa_run(&cfg, SearchBounds::new(5, 5).unwrap(), |_| Err::<f64, _>(Nope)).unwrap_err();
        assert!(matches!(err, CsaError::Cost { solution: 5, .. }));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = CsaConfig::standard(0);
        cfg.t0_ac = 0.0;
        let err = csa_run(&cfg, SearchBounds::new(0, 1).unwrap(), ok(|_| 0.0)).unwrap_err();
        assert!(matches!(err, CsaError::Config(_)));
    }
}
