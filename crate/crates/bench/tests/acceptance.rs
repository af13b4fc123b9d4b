//! Acceptance checks, one line per criterion. Pass substrings as arguments
//! to run a subset: `cargo test -p autochunk-bench --test acceptance -- csa`.

use std::convert::Infallible;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Instant;

use autochunk::csa::{csa_run, CsaConfig, SearchBounds};
use autochunk::fwi::{fwi_run, model_observed, objective, residual, shot_gradient, FwiConfig, Phase, ScheduleLog, SchedulerChoice};
use autochunk::revolve::{self, optimal_advance_cost, replay, Action, SnapshotStore};
use autochunk::sched::{competitor_chunk, IterRange, ScheduleKind, SchedulerSpec, WorkerPool};
use autochunk::tuner::{autotune_chunk, cost_first_step, upper_chunk, FirstStepContext, TuningPolicy};
use autochunk::wave::{make_gaussian_sphere_model, ricker, surface_receivers, Dims3, Propagator, Seismogram, Shot, SimConfig, VelocityModel, Wavefield};
use autochunk_bench::config::{FwiSection, ModelSection, SimSection};
use autochunk_bench::report::{accounting_gap, median, overhead_fraction};
use autochunk_bench::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sim(nt: usize, f_peak: f64, boundary_width: usize) -> SimConfig {
    SimConfig { nt, dt: 1e-3, f_peak, boundary_width, ..SimConfig::default() }
}

fn sphere(n: usize, v_bg: f64, v_peak: f64) -> VelocityModel {
    make_gaussian_sphere_model(Dims3::cube(n), 10.0, v_bg, v_peak, [0.5; 3], 0.15).unwrap()
}

fn shot(dims: Dims3, source: [usize; 3], cfg: &SimConfig, every: usize) -> Shot {
    Shot { source, receivers: surface_receivers(dims, every), wavelet: ricker(cfg.f_peak, cfg.dt, cfg.nt) }
}

fn machine_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn exactly_once() -> Result<String, String> {
    let pools: Vec<WorkerPool> = (1..=8).map(|t| WorkerPool::with_threads(t).unwrap()).collect();
    let kinds = [ScheduleKind::Static, ScheduleKind::Dynamic, ScheduleKind::Guided];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 1200;
    for case in 0..cases {
        let kind = kinds[rng.gen_range(0..3)];
        let chunk = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(1..=300)) };
        let pool = &pools[rng.gen_range(0..8)];
        let start = rng.gen_range(0..100);
        let len = rng.gen_range(0..3000);
        let range = IterRange::new(start, start + len).unwrap();
        let spec = SchedulerSpec::new(kind, chunk).unwrap();
        let hits: Vec<AtomicU32> = (0..len).map(|_| AtomicU32::new(0)).collect();
        pool.parallel_for(range, &spec, |i| {
            hits[i - start].fetch_add(1, Ordering::Relaxed);
        })
        .map_err(|e| e.to_string())?;
        if let Some(i) = hits.iter().position(|h| h.load(Ordering::Relaxed) != 1) {
            return Err(format!("case {case}: {spec} on {} threads, [{start}, {}): index {} ran {} times", pool.n_threads(), start + len, start + i, hits[i].load(Ordering::Relaxed)));
        }
    }
    Ok(format!("{cases} random cases"))
}

/// Largest `f` with `f * 1.618 <= log2(N / P)` by counting in natural
/// logarithms, then `N` halved `f` times and split over `2P`.
fn competitor_oracle(n: usize, p: usize) -> usize {
    let budget = (n as f64).ln() - (p as f64).ln();
    let mut f = 0u32;
    while (f + 1) as f64 * 1.618 * std::f64::consts::LN_2 <= budget {
        f += 1;
    }
    let mut chunk = n;
    for _ in 0..f {
        chunk /= 2;
    }
    (chunk / (2 * p)).max(1)
}

fn competitor_grid() -> Result<String, String> {
    let mut ns: Vec<usize> = (1..=40).collect();
    for k in 6..=26 {
        ns.extend([(1usize << k) - 1, 1 << k, (1 << k) + 1, 3 << (k - 2)]);
    }
    ns.extend([1000, 10_000, 100_000, 160_000, 1_000_000, 10_000_000]);
    let ps: Vec<usize> = (1..=16).chain([24, 32, 48, 64, 96, 128, 256]).collect();
    let mut pairs = 0;
    for &n in &ns {
        for &p in &ps {
            if n < p {
                ensure(competitor_chunk(n, p).is_err(), || format!("N={n} < P={p} accepted"))?;
                continue;
            }
            let got = competitor_chunk(n, p).map_err(|e| e.to_string())?;
            ensure(got == competitor_oracle(n, p), || format!("N={n} P={p}: {got} vs oracle {}", competitor_oracle(n, p)))?;
            pairs += 1;
        }
    }
    ensure(pairs >= 500, || format!("only {pairs} pairs"))?;
    Ok(format!("{pairs} (N, P) pairs"))
}

fn scheduler_transparency() -> Result<String, String> {
    let cfg = sim(100, 20.0, 8);
    let m = sphere(32, 2200.0, 3000.0);
    let prop = Propagator::new(&m, &cfg).map_err(|e| e.to_string())?;
    let s = shot(m.dims(), [4, 16, 16], &cfg, 4);
    let mut reference: Option<Seismogram> = None;
    let mut runs = 0;
    for threads in [1, 8] {
        let pool = WorkerPool::with_threads(threads).unwrap();
        let mut ctx = FirstStepContext::new(&prop, &pool, &prop.zero_field());
        let tuned = autotune_chunk(&mut ctx, &TuningPolicy::with_seed(threads as u64)).map_err(|e| e.to_string())?.chunk;
        for kind in [ScheduleKind::Static, ScheduleKind::Guided, ScheduleKind::Dynamic] {
            for chunk in [Some(1), Some(50), None, Some(tuned)] {
                let spec = SchedulerSpec::new(kind, chunk).unwrap();
                let out = prop.forward_modeling(&s, cfg.nt, &spec, &pool, None).map_err(|e| e.to_string())?.seismogram;
                runs += 1;
                match &reference {
                    None => reference = Some(out),
                    Some(r) => {
                        let same = r.data.len() == out.data.len() && r.data.iter().zip(&out.data).all(|(a, b)| a.to_bits() == b.to_bits());
                        ensure(same, || format!("{spec} on {threads} threads differs"))?;
                    }
                }
            }
        }
    }
    Ok(format!("{runs} runs bit-identical"))
}

/// Minimal forward steps to reverse `l` steps from a stored base state with
/// `c` further free slots, by exhaustive recursion over the first split.
fn dp_table(max_l: usize, max_c: usize) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; max_c + 1]; max_l + 1];
    for l in 2..=max_l {
        t[l][0] = l * (l - 1) / 2;
        for c in 1..=max_c {
            t[l][c] = (1..l).map(|j| j + t[l - j][c - 1] + t[j][c]).min().unwrap();
        }
    }
    t
}

fn revolve_optimality() -> Result<String, String> {
    let dp = dp_table(64, 7);
    for n in 1..=64 {
        for s in 1..=8 {
            let p = revolve::plan(n, s).map_err(|e| e.to_string())?;
            ensure(p.total_advance() == dp[n][s - 1], || format!("n={n} s={s}: {} vs {}", p.total_advance(), dp[n][s - 1]))?;
            ensure(optimal_advance_cost(n, s) == Some(dp[n][s - 1]), || format!("closed form n={n} s={s}"))?;
        }
    }
    let mut plans = 0;
    for n in 1..=256 {
        for s in 1..=10 {
            let p = revolve::plan(n, s).map_err(|e| e.to_string())?;
            p.validate().map_err(|e| format!("n={n} s={s}: {e}"))?;
            ensure(p.slots_used() <= s, || format!("n={n} s={s}: {} slots", p.slots_used()))?;
            let reverses: Vec<usize> = p
                .actions
                .iter()
                .filter_map(|a| match a {
                    Action::Reverse { step } => Some(*step),
                    _ => None,
                })
                .collect();
            ensure(reverses.iter().copied().eq((0..n).rev()), || format!("n={n} s={s}: reverse order"))?;
            plans += 1;
        }
    }
    Ok(format!("optimal for n<=64, s<=8; {plans} plans valid up to n=256"))
}

fn replay_fidelity() -> Result<String, String> {
    let pool = WorkerPool::with_threads(2).unwrap();
    let cfg = sim(50, 20.0, 8);
    let m = sphere(32, 2200.0, 3000.0);
    let prop = Propagator::new(&m, &cfg).map_err(|e| e.to_string())?;
    let s = shot(m.dims(), [4, 16, 16], &cfg, 4);
    let mut reference: Vec<Wavefield> = Vec::with_capacity(cfg.nt);
    let mut f = prop.zero_field();
    for t in 0..cfg.nt {
        reference.push(f.clone());
        prop.advance(&mut f, &s, t, &SchedulerSpec::static_default(), &pool).unwrap();
    }
    let spec = SchedulerSpec::dynamic(17).unwrap();
    for slots in [2, 3, 5, 8, revolve::default_snapshots(cfg.nt)] {
        let p = revolve::plan(cfg.nt, slots).map_err(|e| e.to_string())?;
        let mut store = SnapshotStore::new(slots);
        let mut current = prop.zero_field();
        let mut bad = Vec::new();
        let mut seen = 0;
        replay(
            &p,
            &mut store,
            &mut current,
            |field, t| {
                prop.advance(field, &s, t, &spec, &pool).unwrap();
                Ok::<_, Infallible>(())
            },
            |t, field| {
                if *field != reference[t] {
                    bad.push(t);
                }
                seen += 1;
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(bad.is_empty() && seen == cfg.nt, || format!("{slots} slots: states {bad:?} differ, {seen} reversed"))?;
    }
    Ok("32^3, 50 steps, 2/3/5/8/8 slots".into())
}

fn gradient_check() -> Result<String, String> {
    let pool = WorkerPool::with_threads(machine_threads()).unwrap();
    let cfg = sim(200, 25.0, 10);
    let truth = sphere(24, 2500.0, 2900.0);
    let start = sphere(24, 2500.0, 2500.0);
    let dims = truth.dims();
    let s = shot(dims, [3, 12, 12], &cfg, 3);
    let obs = model_observed(&truth, std::slice::from_ref(&s), &cfg, &pool).map_err(|e| e.to_string())?.remove(0);
    let misfit = |model: &VelocityModel| {
        let prop = Propagator::new(model, &cfg).unwrap();
        let out = prop.forward_modeling(&s, cfg.nt, &SchedulerSpec::static_default(), &pool, None).unwrap();
        objective(&[residual(&out.seismogram, &obs).unwrap()])
    };
    let prop = Propagator::new(&start, &cfg).map_err(|e| e.to_string())?;
    let plan = revolve::plan(cfg.nt, revolve::default_snapshots(cfg.nt)).map_err(|e| e.to_string())?;
    let g = shot_gradient(&prop, &s, &obs, cfg.nt, &SchedulerSpec::dynamic(7).unwrap(), &pool, &plan, &mut ScheduleLog::default())
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = 0.5;
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let p: Vec<f64> = (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted = |a: f64| VelocityModel::new(dims, start.dx(), start.values().iter().zip(&p).map(|(v, d)| v + a * d).collect()).unwrap();
        let fd = (misfit(&shifted(eps)) - misfit(&shifted(-eps))) / (2.0 * eps);
        let adj: f64 = g.gradient.iter().zip(&p).map(|(a, b)| a * b).sum();
        let rel = (fd - adj).abs() / fd.abs().max(adj.abs());
        ensure(rel <= 1e-3, || format!("direction {k}: fd {fd:e} adjoint {adj:e} rel {rel:e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("3 directions, worst relative error {worst:.1e}"))
}

fn csa_convergence() -> Result<String, String> {
    let bounds = SearchBounds::new(0, 100).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let cfg = CsaConfig::standard(seed);
        let mut calls = 0;
        let out = csa_run(&cfg, bounds, |x| {
            calls += 1;
            Ok::<_, Infallible>(((x - 7) * (x - 7)) as f64)
        })
        .map_err(|e| e.to_string())?;
        ensure(calls == 164 && out.history.len() == 164, || format!("seed {seed}: {calls} evaluations"))?;
        if (out.best - 7).abs() <= 1 {
            hits += 1;
        }
    }
    ensure(hits >= 90, || format!("{hits}/100 seeds within 1 of the optimum"))?;
    Ok(format!("{hits}/100 seeds within 1, 164 evaluations each"))
}

fn tuning_protocol() -> Result<String, String> {
    let pool = WorkerPool::with_threads(2).unwrap();
    let cfg = sim(60, 25.0, 8);
    let truth = sphere(16, 2400.0, 2800.0);
    let start = VelocityModel::homogeneous(truth.dims(), 10.0, 2400.0).unwrap();
    let n_lines = Propagator::new(&start, &cfg).map_err(|e| e.to_string())?.n_lines();
    let hi = upper_chunk(n_lines, pool.n_threads());
    let mut runs = 0;
    for (n_shots, n_fwi) in [(1, 1), (3, 1), (1, 3), (3, 2)] {
        let shots: Vec<Shot> = (0..n_shots).map(|k| shot(truth.dims(), [2, 4 + 3 * k, 8], &cfg, 3)).collect();
        let fc = FwiConfig::new(n_fwi, shots, cfg.clone());
        let obs = model_observed(&truth, &fc.shots, &fc.sim, &pool).map_err(|e| e.to_string())?;
        let out = fwi_run(&start, &obs, &fc, SchedulerChoice::Tuned, &TuningPolicy::with_seed(runs), &pool).map_err(|e| e.to_string())?;
        let tag = format!("{n_shots} shots, {n_fwi} iterations");
        ensure(out.timing.tuner_invocations == 1, || format!("{tag}: {} tuner invocations", out.timing.tuner_invocations))?;
        let t = out.tuning.as_ref().ok_or_else(|| format!("{tag}: no tuning result"))?;
        ensure(t.evaluations.iter().all(|e| (50..=hi).contains(&e.chunk)), || format!("{tag}: probe outside [50, {hi}]"))?;
        ensure(out.log.calls(Phase::Tuning) == 164, || format!("{tag}: {} probes", out.log.calls(Phase::Tuning)))?;
        let spec = SchedulerSpec::dynamic(t.chunk).unwrap();
        for phase in [Phase::Forward, Phase::Adjoint, Phase::Recompute] {
            ensure(out.log.specs(phase) == vec![spec], || format!("{tag}: {phase:?} used {:?}", out.log.specs(phase)))?;
        }
        ensure(out.log.calls(Phase::Recompute) > 0, || format!("{tag}: no recompute loops"))?;
        runs += 1;
    }
    Ok(format!("{runs} runs, one tuner call each, probes in [50, {hi}]"))
}

fn competitiveness() -> Result<String, String> {
    let threads = machine_threads();
    let pool = WorkerPool::with_threads(threads).unwrap();
    let cfg = sim(10, 15.0, 15);
    let m = sphere(40, 2500.0, 3000.0);
    let prop = Propagator::new(&m, &cfg).map_err(|e| e.to_string())?;
    let mut ctx = FirstStepContext::new(&prop, &pool, &prop.zero_field());
    let hi = upper_chunk(prop.n_lines(), threads);
    let lo = 50usize;
    let sweep: Vec<usize> = {
        let mut v: Vec<usize> = (0..20).map(|k| (lo as f64 * (hi as f64 / lo as f64).powf(k as f64 / 19.0)).round() as usize).collect();
        v.dedup();
        v
    };
    // Every round times the tuned chunk and the whole sweep back to back, so
    // slow drift of the machine cancels in the per-round ratios.
    let rounds = 15;
    let mut good = 0;
    let mut ratios = Vec::new();
    for trial in 0..10u64 {
        let tuned = autotune_chunk(&mut ctx, &TuningPolicy::with_seed(trial)).map_err(|e| e.to_string())?.chunk;
        let chunks: Vec<usize> = std::iter::once(tuned).chain(sweep.iter().copied()).collect();
        let mut samples = vec![Vec::with_capacity(rounds); chunks.len()];
        for _ in 0..rounds {
            for (k, &c) in chunks.iter().enumerate() {
                samples[k].push(cost_first_step(&mut ctx, c, 1).map_err(|e| e.to_string())?.seconds);
            }
        }
        // tuned time over the best sweep point, each ratio taken within one round
        let r = (1..chunks.len())
            .map(|k| {
                let paired: Vec<f64> = samples[0].iter().zip(&samples[k]).map(|(t, c)| t / c).collect();
                median(&paired).unwrap()
            })
            .fold(0.0, f64::max);
        ratios.push(r);
        if r <= 1.10 {
            good += 1;
        }
    }
    let detail = format!("{good}/10 trials within 1.10x ({threads} threads, chunks {lo}..{hi}, ratios {:.3?})", ratios);
    ensure(good >= 8, || detail.clone())?;
    Ok(detail)
}

fn fwi_scenario(n_shots: usize, dims: [usize; 3], nt: usize, n_fwi: usize) -> Scenario {
    let model = ModelSection { v_peak: 3000.0, ..ModelSection::default() };
    let sim = SimSection { nt, dt: 1e-3, f_peak: 15.0, boundary_width: 15, ..SimSection::default() };
    let fwi = FwiSection { n_fwi, mask_radius: 4, bottom_receivers: true, ..FwiSection::default() };
    Scenario::new(dims, n_shots, &model, &sim, &fwi).unwrap()
}

fn fwi_descent() -> Result<String, String> {
    let pool = WorkerPool::with_threads(machine_threads()).unwrap();
    let sc = fwi_scenario(2, [40, 40, 40], 300, 10);
    let obs = sc.observed(&pool).map_err(|e| e.to_string())?;
    let out = fwi_run(&sc.start, &obs, &sc.fwi, SchedulerChoice::Tuned, &TuningPolicy::with_seed(5), &pool).map_err(|e| e.to_string())?;
    let j = &out.objectives;
    ensure(j.windows(2).all(|w| w[1] <= w[0]), || format!("objective increased: {j:?}"))?;
    ensure(j.len() <= 11, || format!("{} objectives", j.len()))?;
    let ratio = j.last().unwrap() / j[0];
    ensure(ratio <= 0.5, || format!("final/initial = {ratio:.3} after {} iterations ({:?})", j.len() - 1, out.stop))?;
    Ok(format!("final/initial = {ratio:.3} after {} iterations, {:.0} s", j.len() - 1, out.timing.total_seconds))
}

fn overhead_accounting() -> Result<String, String> {
    let pool = WorkerPool::with_threads(machine_threads()).unwrap();
    let mut fractions = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for n_shots in [1, 2, 4, 8] {
        let sc = fwi_scenario(n_shots, [24, 32, 32], 120, 1);
        let obs = sc.observed(&pool).map_err(|e| e.to_string())?;
        let out = fwi_run(&sc.start, &obs, &sc.fwi, SchedulerChoice::Tuned, &TuningPolicy::with_seed(9), &pool).map_err(|e| e.to_string())?;
        let t = out.tuning.as_ref().ok_or("no tuning result")?;
        ensure(t.evaluations.len() == 164, || format!("{} evaluations", t.evaluations.len()))?;
        let kept: f64 = t.evaluations.iter().map(|e| e.seconds).sum();
        ensure((kept - t.measured_seconds).abs() <= 1e-12 * kept.max(1.0), || "evaluation sum differs from measured total".into())?;
        ensure(out.timing.tuning_seconds == t.tuning_wall_time, || "reported overhead differs from tuner wall time".into())?;
        let gap = accounting_gap(t);
        ensure(gap <= 0.05, || {
            format!(
                "{n_shots} shots: reported {:.4} s vs {:.4} s in timed evaluations ({:.1}% unexplained)",
                t.tuning_wall_time,
                t.measured_seconds + t.discarded_seconds + t.reset_seconds,
                100.0 * gap
            )
        })?;
        worst_gap = worst_gap.max(gap);
        fractions.push(overhead_fraction(out.timing.tuning_seconds, out.timing.total_seconds));
    }
    ensure(fractions.windows(2).all(|w| w[1] < w[0]), || format!("fractions for 1/2/4/8 shots not decreasing: {fractions:.4?}"))?;
    Ok(format!("worst gap {:.2}%, fractions {:.4?}", 100.0 * worst_gap, fractions))
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("exactly_once_scheduling", exactly_once),
        ("competitor_formula_oracle", competitor_grid),
        ("scheduler_numerical_transparency", scheduler_transparency),
        ("revolve_optimality", revolve_optimality),
        ("checkpointed_replay_fidelity", replay_fidelity),
        ("gradient_check", gradient_check),
        ("csa_convergence", csa_convergence),
        ("tuning_protocol_conformance", tuning_protocol),
        ("machine_relative_competitiveness", competitiveness),
        ("fwi_descent", fwi_descent),
        ("overhead_accounting", overhead_accounting),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
