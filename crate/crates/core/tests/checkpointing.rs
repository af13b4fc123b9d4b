mod common;

use std::convert::Infallible;

use autochunk::revolve::{optimal_advance_cost, plan, replay, Action, SnapshotStore};
use autochunk::sched::{SchedulerSpec, WorkerPool};
use autochunk::wave::{Propagator, Wavefield};

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

#[test]
fn plans_match_dynamic_program() {
    let dp = dp_table(64, 7);
    for n in 1..=64 {
        for s in 1..=8 {
            let p = plan(n, s).unwrap();
            p.validate().unwrap();
            let extra = p.total_advance() - (n - 1);
            assert_eq!(p.total_advance(), dp[n][s - 1], "n={n} s={s}");
            assert_eq!(p.recomputation(), extra);
            assert_eq!(optimal_advance_cost(n, s), Some(dp[n][s - 1]));
            if s >= n {
                assert_eq!(p.recomputation(), 0);
            }
        }
    }
}

#[test]
fn plans_are_valid_up_to_256_steps() {
    for n in 1..=256 {
        for s in 1..=10 {
            let p = plan(n, s).unwrap();
            p.validate().unwrap_or_else(|e| panic!("n={n} s={s}: {e}"));
            assert!(p.slots_used() <= s);
            let reverses: Vec<usize> = p
                .actions
                .iter()
                .filter_map(|a| match a {
                    Action::Reverse { step } => Some(*step),
                    _ => None,
                })
                .collect();
            assert_eq!(reverses, (0..n).rev().collect::<Vec<_>>());
        }
    }
}

#[test]
fn ten_steps_three_slots() {
    let p = plan(10, 3).unwrap();
    assert_eq!(p.total_advance(), dp_table(10, 2)[10][2]);
    println!("{}", p.dump());
}

#[test]
fn replayed_wavefields_match_full_storage() {
    let pool = WorkerPool::with_threads(2).unwrap();
    let cfg = common::sim(50, 20.0, 8);
    let m = common::sphere(32, 2200.0, 3000.0);
    let prop = Propagator::new(&m, &cfg).unwrap();
    let shot = common::shot(m.dims(), [4, 16, 16], &cfg, 4);
    let spec = SchedulerSpec::dynamic(17).unwrap();

    let mut reference: Vec<Wavefield> = Vec::with_capacity(cfg.nt);
    let mut f = prop.zero_field();
    for t in 0..cfg.nt {
        reference.push(f.clone());
        prop.advance(&mut f, &shot, t, &SchedulerSpec::static_default(), &pool).unwrap();
    }

    for s in [2, 3, 5, 8] {
        let p = plan(cfg.nt, s).unwrap();
        let mut store = SnapshotStore::new(s);
        let mut current = prop.zero_field();
        let mut seen = 0;
        replay(
            &p,
            &mut store,
            &mut current,
            |field, t| {
                prop.advance(field, &shot, t, &spec, &pool).unwrap();
                Ok::<_, Infallible>(())
            },
            |t, field| {
                assert!(*field == reference[t], "state {t} differs with {s} slots");
                seen += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, cfg.nt);
    }
}
