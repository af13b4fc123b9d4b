//! Binomial checkpointing for reversing a time loop under a fixed snapshot
//! budget.
//!
//! Conventions: forward state `t` is the state before time step `t` runs,
//! state 0 is the initial condition. `Reverse(t)` processes the adjoint of
//! step `t` and needs forward state `t` to be current. The initial state
//! occupies one of the snapshot slots. Plans are computed eagerly and kept
//! as explicit action lists.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RevolveError<E = std::convert::Infallible>
where
    E: std::error::Error + 'static,
{
    #[error("cannot reverse without snapshots")]
    NoSnapshots,
    #[error("nothing to reverse: zero steps")]
    ZeroSteps,
    #[error("plan needs {needed} snapshot slots but the store holds {available}")]
    Capacity { needed: usize, available: usize },
    #[error("restore from empty slot {0}")]
    EmptySlot(usize),
    #[error("action `{action}` expects forward state {expected}, current state is {found}")]
    StepMismatch { action: Action, expected: usize, found: usize },
    #[error("reverse order violated: expected step {expected}, plan reverses {found}")]
    ReverseOrder { expected: usize, found: usize },
    #[error("cannot parse plan line `{0}`")]
    Parse(String),
    #[error("step callback failed")]
    Callback(#[source] E),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Run forward steps `from..to`.
    Advance { from: usize, to: usize },
    /// Copy the current state (which is forward state `step`) into `slot`.
    Store { slot: usize, step: usize },
    /// Make the state held in `slot` current.
    Restore { slot: usize },
    /// Run the adjoint of step `step`; the current state must be `step`.
    Reverse { step: usize },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Action::Advance { from, to } => write!(f, "advance {from} {to}"),
            Action::Store { slot, step } => write!(f, "store {slot} {step}"),
            Action::Restore { slot } => write!(f, "restore {slot}"),
            Action::Reverse { step } => write!(f, "reverse {step}"),
        }
    }
}

impl FromStr for Action {
    type Err = RevolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RevolveError::Parse(s.to_string());
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        match (parts.first().copied(), parts.len()) {
            (Some("advance"), 3) => Ok(Action::Advance { from: num(1)?, to: num(2)? }),
            (Some("store"), 3) => Ok(Action::Store { slot: num(1)?, step: num(2)? }),
            (Some("restore"), 2) => Ok(Action::Restore { slot: num(1)? }),
            (Some("reverse"), 2) => Ok(Action::Reverse { step: num(1)? }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointPlan {
    pub n_steps: usize,
    pub n_snapshots: usize,
    pub actions: Vec<Action>,
}

impl CheckpointPlan {
    /// Total forward steps executed by the plan.
    pub fn total_advance(&self) -> usize {
        self.actions
            .iter()
            .map(|a| match a {
                Action::Advance { from, to } => to - from,
                _ => 0,
            })
            .sum()
    }

    /// Forward steps beyond the single sweep up to state `n_steps - 1`.
    pub fn recomputation(&self) -> usize {
        self.total_advance() - (self.n_steps - 1)
    }

    /// Index of the first `Reverse` action; everything before it is the
    /// initial forward sweep (advances and stores only).
    pub fn first_reverse(&self) -> usize {
        self.actions.iter().position(|a| matches!(a, Action::Reverse { .. })).unwrap_or(self.actions.len())
    }

    /// `(slot, step)` pairs stored during the initial forward sweep.
    pub fn sweep_stores(&self) -> Vec<(usize, usize)> {
        self.actions[..self.first_reverse()]
            .iter()
            .filter_map(|a| match *a {
                Action::Store { slot, step } => Some((slot, step)),
                _ => None,
            })
            .collect()
    }

    /// Highest slot index used plus one.
    pub fn slots_used(&self) -> usize {
        self.actions
            .iter()
            .filter_map(|a| match *a {
                Action::Store { slot, .. } | Action::Restore { slot } => Some(slot + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// One action per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            out.push_str(&a.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(n_steps: usize, n_snapshots: usize, text: &str) -> Result<Self, RevolveError> {
        let actions = text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
        Ok(Self { n_steps, n_snapshots, actions })
    }

    /// Dry-runs the plan on step counters and checks every invariant.
    pub fn validate(&self) -> Result<(), RevolveError> {
        let mut store = SnapshotStore::new(self.n_snapshots);
        let mut current = 0usize;
        let mut next_reverse = self.n_steps;
        replay(
            self,
            &mut store,
            &mut current,
            |s, _| {
                *s += 1;
                Ok(())
            },
            |t, _| {
                if t + 1 != next_reverse {
                    return Err(RevolveError::ReverseOrder { expected: next_reverse.wrapping_sub(1), found: t });
                }
                next_reverse = t;
                Ok(())
            },
        )
        .map_err(|e| match e {
            RevolveError::Callback(inner) => inner,
            RevolveError::NoSnapshots => RevolveError::NoSnapshots,
            RevolveError::ZeroSteps => RevolveError::ZeroSteps,
            RevolveError::Capacity { needed, available } => RevolveError::Capacity { needed, available },
            RevolveError::EmptySlot(s) => RevolveError::EmptySlot(s),
            RevolveError::StepMismatch { action, expected, found } => RevolveError::StepMismatch { action, expected, found },
            RevolveError::ReverseOrder { expected, found } => RevolveError::ReverseOrder { expected, found },
            RevolveError::Parse(s) => RevolveError::Parse(s),
        })?;
        if next_reverse != 0 {
            return Err(RevolveError::ReverseOrder { expected: next_reverse - 1, found: usize::MAX });
        }
        Ok(())
    }
}

/// Default snapshot budget: `ceil(log2(nt)) + 2`.
pub fn default_snapshots(nt: usize) -> usize {
    let log = if nt <= 1 { 0 } else { usize::BITS - (nt - 1).leading_zeros() } as usize;
    log + 2
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut r: u128 = 1;
    for i in 1..=k as u128 {
        r = r.saturating_mul(n as u128 - k as u128 + i) / i;
    }
    r
}

/// Minimal number of forward steps to reverse `n_steps` steps with
/// `n_snapshots` slots (initial state included): with `r` the smallest
/// integer such that `C(s + r, s) >= n`, the cost is `r n - C(s + r, s + 1)`.
pub fn optimal_advance_cost(n_steps: usize, n_snapshots: usize) -> Option<usize> {
    if n_steps <= 1 {
        return Some(0);
    }
    if n_snapshots == 0 {
        return None;
    }
    let (n, s) = (n_steps as u128, n_snapshots as u64);
    let mut r = 0u64;
    while binomial(s + r, s) < n {
        r += 1;
    }
    let cost = r as u128 * n - binomial(s + r, s + 1);
    Some(cost as usize)
}

/// Builds an optimal plan for `n_steps` steps and `n_snapshots` slots.
pub fn plan(n_steps: usize, n_snapshots: usize) -> Result<CheckpointPlan, RevolveError> {
    if n_steps == 0 {
        return Err(RevolveError::ZeroSteps);
    }
    if n_snapshots == 0 {
        if n_steps > 1 {
            return Err(RevolveError::NoSnapshots);
        }
        return Ok(CheckpointPlan { n_steps, n_snapshots, actions: vec![Action::Reverse { step: 0 }] });
    }
    let mut actions = vec![Action::Store { slot: 0, step: 0 }];
    let mut free: Vec<usize> = (1..n_snapshots).rev().collect();
    emit(&mut actions, 0, n_steps, 0, &mut free);
    Ok(CheckpointPlan { n_steps, n_snapshots, actions })
}

/// Cost of reversing `len` steps from a stored base with `free` extra slots.
fn segment_cost(len: usize, free: usize) -> usize {
    optimal_advance_cost(len, free + 1).expect("at least the base slot")
}

/// Emits actions reversing steps `base..base + len`. On entry forward state
/// `base` is current and held in `base_slot`.
fn emit(actions: &mut Vec<Action>, base: usize, len: usize, base_slot: usize, free: &mut Vec<usize>) {
    if len == 1 {
        actions.push(Action::Reverse { step: base });
        return;
    }
    if free.is_empty() {
        for t in (0..len).rev() {
            if t + 1 < len {
                actions.push(Action::Restore { slot: base_slot });
            }
            if t > 0 {
                actions.push(Action::Advance { from: base, to: base + t });
            }
            actions.push(Action::Reverse { step: base + t });
        }
        return;
    }
    let c = free.len();
    let split = (1..len)
        .min_by_key(|&j| j + segment_cost(len - j, c - 1) + segment_cost(j, c))
        .expect("len >= 2");
    actions.push(Action::Advance { from: base, to: base + split });
    if len - split == 1 {
        actions.push(Action::Reverse { step: base + split });
    } else {
        let slot = free.pop().expect("checked non-empty");
        actions.push(Action::Store { slot, step: base + split });
        emit(actions, base + split, len - split, slot, free);
        free.push(slot);
    }
    actions.push(Action::Restore { slot: base_slot });
    emit(actions, base, split, base_slot, free);
}

/// Fixed-capacity snapshot slots, each holding `(step, state)`.
#[derive(Debug, Clone)]
pub struct SnapshotStore<S> {
    slots: Vec<Option<(usize, S)>>,
}

impl<S: Clone> SnapshotStore<S> {
    pub fn new(capacity: usize) -> Self {
        Self { slots: (0..capacity).map(|_| None).collect() }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Copies `state` into `slot`, reusing the slot's allocation.
    pub fn put(&mut self, slot: usize, step: usize, state: &S) {
        match &mut self.slots[slot] {
            Some((s, held)) => {
                *s = step;
                held.clone_from(state);
            }
            empty => *empty = Some((step, state.clone())),
        }
    }

    pub fn get(&self, slot: usize) -> Option<(usize, &S)> {
        self.slots.get(slot).and_then(|s| s.as_ref()).map(|(t, s)| (*t, s))
    }
}

/// Executes a whole plan from forward state 0 (`current`).
/// `advance(state, t)` runs step `t` in place; `reverse(t, state)` receives
/// forward state `t`.
pub fn replay<S, E, A, R>(
    plan: &CheckpointPlan,
    store: &mut SnapshotStore<S>,
    current: &mut S,
    advance: A,
    reverse: R,
) -> Result<(), RevolveError<E>>
where
    S: Clone,
    E: std::error::Error + 'static,
    A: FnMut(&mut S, usize) -> Result<(), E>,
    R: FnMut(usize, &S) -> Result<(), E>,
{
    replay_from(plan, 0, 0, store, current, advance, reverse)
}

/// Executes `plan.actions[start..]` with `current` holding forward state
/// `current_step`. Used to continue after a forward sweep run elsewhere.
pub fn replay_from<S, E, A, R>(
    plan: &CheckpointPlan,
    start: usize,
    current_step: usize,
    store: &mut SnapshotStore<S>,
    current: &mut S,
    mut advance: A,
    mut reverse: R,
) -> Result<(), RevolveError<E>>
where
    S: Clone,
    E: std::error::Error + 'static,
    A: FnMut(&mut S, usize) -> Result<(), E>,
    R: FnMut(usize, &S) -> Result<(), E>,
{
    let needed = plan.slots_used();
    if needed > store.capacity() {
        return Err(RevolveError::Capacity { needed, available: store.capacity() });
    }
    let mut step = current_step;
    for &action in &plan.actions[start..] {
        match action {
            Action::Advance { from, to } => {
                if from != step {
                    return Err(RevolveError::StepMismatch { action, expected: from, found: step });
                }
                for t in from..to {
                    advance(current, t).map_err(RevolveError::Callback)?;
                }
                step = to;
            }
            Action::Store { slot, step: s } => {
                if s != step {
                    return Err(RevolveError::StepMismatch { action, expected: s, found: step });
                }
                store.put(slot, s, current);
            }
            Action::Restore { slot } => {
                let (s, held) = store.get(slot).ok_or(RevolveError::EmptySlot(slot))?;
                current.clone_from(held);
                step = s;
            }
            Action::Reverse { step: s } => {
                if s != step {
                    return Err(RevolveError::StepMismatch { action, expected: s, found: step });
                }
                reverse(s, current).map_err(RevolveError::Callback)?;
            }
        }
    }
    Ok(())
}
