//! What every learner exposes to the training driver, plus the shared
//! epsilon-greedy selection rule.

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, ActionSet, SystemState, Transition};
use crate::SimRng;

/// A failure that stops a training run.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("training fault at iteration {iteration}: {reason}")]
pub struct TrainingFault {
    pub iteration: u64,
    pub reason: String,
    /// Online network snapshot at the time of the fault, when there is one.
    pub snapshot: Option<Vec<u8>>,
}

impl TrainingFault {
    pub fn new(iteration: u64, reason: impl Into<String>) -> Self {
        Self { iteration, reason: reason.into(), snapshot: None }
    }
}

/// A value-based learner.
pub trait Agent {
    /// Action values for `s`, indexed by action code.
    fn values(&self, s: &SystemState) -> Vec<f64>;

    /// Consumes one transition. Returns the training loss when an update
    /// happened.
    fn learn(&mut self, tr: &Transition, rng: &mut SimRng) -> Result<Option<f64>, TrainingFault>;

    fn act(&self, s: &SystemState, feasible: ActionSet, epsilon: f64, rng: &mut SimRng) -> Action {
        epsilon_greedy(&self.values(s), feasible, epsilon, rng)
    }

    fn greedy(&self, s: &SystemState, feasible: ActionSet) -> Action {
        greedy_action(&self.values(s), feasible)
    }
}

/// Linear decay from `start` to `end` over `decay_steps` iterations, flat
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    /// `1.0 -> 0.1` over the first 80 % of `iterations`.
    pub fn for_run(iterations: u64) -> Self {
        Self { start: 1.0, end: 0.1, decay_steps: iterations * 4 / 5 }
    }

    pub fn constant(epsilon: f64) -> Self {
        Self { start: epsilon, end: epsilon, decay_steps: 0 }
    }

    /// Epsilon after `step` completed iterations.
    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Highest-valued feasible action, lowest code on ties.
pub fn greedy_action(values: &[f64], feasible: ActionSet) -> Action {
    let mut best: Option<(usize, f64)> = None;
    for code in feasible.codes() {
        let v = values[code];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((code, v));
        }
    }
    let (code, _) = best.expect("feasible set always contains Idle");
    Action::from_code(code).expect("valid code")
}

/// Uniform over `feasible` with probability `epsilon`, greedy otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], feasible: ActionSet, epsilon: f64, rng: &mut R) -> Action {
    assert!(!feasible.is_empty(), "empty feasible set");
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let k = rng.gen_range(0..feasible.len());
        return feasible.nth(k).expect("index within set");
    }
    greedy_action(values, feasible)
}
