//! Tabular Q-learning and the value-iteration oracle.
//!
//! The table is indexed by `(f, j, d, e)`; the epoch is implied by `f`, so
//! a deception slot produces two updates: one for the first-epoch deception
//! (reward 0, next state in the second epoch) and one for the second-epoch
//! action.

use thiserror::Error;

use crate::agent::{greedy_action, Agent, EpsilonSchedule, TrainingFault};
use crate::env::{Action, ActionSet, Env, EnvParams, MdpModel, StateIndexer, SystemState, Transition};
use crate::harness::{train, MetricsRow, TrainOptions};
use crate::SimRng;

pub use crate::agent::epsilon_greedy;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    indexer: StateIndexer,
    actions: usize,
    q: Vec<f64>,
}

impl QTable {
    /// All-zero table for the given parameters.
    pub fn new(params: &EnvParams) -> Self {
        let indexer = StateIndexer::new(params);
        let actions = params.action_count();
        Self { indexer, actions, q: vec![0.0; indexer.len() * actions] }
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    pub fn row(&self, s: &SystemState) -> &[f64] {
        let base = self.indexer.index(s) * self.actions;
        &self.q[base..base + self.actions]
    }

    pub fn get(&self, s: &SystemState, a: Action) -> f64 {
        self.row(s)[a.code()]
    }

    pub fn set(&mut self, s: &SystemState, a: Action, value: f64) {
        let i = self.indexer.index(s) * self.actions + a.code();
        self.q[i] = value;
    }

    /// Largest value over `feasible` actions of `s`.
    pub fn max_over(&self, s: &SystemState, feasible: ActionSet) -> f64 {
        let row = self.row(s);
        feasible.codes().map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One temporal-difference update. Returns the TD error.
pub fn q_update(table: &mut QTable, tr: &Transition, tau: f64, gamma: f64) -> f64 {
    let target = tr.reward + gamma * table.max_over(&tr.next_state, tr.next_feasible);
    let current = table.get(&tr.state, tr.action);
    let td = target - current;
    table.set(&tr.state, tr.action, current + tau * td);
    td
}

/// Learning-rate and exploration settings. The rate for the `n`-th visit of
/// a state-action pair is `tau0 * n^(-omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningSchedule {
    pub tau0: f64,
    pub omega: f64,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
}

impl LearningSchedule {
    pub fn for_run(iterations: u64) -> Self {
        Self { tau0: 0.9, omega: 0.65, epsilon: EpsilonSchedule::for_run(iterations), gamma: 0.95 }
    }

    pub fn rate(&self, visit: u64) -> f64 {
        self.tau0 * (visit.max(1) as f64).powf(-self.omega)
    }
}

/// Q-table learner with per-pair visit counts.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub table: QTable,
    pub schedule: LearningSchedule,
    visits: Vec<u64>,
}

impl QLearner {
    pub fn new(params: &EnvParams, schedule: LearningSchedule) -> Self {
        let table = QTable::new(params);
        let visits = vec![0; table.q.len()];
        Self { table, schedule, visits }
    }
}

impl Agent for QLearner {
    fn values(&self, s: &SystemState) -> Vec<f64> {
        self.table.row(s).to_vec()
    }

    fn learn(&mut self, tr: &Transition, _rng: &mut SimRng) -> Result<Option<f64>, TrainingFault> {
        let i = self.table.indexer.index(&tr.state) * self.table.actions + tr.action.code();
        self.visits[i] += 1;
        let tau = self.schedule.rate(self.visits[i]);
        let td = q_update(&mut self.table, tr, tau, self.schedule.gamma);
        Ok(Some(td * td))
    }
}

/// Runs epsilon-greedy Q-learning for `iterations` decision epochs.
pub fn train_q(env: &Env, schedule: LearningSchedule, options: &TrainOptions, seed: u64) -> Result<(QTable, Vec<MetricsRow>), TrainingFault> {
    let mut learner = QLearner::new(env.params(), schedule);
    let options = TrainOptions { epsilon: schedule.epsilon, ..options.clone() };
    let rows = train(&mut learner, env, &options, seed)?;
    Ok((learner.table, rows))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueIterationError {
    #[error("value iteration did not reach tolerance {tol} within {iterations} sweeps (last change {delta})")]
    NotConverged { tol: f64, iterations: usize, delta: f64 },
    #[error("discount must lie in [0, 1), got {0}")]
    Discount(f64),
}

/// Optimal values of a finite model.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    /// `V*` per state index (0 for excluded tuples).
    pub values: Vec<f64>,
    /// `Q*` per state index and action code; `None` where infeasible.
    pub q: Vec<Vec<Option<f64>>>,
    /// Greedy action per state index, lowest code on ties.
    pub policy: Vec<Option<Action>>,
    pub sweeps: usize,
}

impl ValueSolution {
    pub fn q_value(&self, state: usize, action: Action) -> Option<f64> {
        self.q[state].get(action.code()).copied().flatten()
    }
}

pub const MAX_SWEEPS: usize = 100_000;

fn backup(model: &MdpModel, values: &[f64], gamma: f64, state: usize) -> Vec<(Action, f64)> {
    model.rows[state]
        .iter()
        .map(|row| {
            let future: f64 = row.next.iter().map(|&(t, p)| p * values[t]).sum();
            (row.action, row.reward + gamma * future)
        })
        .collect()
}

/// Iterates the Bellman optimality operator until the sup-norm change of
/// `V` drops below `tol`.
pub fn value_iteration(model: &MdpModel, gamma: f64, tol: f64) -> Result<ValueSolution, ValueIterationError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(ValueIterationError::Discount(gamma));
    }
    let n = model.state_count();
    let mut values = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let best = backup(model, &values, gamma, s).into_iter().map(|(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
                let v = if best.is_finite() { best } else { 0.0 };
                delta = delta.max((v - values[s]).abs());
                v
            })
            .collect();
        values = next;
        if delta < tol {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(ValueIterationError::NotConverged { tol, iterations: sweeps, delta });
        }
    }

    let mut q = Vec::with_capacity(n);
    let mut policy = Vec::with_capacity(n);
    for s in 0..n {
        let mut row = vec![None; model.action_count];
        let mut dense = vec![f64::NEG_INFINITY; model.action_count];
        let mut feasible = ActionSet::empty();
        for (a, v) in backup(model, &values, gamma, s) {
            row[a.code()] = Some(v);
            dense[a.code()] = v;
            feasible.insert(a);
        }
        policy.push((!feasible.is_empty()).then(|| greedy_action(&dense, feasible)));
        q.push(row);
    }
    Ok(ValueSolution { values, q, policy, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{enumerate_model, resolve, Draws, JammerConfig, ModelRow};

    fn transition(s: SystemState, a: Action, r: f64, next: SystemState, mask: ActionSet) -> Transition {
        Transition { state: s, action: a, reward: r, next_state: next, next_feasible: mask }
    }

    #[test]
    fn update_arithmetic() {
        let params = EnvParams::default();
        let mut table = QTable::new(&params);
        let s = SystemState::slot_start(5, 5);
        let next = SystemState::slot_start(1, 1);
        table.set(&next, Action::Deceive, 10.0);
        table.set(&next, Action::Transmit, 50.0);
        let tr = transition(s, Action::Transmit, 2.0, next, ActionSet::from_codes([0, 1]));
        q_update(&mut table, &tr, 0.1, 0.95);
        // 0 + 0.1 * (2 + 0.95 * 10 - 0); the infeasible 50 is ignored.
        assert!((table.get(&s, Action::Transmit) - 1.15).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let params = EnvParams::default();
        let mut table = QTable::new(&params);
        let s = SystemState::slot_start(2, 2);
        let tr = transition(s, Action::Idle, 3.0, s, ActionSet::from_codes([0]));
        let before = table.clone();
        q_update(&mut table, &tr, 0.0, 0.95);
        assert_eq!(table, before);
    }

    #[test]
    fn expected_update_matches_brute_force_over_arrivals() {
        // From (0,0,0,1) under Idle the only randomness is the arrival and
        // ambient draws. Averaging q_update over all four outcomes, weighted
        // by their probabilities, must equal the expected TD step computed by
        // hand from the enumerated next states.
        let params = EnvParams { queue_capacity: 2, energy_capacity: 2, arrival_batch: 1, ..EnvParams::default() };
        let s = SystemState::slot_start(0, 1);
        let (tau, gamma) = (0.5, 0.9);
        let mut base = QTable::new(&params);
        base.set(&SystemState::slot_start(1, 1), Action::Idle, 4.0);
        base.set(&SystemState::slot_start(1, 2), Action::Transmit, 6.0);
        base.set(&SystemState::slot_start(0, 2), Action::Deceive, 2.0);

        let mut expected_after = 0.0;
        let mut hand = 0.0;
        for (arrival, pa) in [(false, 1.0 - params.arrival_prob), (true, params.arrival_prob)] {
            for (ambient, pe) in [(false, 1.0 - params.ambient_prob), (true, params.ambient_prob)] {
                let out = resolve(&params, &s, Action::Idle, Draws { arrival, ambient, ..Draws::default() }).unwrap();
                let mask = crate::env::feasible_actions(&params, &out.next_state, out.next_state.epoch()).unwrap();
                let mut table = base.clone();
                let tr = transition(s, Action::Idle, f64::from(out.reward), out.next_state, mask);
                q_update(&mut table, &tr, tau, gamma);
                expected_after += pa * pe * table.get(&s, Action::Idle);
                let best = match (arrival, ambient) {
                    (false, false) => 0.0,
                    (true, false) => 4.0,
                    (false, true) => 2.0,
                    (true, true) => 6.0,
                };
                hand += pa * pe * tau * gamma * best;
            }
        }
        assert!((expected_after - hand).abs() < 1e-12);
    }

    #[test]
    fn single_state_geometric_series() {
        let params = EnvParams { queue_capacity: 1, energy_capacity: 1, ..EnvParams::default() };
        let model = enumerate_model(&params, &JammerConfig::default(), 1000).unwrap();
        let mut rows = vec![Vec::new(); model.state_count()];
        rows[0] = vec![ModelRow { action: Action::Idle, reward: 1.0, next: vec![(0, 1.0)] }];
        let model = MdpModel { rows, ..model };
        let sol = value_iteration(&model, 0.9, 1e-12).unwrap();
        assert!((sol.values[0] - 10.0).abs() < 1e-9);
        assert_eq!(sol.policy[0], Some(Action::Idle));
        assert_eq!(sol.policy[1], None);
    }

    #[test]
    fn myopic_solution_is_expected_reward() {
        let params = EnvParams { queue_capacity: 2, energy_capacity: 3, ..EnvParams::default() };
        let model = enumerate_model(&params, &JammerConfig::default(), 1000).unwrap();
        let sol = value_iteration(&model, 0.0, 1e-12).unwrap();
        for (s, rows) in model.rows.iter().enumerate() {
            for row in rows {
                assert_eq!(sol.q_value(s, row.action), Some(row.reward));
            }
        }
    }

    #[test]
    fn reward_scaling_preserves_greedy_policy() {
        let params = EnvParams { queue_capacity: 3, energy_capacity: 3, ..EnvParams::default() };
        let model = enumerate_model(&params, &JammerConfig::default(), 1000).unwrap();
        let base = value_iteration(&model, 0.95, 1e-10).unwrap();
        let mut scaled = model.clone();
        for rows in &mut scaled.rows {
            for row in rows {
                row.reward *= 2.5;
            }
        }
        let scaled = value_iteration(&scaled, 0.95, 1e-10).unwrap();
        // Ties can only break differently when values are equal up to rounding.
        for s in 0..model.state_count() {
            if let (Some(a), Some(b)) = (base.policy[s], scaled.policy[s]) {
                if a != b {
                    let qa = base.q_value(s, a).unwrap();
                    let qb = base.q_value(s, b).unwrap();
                    assert!((qa - qb).abs() < 1e-8, "state {s}: {a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn bad_discount_is_rejected() {
        let model = enumerate_model(&EnvParams::default(), &JammerConfig::default(), 1000).unwrap();
        assert_eq!(value_iteration(&model, 1.0, 1e-6).unwrap_err(), ValueIterationError::Discount(1.0));
    }

    #[test]
    fn schedule_satisfies_rate_conditions() {
        let s = LearningSchedule::for_run(100);
        assert!(s.rate(1) < 1.0 && s.rate(1) >= 0.0);
        assert!(s.omega > 0.5 && s.omega <= 1.0);
        assert!(s.rate(10) < s.rate(9));
    }
}
