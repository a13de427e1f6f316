//! Experiment runner: training driver, greedy evaluation, metrics and CSV
//! output, fanned out over seeds and sweep values.

mod config;

pub use config::{
    load_config, Algo, Cell, ConfigError, ExperimentConfig, JammerSpec, Sweep, SweepParam, DEFAULT_EVAL_WINDOW,
    DEFAULT_ITERATIONS, DEFAULT_SAMPLES,
};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{Agent, EpsilonSchedule, TrainingFault};
use crate::baselines::{restrict, wd_policy, PolicyKind};
use crate::deep::{DeepAgent, DeepConfig};
use crate::env::{Action, ActionSet, Env, Epoch, SystemState, Transition};
use crate::tabular::{LearningSchedule, QLearner};
use crate::utility::{average_utilities, SlotTrace};
use crate::{seeded_rng, SimRng};

/// Generator streams derived from a run's seed.
pub mod streams {
    /// Environment randomness during training.
    pub const ENV: u64 = 0;
    /// Exploration and minibatch sampling.
    pub const AGENT: u64 = 1;
    /// Network initialisation.
    pub const INIT: u64 = 2;
    /// Evaluation rollouts; every checkpoint replays the same stream.
    pub const EVAL: u64 = 3;
}

/// Packet counts over an evaluation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowStats {
    pub slots: u64,
    pub delivered: u64,
    pub arrived: u64,
    pub dropped: u64,
}

impl WindowStats {
    pub fn avg_throughput(&self) -> f64 {
        self.delivered as f64 / self.slots as f64
    }

    pub fn packet_loss(&self) -> f64 {
        self.dropped as f64 / self.slots as f64
    }

    /// Delivered over arrived; 1 when nothing arrived.
    pub fn pdr(&self) -> f64 {
        if self.arrived == 0 {
            1.0
        } else {
            self.delivered as f64 / self.arrived as f64
        }
    }
}

pub fn compute_metrics(window: &[SlotTrace]) -> WindowStats {
    assert!(!window.is_empty(), "empty evaluation window");
    window.iter().fold(WindowStats { slots: window.len() as u64, ..Default::default() }, |mut w, t| {
        let d = t.totals();
        w.delivered += u64::from(d.delivered);
        w.arrived += u64::from(d.arrived);
        w.dropped += u64::from(d.dropped());
        w
    })
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    /// Training decision epochs completed.
    pub iteration: u64,
    pub avg_throughput: f64,
    pub packet_loss: f64,
    pub pdr: f64,
    /// Mean training loss since the previous row (0 when nothing trained).
    pub loss: f64,
    pub epsilon: f64,
}

impl MetricsRow {
    pub fn new(iteration: u64, stats: &WindowStats, loss: f64, epsilon: f64) -> Self {
        Self {
            iteration,
            avg_throughput: stats.avg_throughput(),
            packet_loss: stats.packet_loss(),
            pdr: stats.pdr(),
            loss,
            epsilon,
        }
    }
}

pub const CSV_HEADER: &str = "iteration,avg_throughput,packet_loss,pdr,loss,epsilon";

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.iteration, r.avg_throughput, r.packet_loss, r.pdr, r.loss, r.epsilon
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Runs `slots` slots from the empty state with a fixed rule, restricted to
/// `kind`'s action set.
pub fn evaluate<F>(template: &Env, kind: PolicyKind, slots: u64, rng: &mut SimRng, mut policy: F) -> Vec<SlotTrace>
where
    F: FnMut(&SystemState, ActionSet) -> Action,
{
    let mut env = template.clone();
    env.reset(SystemState::default()).expect("empty state is valid");
    let mut step = |env: &mut Env, rng: &mut SimRng| {
        let s = env.state();
        let a = policy(&s, restrict(env.feasible(), kind));
        (a, env.step(a, rng).expect("policies choose feasible actions"))
    };
    (0..slots)
        .map(|_| {
            let (a, out) = step(&mut env, rng);
            if out.slot_complete {
                SlotTrace::single(a, out.diagnostics)
            } else {
                let (b, second) = step(&mut env, rng);
                SlotTrace::deception(out.diagnostics, b, second.diagnostics)
            }
        })
        .collect()
}

/// Greedy rollout of `agent` (or the WD rule) on the shared evaluation stream.
fn greedy_window<A: Agent + ?Sized>(agent: &A, template: &Env, kind: PolicyKind, slots: u64, seed: u64) -> Vec<SlotTrace> {
    let mut rng = seeded_rng(seed, streams::EVAL);
    if kind.learns() {
        evaluate(template, kind, slots, &mut rng, |s, mask| agent.greedy(s, mask))
    } else {
        let params = template.params().clone();
        evaluate(template, kind, slots, &mut rng, |s, _| wd_policy(s, &params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub iterations: u64,
    pub eval_every: u64,
    pub eval_window: u64,
    pub policy: PolicyKind,
    pub epsilon: EpsilonSchedule,
}

impl TrainOptions {
    pub fn new(iterations: u64, policy: PolicyKind) -> Self {
        Self {
            iterations,
            eval_every: (iterations / DEFAULT_SAMPLES).max(1),
            eval_window: DEFAULT_EVAL_WINDOW,
            policy,
            epsilon: EpsilonSchedule::for_run(iterations),
        }
    }
}

/// Trains `agent` for `opts.iterations` decision epochs starting from the
/// empty state, emitting a greedy-evaluation row every `opts.eval_every`
/// epochs and after the last one.
pub fn train<A: Agent + ?Sized>(agent: &mut A, template: &Env, opts: &TrainOptions, seed: u64) -> Result<Vec<MetricsRow>, TrainingFault> {
    let mut env = template.clone();
    env.reset(SystemState::default()).expect("empty state is valid");
    let mut env_rng = seeded_rng(seed, streams::ENV);
    let mut agent_rng = seeded_rng(seed, streams::AGENT);
    let kind = opts.policy;
    let mut mask = restrict(env.feasible(), kind);
    let mut rows = Vec::new();
    let (mut loss_sum, mut loss_count) = (0.0, 0u64);
    for it in 0..opts.iterations {
        let s = env.state();
        let epsilon = opts.epsilon.at(it);
        let a = agent.act(&s, mask, epsilon, &mut agent_rng);
        let out = env.step(a, &mut env_rng).map_err(|e| TrainingFault::new(it, e.to_string()))?;
        let next_mask = restrict(env.feasible(), kind);
        let tr = Transition {
            state: s,
            action: a,
            reward: f64::from(out.reward),
            next_state: out.next_state,
            next_feasible: next_mask,
        };
        let loss = agent.learn(&tr, &mut agent_rng).map_err(|mut f| {
            f.iteration = it;
            f
        })?;
        if let Some(l) = loss {
            loss_sum += l;
            loss_count += 1;
        }
        mask = next_mask;
        let done = it + 1;
        if done % opts.eval_every == 0 || done == opts.iterations {
            let window = greedy_window(agent, template, kind, opts.eval_window, seed);
            let loss = if loss_count == 0 { 0.0 } else { loss_sum / loss_count as f64 };
            rows.push(MetricsRow::new(done, &compute_metrics(&window), loss, epsilon));
            (loss_sum, loss_count) = (0.0, 0);
        }
    }
    Ok(rows)
}

/// A trained (or fixed) policy that can be rolled out greedily.
pub enum Trained {
    Tabular(QLearner),
    Deep(Box<DeepAgent>),
    Fixed,
}

impl Trained {
    /// Greedy evaluation window of this policy.
    pub fn rollout(&self, template: &Env, kind: PolicyKind, slots: u64, seed: u64) -> Vec<SlotTrace> {
        match self {
            Self::Tabular(q) => greedy_window(q, template, kind, slots, seed),
            Self::Deep(d) => greedy_window(d.as_ref(), template, kind, slots, seed),
            Self::Fixed => greedy_window(&NoAgent, template, PolicyKind::Wd, slots, seed),
        }
    }
}

/// Placeholder for rules that never consult value estimates.
struct NoAgent;

impl Agent for NoAgent {
    fn values(&self, _s: &SystemState) -> Vec<f64> {
        Vec::new()
    }

    fn learn(&mut self, _tr: &Transition, _rng: &mut SimRng) -> Result<Option<f64>, TrainingFault> {
        Ok(None)
    }
}

/// Outcome of one (sweep value, seed) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub file_name: String,
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    /// Mean jammer utility per slot under the final greedy policy.
    pub jammer_utility: f64,
    pub fault: Option<TrainingFault>,
}

impl CellResult {
    /// Throughput of the final greedy policy.
    pub fn final_throughput(&self) -> Option<f64> {
        self.rows.last().map(|r| r.avg_throughput)
    }
}

/// Trains one cell and evaluates the result.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> CellResult {
    let opts = TrainOptions {
        iterations: cfg.iterations,
        eval_every: cfg.eval_every(),
        eval_window: cfg.eval_window,
        policy: cfg.policy,
        epsilon: EpsilonSchedule::for_run(cfg.iterations),
    };
    let (trained, outcome) = train_policy(cfg.algo, &cell.env, &opts, cell.seed);
    let (rows, fault) = match outcome {
        Ok(rows) => (rows, None),
        Err(f) => (Vec::new(), Some(f)),
    };
    let jammer_utility = if fault.is_none() {
        let window = trained.rollout(&cell.env, cfg.policy, cfg.eval_window, cell.seed);
        average_utilities(&window, cell.env.params()).0
    } else {
        f64::NAN
    };
    CellResult {
        file_name: cell.file_name(cfg),
        param: cell.param,
        value: cell.value,
        seed: cell.seed,
        rows,
        jammer_utility,
        fault,
    }
}

/// Builds the agent for `algo` and trains it. WD skips learning and emits
/// the same checkpoints from the fixed rule.
pub fn train_policy(algo: Algo, template: &Env, opts: &TrainOptions, seed: u64) -> (Trained, Result<Vec<MetricsRow>, TrainingFault>) {
    let params = template.params();
    if !opts.policy.learns() {
        let fixed = TrainOptions { epsilon: EpsilonSchedule::constant(0.0), ..opts.clone() };
        let rows = train(&mut WdRule(params.clone()), template, &fixed, seed);
        return (Trained::Fixed, rows);
    }
    match algo {
        Algo::Q => {
            let schedule = LearningSchedule { epsilon: opts.epsilon, ..LearningSchedule::for_run(opts.iterations) };
            let mut learner = QLearner::new(params, schedule);
            let rows = train(&mut learner, template, opts, seed);
            (Trained::Tabular(learner), rows)
        }
        Algo::Dqn | Algo::Dueling => {
            let config = if algo == Algo::Dqn { DeepConfig::dqn() } else { DeepConfig::dueling() };
            let mut agent = DeepAgent::new(params, config, &mut seeded_rng(seed, streams::INIT));
            let rows = train(&mut agent, template, opts, seed);
            (Trained::Deep(Box::new(agent)), rows)
        }
    }
}

/// The WD rule dressed as an agent so that it runs through the same loop.
struct WdRule(crate::env::EnvParams);

impl Agent for WdRule {
    fn values(&self, _s: &SystemState) -> Vec<f64> {
        Vec::new()
    }

    fn learn(&mut self, _tr: &Transition, _rng: &mut SimRng) -> Result<Option<f64>, TrainingFault> {
        Ok(None)
    }

    fn act(&self, s: &SystemState, _feasible: ActionSet, _epsilon: f64, _rng: &mut SimRng) -> Action {
        self.greedy(s, _feasible)
    }

    fn greedy(&self, s: &SystemState, _feasible: ActionSet) -> Action {
        debug_assert_eq!(s.epoch(), Epoch::First, "WD never deceives");
        wd_policy(s, &self.0)
    }
}

/// Summary of a full experiment.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub written: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn all_faulted(&self) -> bool {
        !self.cells.is_empty() && self.cells.iter().all(|c| c.fault.is_some())
    }
}

/// Runs every cell in parallel and writes one CSV per successful cell into
/// `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport, ConfigError> {
    let cells = cfg.cells()?;
    std::fs::create_dir_all(out_dir).map_err(|source| ConfigError::Io { path: out_dir.to_path_buf(), source })?;
    let results: Vec<CellResult> = cells.par_iter().map(|cell| run_cell(cfg, cell)).collect();
    let mut written = Vec::new();
    for r in &results {
        if r.fault.is_some() {
            continue;
        }
        let path = out_dir.join(&r.file_name);
        std::fs::write(&path, to_csv(&r.rows)).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(ExperimentReport { cells: results, written })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Diagnostics, EnvParams, JammerConfig};

    fn env() -> Env {
        Env::new(EnvParams::default(), JammerConfig::default()).unwrap()
    }

    #[test]
    fn metrics_arithmetic() {
        let mut slots = vec![SlotTrace::single(Action::Idle, Diagnostics::default()); 10];
        slots[0].first.1.delivered = 12;
        slots[1].first.1.arrived = 20;
        slots[2].first.1.dropped_jamming = 5;
        slots[3].first.1.dropped_overflow = 3;
        let w = compute_metrics(&slots);
        assert_eq!(w.avg_throughput(), 1.2);
        assert_eq!(w.packet_loss(), 0.8);
        assert_eq!(w.pdr(), 0.6);
    }

    #[test]
    fn idle_window_pdr() {
        let slots = vec![SlotTrace::single(Action::Idle, Diagnostics::default()); 4];
        let w = compute_metrics(&slots);
        assert_eq!((w.avg_throughput(), w.pdr()), (0.0, 1.0));
        let mut slots = slots;
        slots[0].first.1.arrived = 3;
        assert_eq!(compute_metrics(&slots).pdr(), 0.0);
    }

    #[test]
    fn window_conserves_packets() {
        let traces = evaluate(&env(), PolicyKind::Proposed, 2_000, &mut seeded_rng(3, 0), |_, mask| {
            mask.nth(mask.len() - 1).unwrap()
        });
        let w = compute_metrics(&traces);
        let mut replay = env();
        replay.reset(SystemState::default()).unwrap();
        // The final queue is what arrived minus what left.
        let mut queue = 0i64;
        for t in &traces {
            let d = t.totals();
            queue += i64::from(d.arrived) - i64::from(d.delivered) - i64::from(d.dropped());
            assert!((0..=10).contains(&queue));
        }
        assert_eq!(w.arrived as i64 - w.delivered as i64 - w.dropped as i64, queue);
    }

    #[test]
    fn csv_format() {
        let rows = [MetricsRow { iteration: 5, avg_throughput: 1.0, packet_loss: 0.25, pdr: 2.0 / 3.0, loss: 0.0, epsilon: 0.1 }];
        assert_eq!(to_csv(&rows), format!("{CSV_HEADER}\n5,1.000000,0.250000,0.666667,0.000000,0.100000\n"));
    }

    #[test]
    fn wd_never_deceives_and_is_flat() {
        let opts = TrainOptions { eval_window: 500, ..TrainOptions::new(3_000, PolicyKind::Wd) };
        let (_, rows) = train_policy(Algo::Dueling, &env(), &opts, 4);
        let rows = rows.unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert_eq!((r.avg_throughput, r.packet_loss, r.pdr), (rows[0].avg_throughput, rows[0].packet_loss, rows[0].pdr));
            assert_eq!((r.loss, r.epsilon), (0.0, 0.0));
        }
        let traces = Trained::Fixed.rollout(&env(), PolicyKind::Wd, 2_000, 4);
        assert!(traces.iter().all(|t| t.second.is_none()));
    }

    #[test]
    fn restricted_training_stays_in_allowed_set() {
        for kind in [PolicyKind::Htt, PolicyKind::Bm, PolicyKind::Ra] {
            let allowed = kind.allowed(8);
            let mut learner = QLearner::new(&EnvParams::default(), LearningSchedule::for_run(5_000));
            let opts = TrainOptions { eval_window: 200, ..TrainOptions::new(5_000, kind) };
            train(&mut learner, &env(), &opts, 1).unwrap();
            let traces = Trained::Tabular(learner).rollout(&env(), kind, 2_000, 9);
            for t in traces {
                assert!(allowed.contains(t.first.0));
                if let Some((a, _)) = t.second {
                    assert!(allowed.contains(a));
                }
            }
        }
    }

    #[test]
    fn rows_at_checkpoints() {
        let mut learner = QLearner::new(&EnvParams::default(), LearningSchedule::for_run(1_050));
        let opts = TrainOptions { eval_every: 500, eval_window: 100, ..TrainOptions::new(1_050, PolicyKind::Proposed) };
        let rows = train(&mut learner, &env(), &opts, 1).unwrap();
        let its: Vec<u64> = rows.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![500, 1_000, 1_050]);
        assert!(rows.iter().all(|r| r.loss > 0.0 && (0.0..=1.0).contains(&r.pdr)));
    }
}
