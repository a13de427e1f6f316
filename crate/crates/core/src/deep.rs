//! Deep Q-learning and deep dueling agents: replay memory, quasi-static
//! target network and masked minibatch training.
//!
//! Both agents share every line of the training procedure; only the network
//! architecture differs ([`Mode::Plain`] vs [`Mode::Dueling`]).

use rand::Rng;
use thiserror::Error;

use crate::agent::{Agent, TrainingFault};
use crate::env::{EnvParams, SystemState, Transition};
use crate::nn::{Combine, Gradients, Mlp, Mode};
use crate::SimRng;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("replay memory holds {size} transitions, batch needs {batch}")]
pub struct InsufficientData {
    pub size: usize,
    pub batch: usize,
}

/// Fixed-capacity ring of transitions; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, tr: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(tr);
        } else {
            self.items[self.head] = tr;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `batch` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>, InsufficientData> {
        if self.items.len() < batch {
            return Err(InsufficientData { size: self.items.len(), batch });
        }
        Ok((0..batch).map(|_| self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepConfig {
    pub mode: Mode,
    pub hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch: usize,
    pub capacity: usize,
    /// Gradient steps between target-network syncs.
    pub sync_every: u64,
}

impl DeepConfig {
    pub fn dueling() -> Self {
        Self {
            mode: Mode::Dueling(Combine::Mean),
            hidden: 64,
            learning_rate: 0.001,
            gamma: 0.95,
            batch: 64,
            capacity: 10_000,
            sync_every: 1_000,
        }
    }

    pub fn dqn() -> Self {
        Self { mode: Mode::Plain, ..Self::dueling() }
    }
}

/// Scales a state into network inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FeatureScale {
    queue: f64,
    energy: f64,
}

impl FeatureScale {
    fn features(&self, s: &SystemState) -> [f64; 4] {
        [
            f64::from(u8::from(s.deceived)),
            f64::from(u8::from(s.jammed)),
            f64::from(s.data) / self.queue,
            f64::from(s.energy) / self.energy,
        ]
    }
}

/// `y = r + gamma * max_{a' feasible} target(s', a')`.
pub fn td_target(tr: &Transition, target: &Mlp, gamma: f64, features: &[f64]) -> f64 {
    if gamma == 0.0 {
        return tr.reward;
    }
    let q = target.forward(features).expect("feature width matches the network");
    let best = tr.next_feasible.codes().map(|c| q[c]).fold(f64::NEG_INFINITY, f64::max);
    tr.reward + gamma * best
}

#[derive(Debug, Clone)]
pub struct DeepAgent {
    pub config: DeepConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub replay: ReplayBuffer,
    scale: FeatureScale,
    train_steps: u64,
}

impl DeepAgent {
    pub fn new(params: &EnvParams, config: DeepConfig, rng: &mut SimRng) -> Self {
        let online = Mlp::new(config.mode, 4, config.hidden, params.action_count(), rng);
        let target = online.clone();
        Self {
            config,
            online,
            target,
            replay: ReplayBuffer::new(config.capacity),
            scale: FeatureScale { queue: f64::from(params.queue_capacity), energy: f64::from(params.energy_capacity) },
            train_steps: 0,
        }
    }

    pub fn features(&self, s: &SystemState) -> [f64; 4] {
        self.scale.features(s)
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Target for one transition under the current target network.
    pub fn target_value(&self, tr: &Transition) -> f64 {
        td_target(tr, &self.target, self.config.gamma, &self.features(&tr.next_state))
    }

    /// One SGD step on the mean squared TD error of `batch`. Returns the loss
    /// before the step.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<f64, TrainingFault> {
        assert!(!batch.is_empty(), "empty minibatch");
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut loss = 0.0;
        let mut dq = vec![0.0; self.online.action_count()];
        for tr in batch {
            let y = self.target_value(tr);
            let pass = self
                .online
                .forward_pass(&self.features(&tr.state))
                .map_err(|e| self.fault(e.to_string()))?;
            let a = tr.action.code();
            let err = pass.q[a] - y;
            loss += err * err;
            dq.iter_mut().for_each(|g| *g = 0.0);
            dq[a] = 2.0 * err / n;
            grads.add_assign(&self.online.backward(&pass, &dq));
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(self.fault(format!("non-finite loss {loss}")));
        }
        self.online
            .sgd_step(&grads, self.config.learning_rate)
            .map_err(|e| self.fault(e.to_string()))?;
        self.train_steps += 1;
        if self.train_steps % self.config.sync_every == 0 {
            self.online.clone_into(&mut self.target).expect("online and target share an architecture");
        }
        Ok(loss)
    }

    fn fault(&self, reason: String) -> TrainingFault {
        TrainingFault { iteration: self.train_steps, reason, snapshot: Some(self.online.to_bytes()) }
    }
}

impl Agent for DeepAgent {
    fn values(&self, s: &SystemState) -> Vec<f64> {
        self.online.forward(&self.features(s)).expect("feature width matches the network")
    }

    fn learn(&mut self, tr: &Transition, rng: &mut SimRng) -> Result<Option<f64>, TrainingFault> {
        self.replay.push(*tr);
        match self.replay.sample(self.config.batch, rng) {
            Ok(batch) => self.train_step(&batch).map(Some),
            Err(InsufficientData { .. }) => Ok(None),
        }
    }
}
