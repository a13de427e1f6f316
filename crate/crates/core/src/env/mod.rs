//! Slot dynamics of the deception MDP.
//!
//! A time slot has one decision epoch, or two when the transmitter opens it
//! with a deception burst. The observable state is `(f, j, d, e)`: the
//! deception flag, the jammer flag, the data-queue length and the stored
//! energy. The epoch is implied by `f`.

mod jammer;
mod model;

pub use jammer::{sinr, JammerConfig};
pub use model::{check_irreducible, enumerate_model, Irreducibility, MdpModel, ModelRow, StateIndexer};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("state {state} is not valid at epoch {epoch}")]
    InvalidState { state: SystemState, epoch: Epoch },
    #[error("action {action:?} is not feasible in state {state}")]
    InfeasibleAction { action: Action, state: SystemState },
    #[error("SINR denominator is zero (phi * P_J + rho^2 = 0)")]
    DegenerateSinr,
    #[error("state space of {states} states exceeds the bound of {bound}")]
    Capacity { states: usize, bound: usize },
}

/// Queue, energy and rate constants of the transmitter.
///
/// Serialized field names follow the symbols used throughout the experiment
/// configs (`D`, `E`, `K`, `lambda`, ...). Omitted fields take the default
/// scenario values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    /// Data queue capacity in packets.
    #[serde(rename = "D")]
    pub queue_capacity: u32,
    /// Energy storage capacity in units.
    #[serde(rename = "E")]
    pub energy_capacity: u32,
    /// Packets per arrival event.
    #[serde(rename = "K")]
    pub arrival_batch: u32,
    #[serde(rename = "lambda")]
    pub arrival_prob: f64,
    /// Ambient RF energy collected per successful ambient harvest.
    #[serde(rename = "e_v")]
    pub ambient_energy: u32,
    #[serde(rename = "p_e")]
    pub ambient_prob: f64,
    /// Energy consumed by one deception burst, sensing included.
    #[serde(rename = "e_f")]
    pub deception_cost: u32,
    #[serde(rename = "e_r")]
    pub energy_per_packet: u32,
    /// Packet cap of a full-slot active transmission.
    #[serde(rename = "d_hat_a")]
    pub active_cap: u32,
    /// Packet cap of an active transmission after an unanswered deception.
    #[serde(rename = "d_hat_de")]
    pub post_deception_cap: u32,
    #[serde(rename = "p_miss")]
    pub miss_prob: f64,
    /// Fixed backscatter rate; packets above what the jamming signal supports are lost.
    #[serde(rename = "d_max")]
    pub backscatter_max: u32,
    /// Energy harvested from the jamming signal, per jammer power level.
    #[serde(rename = "e_harvest")]
    pub harvest_per_level: Vec<u32>,
    /// Packets backscattered through the jamming signal, per jammer power level.
    #[serde(rename = "d_backscatter")]
    pub backscatter_per_level: Vec<u32>,
    /// Packets sent at adapted rate `m` (entry `m - 1`), one rate per nonzero power level.
    #[serde(rename = "d_rate")]
    pub rate_packets: Vec<u32>,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            queue_capacity: 10,
            energy_capacity: 10,
            arrival_batch: 3,
            arrival_prob: 0.7,
            ambient_energy: 1,
            ambient_prob: 0.5,
            deception_cost: 1,
            energy_per_packet: 1,
            active_cap: 4,
            post_deception_cap: 3,
            miss_prob: 0.01,
            backscatter_max: 3,
            harvest_per_level: vec![0, 2, 3, 4],
            backscatter_per_level: vec![0, 1, 2, 3],
            rate_packets: vec![2, 1, 0],
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> EnvError {
    EnvError::InvalidParam { field, reason: reason.into() }
}

fn check_prob(field: &'static str, p: f64) -> Result<(), EnvError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}

impl EnvParams {
    /// Number of adapted rates `M`.
    pub fn rate_count(&self) -> usize {
        self.rate_packets.len()
    }

    /// Size of the action space, `5 + M`.
    pub fn action_count(&self) -> usize {
        5 + self.rate_count()
    }

    /// Checks the parameter invariants against a jammer with `levels` power levels.
    pub fn validate(&self, levels: usize) -> Result<(), EnvError> {
        if self.queue_capacity < 1 {
            return Err(invalid("D", "queue capacity must be at least 1"));
        }
        if self.energy_capacity < 1 {
            return Err(invalid("E", "energy capacity must be at least 1"));
        }
        if self.deception_cost == 0 || self.deception_cost > self.energy_capacity {
            return Err(invalid("e_f", "deception cost must lie in (0, E]"));
        }
        if self.energy_per_packet == 0 || self.energy_per_packet > self.energy_capacity {
            return Err(invalid("e_r", "per-packet energy must lie in (0, E]"));
        }
        if self.post_deception_cap >= self.active_cap {
            return Err(invalid("d_hat_de", "post-deception cap must be below d_hat_a"));
        }
        check_prob("lambda", self.arrival_prob)?;
        check_prob("p_e", self.ambient_prob)?;
        check_prob("p_miss", self.miss_prob)?;
        if self.harvest_per_level.len() != levels {
            return Err(invalid("e_harvest", format!("expected {levels} entries, one per jammer power level")));
        }
        if self.backscatter_per_level.len() != levels {
            return Err(invalid("d_backscatter", format!("expected {levels} entries, one per jammer power level")));
        }
        if self.harvest_per_level[0] != 0 {
            return Err(invalid("e_harvest", "nothing can be harvested at power level 0"));
        }
        if self.backscatter_per_level[0] != 0 {
            return Err(invalid("d_backscatter", "nothing can be backscattered at power level 0"));
        }
        if self.backscatter_per_level.iter().any(|&d| d > self.backscatter_max) {
            return Err(invalid("d_backscatter", "entries may not exceed d_max"));
        }
        if self.rate_count() + 5 > ActionSet::CAPACITY {
            return Err(invalid("d_rate", "too many adapted rates"));
        }
        Ok(())
    }
}

/// Decision epoch within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Epoch {
    /// Start of the slot.
    First,
    /// After a deception burst.
    Second,
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epoch::First => f.write_str("1"),
            Epoch::Second => f.write_str("2"),
        }
    }
}

/// Observable state `(f, j, d, e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub deceived: bool,
    pub jammed: bool,
    pub data: u32,
    pub energy: u32,
}

impl SystemState {
    pub const fn new(deceived: bool, jammed: bool, data: u32, energy: u32) -> Self {
        Self { deceived, jammed, data, energy }
    }

    /// Start-of-slot state with the given queue and energy levels.
    pub const fn slot_start(data: u32, energy: u32) -> Self {
        Self::new(false, false, data, energy)
    }

    pub fn epoch(&self) -> Epoch {
        if self.deceived {
            Epoch::Second
        } else {
            Epoch::First
        }
    }

    /// Network input features: flags raw, occupancies scaled to `[0, 1]`.
    pub fn features(&self, params: &EnvParams) -> [f64; 4] {
        [
            f64::from(u8::from(self.deceived)),
            f64::from(u8::from(self.jammed)),
            f64::from(self.data) / f64::from(params.queue_capacity),
            f64::from(self.energy) / f64::from(params.energy_capacity),
        ]
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            u8::from(self.deceived),
            u8::from(self.jammed),
            self.data,
            self.energy
        )
    }
}

/// Transmitter action, encoded `0..=4` plus `4 + m` for adapted rate `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Idle,
    Deceive,
    Transmit,
    Harvest,
    Backscatter,
    /// Rate adaptation to rate `m >= 1`.
    RateAdapt(u8),
}

impl Action {
    pub fn code(self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Deceive => 1,
            Action::Transmit => 2,
            Action::Harvest => 3,
            Action::Backscatter => 4,
            Action::RateAdapt(m) => 4 + usize::from(m),
        }
    }

    pub fn from_code(code: usize) -> Option<Action> {
        Some(match code {
            0 => Action::Idle,
            1 => Action::Deceive,
            2 => Action::Transmit,
            3 => Action::Harvest,
            4 => Action::Backscatter,
            c => Action::RateAdapt(u8::try_from(c - 4).ok()?),
        })
    }
}

/// A set of actions stored as a bitmask over action codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionSet(u32);

impl ActionSet {
    pub const CAPACITY: usize = 32;

    pub const fn empty() -> Self {
        Self(0)
    }

    /// Every code in `0..count`.
    pub fn all(count: usize) -> Self {
        assert!(count <= Self::CAPACITY);
        if count == Self::CAPACITY {
            Self(u32::MAX)
        } else {
            Self((1u32 << count) - 1)
        }
    }

    pub fn from_codes(codes: impl IntoIterator<Item = usize>) -> Self {
        codes.into_iter().fold(Self::empty(), |set, c| {
            assert!(c < Self::CAPACITY);
            Self(set.0 | (1 << c))
        })
    }

    pub fn insert(&mut self, action: Action) {
        self.0 |= 1 << action.code();
    }

    pub fn remove(&mut self, action: Action) {
        self.0 &= !(1 << action.code());
    }

    pub fn contains(&self, action: Action) -> bool {
        self.contains_code(action.code())
    }

    pub fn contains_code(&self, code: usize) -> bool {
        code < Self::CAPACITY && self.0 & (1 << code) != 0
    }

    pub fn intersect(self, other: ActionSet) -> ActionSet {
        Self(self.0 & other.0)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn bits(&self) -> u32 {
        self.0
    }

    /// Codes in ascending order.
    pub fn codes(self) -> impl Iterator<Item = usize> {
        (0..Self::CAPACITY).filter(move |&c| self.0 & (1 << c) != 0)
    }

    /// Actions in ascending code order.
    pub fn iter(self) -> impl Iterator<Item = Action> {
        self.codes().filter_map(Action::from_code)
    }

    /// The `k`-th action in ascending code order.
    pub fn nth(self, k: usize) -> Option<Action> {
        self.iter().nth(k)
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        let mut set = ActionSet::empty();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

fn check_state(params: &EnvParams, s: &SystemState, epoch: Epoch) -> Result<(), EnvError> {
    let ok_flags = match epoch {
        Epoch::First => !s.deceived && !s.jammed,
        Epoch::Second => s.deceived,
    };
    if ok_flags && s.data <= params.queue_capacity && s.energy <= params.energy_capacity {
        Ok(())
    } else {
        Err(EnvError::InvalidState { state: *s, epoch })
    }
}

/// Actions the transmitter may take in `s` at `epoch`.
pub fn feasible_actions(params: &EnvParams, s: &SystemState, epoch: Epoch) -> Result<ActionSet, EnvError> {
    check_state(params, s, epoch)?;
    let mut set = ActionSet::empty();
    set.insert(Action::Idle);
    let can_send = s.data > 0 && s.energy > params.energy_per_packet;
    match epoch {
        Epoch::First => {
            if s.energy >= params.deception_cost {
                set.insert(Action::Deceive);
            }
            if can_send {
                set.insert(Action::Transmit);
            }
        }
        Epoch::Second if !s.jammed => {
            if can_send {
                set.insert(Action::Transmit);
            }
        }
        Epoch::Second => {
            if s.energy < params.energy_capacity {
                set.insert(Action::Harvest);
            }
            if s.data > 0 {
                set.insert(Action::Backscatter);
            }
            if can_send {
                for m in 1..=params.rate_count() {
                    set.insert(Action::RateAdapt(m as u8));
                }
            }
        }
    }
    Ok(set)
}

/// Per-step accounting. Packet and energy flows are tracked so that both
/// conservation identities can be checked exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    /// Jammer power level in force during this epoch (0 when it stayed idle).
    pub jammer_level: usize,
    pub delivered: u32,
    /// Packets that arrived at slot end, accepted or not.
    pub arrived: u32,
    pub dropped_overflow: u32,
    pub dropped_jamming: u32,
    pub dropped_miss: u32,
    /// Packets lost because the jamming signal could not carry `d_max` packets.
    pub dropped_backscatter: u32,
    /// Gross energy offered by the jamming signal.
    pub harvested_jammer: u32,
    /// Gross ambient energy offered at slot end.
    pub harvested_ambient: u32,
    pub energy_spent: u32,
    /// Harvested energy discarded because the storage was full.
    pub energy_overflow: u32,
}

impl Diagnostics {
    pub fn dropped(&self) -> u32 {
        self.dropped_overflow + self.dropped_jamming + self.dropped_miss + self.dropped_backscatter
    }

    /// Field-wise sum; `jammer_level` keeps the larger of the two.
    pub fn merge(&self, other: &Diagnostics) -> Diagnostics {
        Diagnostics {
            jammer_level: self.jammer_level.max(other.jammer_level),
            delivered: self.delivered + other.delivered,
            arrived: self.arrived + other.arrived,
            dropped_overflow: self.dropped_overflow + other.dropped_overflow,
            dropped_jamming: self.dropped_jamming + other.dropped_jamming,
            dropped_miss: self.dropped_miss + other.dropped_miss,
            dropped_backscatter: self.dropped_backscatter + other.dropped_backscatter,
            harvested_jammer: self.harvested_jammer + other.harvested_jammer,
            harvested_ambient: self.harvested_ambient + other.harvested_ambient,
            energy_spent: self.energy_spent + other.energy_spent,
            energy_overflow: self.energy_overflow + other.energy_overflow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Packets delivered in this epoch.
    pub reward: u32,
    pub next_state: SystemState,
    pub slot_complete: bool,
    pub diagnostics: Diagnostics,
}

/// The random events that can influence one epoch.
///
/// For a first-epoch transmission or deception `level` is the power level the
/// jammer answers with; in the second epoch it is the level drawn at deception
/// time, which persists for the rest of the slot. `arrival` and `ambient` only
/// matter when the slot ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Draws {
    pub level: usize,
    pub miss: bool,
    pub arrival: bool,
    pub ambient: bool,
}

/// Applies action `a` in state `s` under fixed random events.
///
/// This is the deterministic core shared by [`Env::step`] and the exact model
/// enumeration.
pub fn resolve(params: &EnvParams, s: &SystemState, a: Action, draws: Draws) -> Result<StepOutcome, EnvError> {
    let epoch = s.epoch();
    if !feasible_actions(params, s, epoch)?.contains(a) {
        return Err(EnvError::InfeasibleAction { action: a, state: *s });
    }
    if epoch == Epoch::Second && s.jammed != (draws.level > 0) {
        return Err(EnvError::InvalidState { state: *s, epoch });
    }

    let e_r = params.energy_per_packet;
    let mut diag = Diagnostics::default();
    let mut data = s.data;
    let mut energy = s.energy;
    let affordable = energy / e_r;

    // Sends up to `cap` packets; returns how many left the queue.
    let send = |cap: u32, data: &mut u32, energy: &mut u32, diag: &mut Diagnostics| {
        let n = (*data).min(cap).min(affordable);
        *data -= n;
        *energy -= n * e_r;
        diag.energy_spent += n * e_r;
        n
    };

    match (epoch, a) {
        (Epoch::First, Action::Deceive) => {
            energy -= params.deception_cost;
            diag.energy_spent = params.deception_cost;
            diag.jammer_level = draws.level;
            return Ok(StepOutcome {
                reward: 0,
                next_state: SystemState::new(true, draws.level > 0, data, energy),
                slot_complete: false,
                diagnostics: diag,
            });
        }
        (Epoch::First, Action::Transmit) => {
            diag.jammer_level = draws.level;
            let n = send(params.active_cap, &mut data, &mut energy, &mut diag);
            if draws.level > 0 {
                diag.dropped_jamming = n;
            } else {
                diag.delivered = n;
            }
        }
        (Epoch::Second, Action::Transmit) => {
            diag.delivered = send(params.post_deception_cap, &mut data, &mut energy, &mut diag);
        }
        (Epoch::Second, Action::Harvest) => {
            diag.jammer_level = draws.level;
            let gain = params.harvest_per_level[draws.level];
            let stored = (energy + gain).min(params.energy_capacity);
            diag.harvested_jammer = gain;
            diag.energy_overflow = energy + gain - stored;
            energy = stored;
        }
        (Epoch::Second, Action::Backscatter) => {
            diag.jammer_level = draws.level;
            let attempted = data.min(params.backscatter_max);
            let carried = data.min(params.backscatter_per_level[draws.level]);
            data -= attempted;
            diag.delivered = carried;
            diag.dropped_backscatter = attempted - carried;
        }
        (Epoch::Second, Action::RateAdapt(m)) => {
            diag.jammer_level = draws.level;
            let cap = params.rate_packets[usize::from(m) - 1];
            let n = send(cap, &mut data, &mut energy, &mut diag);
            if draws.miss {
                diag.dropped_miss = n;
            } else {
                diag.delivered = n;
            }
        }
        (Epoch::Second, _) => diag.jammer_level = draws.level,
        (Epoch::First, _) => {}
    }

    // End of slot: arrivals, then ambient harvesting.
    if draws.arrival {
        let accepted = params.arrival_batch.min(params.queue_capacity - data);
        diag.arrived = params.arrival_batch;
        diag.dropped_overflow = params.arrival_batch - accepted;
        data += accepted;
    }
    if draws.ambient {
        let stored = (energy + params.ambient_energy).min(params.energy_capacity);
        diag.harvested_ambient = params.ambient_energy;
        diag.energy_overflow += energy + params.ambient_energy - stored;
        energy = stored;
    }

    Ok(StepOutcome {
        reward: diag.delivered,
        next_state: SystemState::slot_start(data, energy),
        slot_complete: true,
        diagnostics: diag,
    })
}

/// One environment instance: parameters, jammer, current state and the
/// jammer level carried into the second epoch.
#[derive(Debug, Clone)]
pub struct Env {
    params: EnvParams,
    jammer: JammerConfig,
    state: SystemState,
    pending_level: usize,
}

impl Env {
    pub fn new(params: EnvParams, jammer: JammerConfig) -> Result<Self, EnvError> {
        jammer.validate()?;
        params.validate(jammer.level_count())?;
        Ok(Self { params, jammer, state: SystemState::default(), pending_level: 0 })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn jammer(&self) -> &JammerConfig {
        &self.jammer
    }

    pub fn state(&self) -> SystemState {
        self.state
    }

    pub fn epoch(&self) -> Epoch {
        self.state.epoch()
    }

    /// Jammer level persisting into the second epoch (0 outside it).
    pub fn pending_level(&self) -> usize {
        self.pending_level
    }

    /// Restarts at a start-of-slot state.
    pub fn reset(&mut self, s: SystemState) -> Result<(), EnvError> {
        self.set_state(s, 0)
    }

    /// Places the environment in `s`, with `level` as the persisting jammer
    /// level when `s` is a second-epoch state.
    pub fn set_state(&mut self, s: SystemState, level: usize) -> Result<(), EnvError> {
        check_state(&self.params, &s, s.epoch())?;
        let consistent = match s.epoch() {
            Epoch::First => level == 0,
            Epoch::Second => (level > 0) == s.jammed && level < self.jammer.level_count(),
        };
        if !consistent {
            return Err(EnvError::InvalidState { state: s, epoch: s.epoch() });
        }
        self.state = s;
        self.pending_level = level;
        Ok(())
    }

    pub fn feasible(&self) -> ActionSet {
        feasible_actions(&self.params, &self.state, self.state.epoch())
            .expect("environment state is always valid")
    }

    /// Advances one decision epoch.
    ///
    /// Random draws happen in a fixed order: jammer response (only for a
    /// first-epoch transmission or deception), miss detection (only for rate
    /// adaptation), then arrival and ambient harvest (only when the slot ends).
    pub fn step<R: Rng + ?Sized>(&mut self, a: Action, rng: &mut R) -> Result<StepOutcome, EnvError> {
        let s = self.state;
        if !self.feasible().contains(a) {
            return Err(EnvError::InfeasibleAction { action: a, state: s });
        }
        let mut draws = Draws::default();
        draws.level = match (s.epoch(), a) {
            (Epoch::First, Action::Transmit | Action::Deceive) => self.jammer.sample(true, rng),
            (Epoch::First, _) => 0,
            (Epoch::Second, _) => self.pending_level,
        };
        if matches!(a, Action::RateAdapt(_)) {
            draws.miss = rng.gen_bool(self.params.miss_prob);
        }
        let completes = !(s.epoch() == Epoch::First && a == Action::Deceive);
        if completes {
            draws.arrival = rng.gen_bool(self.params.arrival_prob);
            draws.ambient = rng.gen_bool(self.params.ambient_prob);
        }
        let out = resolve(&self.params, &s, a, draws)?;
        self.state = out.next_state;
        self.pending_level = if out.slot_complete { 0 } else { draws.level };
        Ok(out)
    }
}

/// One learning sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: SystemState,
    pub action: Action,
    pub reward: f64,
    pub next_state: SystemState,
    /// Actions available in `next_state`.
    pub next_feasible: ActionSet,
}
