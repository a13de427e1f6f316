//! Exact transition tables and the communicating-class analysis.

use std::collections::BTreeMap;

use super::{feasible_actions, resolve, Action, Draws, EnvError, EnvParams, Epoch, JammerConfig, SystemState};

/// Dense index over every `(f, j, d, e)` tuple, excluded states included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndexer {
    data_levels: usize,
    energy_levels: usize,
}

impl StateIndexer {
    pub fn new(params: &EnvParams) -> Self {
        Self {
            data_levels: params.queue_capacity as usize + 1,
            energy_levels: params.energy_capacity as usize + 1,
        }
    }

    /// `2 * 2 * (D + 1) * (E + 1)`.
    pub fn len(&self) -> usize {
        4 * self.data_levels * self.energy_levels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, s: &SystemState) -> usize {
        let flags = 2 * usize::from(s.deceived) + usize::from(s.jammed);
        (flags * self.data_levels + s.data as usize) * self.energy_levels + s.energy as usize
    }

    pub fn state(&self, index: usize) -> SystemState {
        let energy = index % self.energy_levels;
        let rest = index / self.energy_levels;
        let data = rest % self.data_levels;
        let flags = rest / self.data_levels;
        SystemState::new(flags >= 2, flags % 2 == 1, data as u32, energy as u32)
    }

    /// Whether the tuple belongs to the state space (`(0, 1, d, e)` does not).
    pub fn is_valid(&self, index: usize) -> bool {
        let s = self.state(index);
        s.deceived || !s.jammed
    }
}

/// One feasible action of a state: expected reward and next-state law.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub action: Action,
    pub reward: f64,
    /// `(next state index, probability)`, sorted by index.
    pub next: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct MdpModel {
    pub indexer: StateIndexer,
    pub action_count: usize,
    /// Feasible actions per state index; empty for excluded tuples.
    pub rows: Vec<Vec<ModelRow>>,
}

impl MdpModel {
    pub fn state_count(&self) -> usize {
        self.indexer.len()
    }

    pub fn row(&self, state: usize, action: Action) -> Option<&ModelRow> {
        self.rows[state].iter().find(|r| r.action == action)
    }
}

fn weighted<T: Copy>(items: impl IntoIterator<Item = (T, f64)>) -> Vec<(T, f64)> {
    items.into_iter().filter(|&(_, p)| p > 0.0).collect()
}

fn bernoulli(p: f64) -> Vec<(bool, f64)> {
    weighted([(false, 1.0 - p), (true, p)])
}

/// Law of the jammer level in force for `(s, a)`.
fn level_law(jammer: &JammerConfig, s: &SystemState, a: Action) -> Vec<(usize, f64)> {
    match (s.epoch(), a) {
        (Epoch::First, Action::Transmit | Action::Deceive) => weighted(jammer.attack_probs.iter().copied().enumerate()),
        (Epoch::Second, _) if s.jammed => {
            let mass = jammer.attack_prob();
            if mass > 0.0 {
                weighted(jammer.attack_probs.iter().copied().enumerate().skip(1).map(|(n, x)| (n, x / mass)))
            } else {
                // Unreachable state under this jammer; spread over attack levels.
                let k = jammer.level_count() - 1;
                (1..=k).map(|n| (n, 1.0 / k as f64)).collect()
            }
        }
        _ => vec![(0, 1.0)],
    }
}

/// Enumerates exact transition probabilities and expected rewards for every
/// state and feasible action, marginalizing the jammer level, miss
/// detection, arrivals and ambient harvest.
pub fn enumerate_model(params: &EnvParams, jammer: &JammerConfig, max_states: usize) -> Result<MdpModel, EnvError> {
    jammer.validate()?;
    params.validate(jammer.level_count())?;
    let indexer = StateIndexer::new(params);
    if indexer.len() > max_states {
        return Err(EnvError::Capacity { states: indexer.len(), bound: max_states });
    }

    let mut rows = Vec::with_capacity(indexer.len());
    for index in 0..indexer.len() {
        if !indexer.is_valid(index) {
            rows.push(Vec::new());
            continue;
        }
        let s = indexer.state(index);
        let feasible = feasible_actions(params, &s, s.epoch())?;
        let mut state_rows = Vec::with_capacity(feasible.len());
        for a in feasible.iter() {
            let completes = !(s.epoch() == Epoch::First && a == Action::Deceive);
            let misses = if matches!(a, Action::RateAdapt(_)) { bernoulli(params.miss_prob) } else { vec![(false, 1.0)] };
            let (arrivals, ambients) = if completes {
                (bernoulli(params.arrival_prob), bernoulli(params.ambient_prob))
            } else {
                (vec![(false, 1.0)], vec![(false, 1.0)])
            };

            let mut reward = 0.0;
            let mut next: BTreeMap<usize, f64> = BTreeMap::new();
            for &(level, pl) in &level_law(jammer, &s, a) {
                for &(miss, pm) in &misses {
                    for &(arrival, pa) in &arrivals {
                        for &(ambient, pe) in &ambients {
                            let p = pl * pm * pa * pe;
                            let out = resolve(params, &s, a, Draws { level, miss, arrival, ambient })?;
                            reward += p * f64::from(out.reward);
                            *next.entry(indexer.index(&out.next_state)).or_insert(0.0) += p;
                        }
                    }
                }
            }
            state_rows.push(ModelRow { action: a, reward, next: next.into_iter().collect() });
        }
        rows.push(state_rows);
    }
    Ok(MdpModel { indexer, action_count: params.action_count(), rows })
}

/// Result of the communicating-class analysis over the states reachable
/// from an initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Irreducibility {
    /// Exactly one communicating class covers the reachable set.
    pub irreducible: bool,
    /// Reachable state indices, ascending.
    pub reachable: Vec<usize>,
    /// Communicating classes of the reachable subgraph; each class is sorted
    /// and classes are ordered by their smallest member.
    pub classes: Vec<Vec<usize>>,
    /// Per class: no transition leaves it. A long run ends in one of these;
    /// the states of open classes are visited finitely often.
    pub closed: Vec<bool>,
}

impl Irreducibility {
    /// States of the closed classes.
    pub fn recurrent(&self) -> Vec<usize> {
        let mut states: Vec<usize> =
            self.classes.iter().zip(&self.closed).filter(|(_, &c)| c).flat_map(|(class, _)| class.iter().copied()).collect();
        states.sort_unstable();
        states
    }
}

/// Builds the reachability graph under the union of all feasible actions and
/// splits the part reachable from `initial` into communicating classes.
pub fn check_irreducible(model: &MdpModel, initial: &SystemState) -> Irreducibility {
    let n = model.state_count();
    let mut forward: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, rows) in model.rows.iter().enumerate() {
        for row in rows {
            for &(t, p) in &row.next {
                if p > 0.0 {
                    forward[s].push(t);
                }
            }
        }
        forward[s].sort_unstable();
        forward[s].dedup();
    }

    let start = model.indexer.index(initial);
    let reached = reach(&forward, start, |_| true);
    let reachable: Vec<usize> = (0..n).filter(|&s| reached[s]).collect();

    let mut backward: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &s in &reachable {
        for &t in &forward[s] {
            backward[t].push(s);
        }
    }

    // Each class is the intersection of the forward and backward closures of
    // its smallest unassigned member.
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for &s in &reachable {
        if assigned[s] {
            continue;
        }
        let fwd = reach(&forward, s, |t| reached[t] && !assigned[t]);
        let bwd = reach(&backward, s, |t| reached[t] && !assigned[t]);
        let class: Vec<usize> = (0..n).filter(|&t| fwd[t] && bwd[t]).collect();
        for &t in &class {
            assigned[t] = true;
        }
        classes.push(class);
    }

    let mut class_of = vec![usize::MAX; n];
    for (k, class) in classes.iter().enumerate() {
        for &t in class {
            class_of[t] = k;
        }
    }
    let closed = classes
        .iter()
        .enumerate()
        .map(|(k, class)| class.iter().all(|&s| forward[s].iter().all(|&t| class_of[t] == k)))
        .collect();

    Irreducibility { irreducible: classes.len() == 1, reachable, classes, closed }
}

fn reach(graph: &[Vec<usize>], start: usize, allowed: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for &t in &graph[s] {
            if !seen[t] && allowed(t) {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}
