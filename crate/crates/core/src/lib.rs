//! Discrete-time simulation of a transmitter that defends against a reactive
//! jammer by deception, jamming-signal energy harvesting, ambient backscatter
//! and rate adaptation, together with the learning agents that find its
//! defence policy.
//!
//! Layout:
//!
//! * [`env`] - the two-epoch slot dynamics, jammer strategy, exact model
//!   enumeration and the irreducibility check.
//! * [`utility`] - per-slot jammer utilities.
//! * [`agent`] - the learner interface and epsilon-greedy selection.
//! * [`tabular`] - Q-table learner and the value-iteration oracle.
//! * [`nn`] - a small fully connected network with hand-written backprop and
//!   the dueling value/advantage combiner.
//! * [`deep`] - replay memory, target network and the DQN / dueling agents.
//! * [`baselines`] - HTT, BM, RA action restrictions and the WD rule.
//! * [`harness`] - configuration, training driver, metrics and CSV output.

pub mod agent;
pub mod baselines;
pub mod deep;
pub mod env;
pub mod harness;
pub mod nn;
pub mod tabular;
pub mod utility;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator every stochastic component draws from.
pub type SimRng = ChaCha8Rng;

/// Independent stream `stream` of the generator family rooted at `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
