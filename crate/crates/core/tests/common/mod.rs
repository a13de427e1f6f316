//! Helpers shared by the integration and acceptance tests.

#![allow(dead_code)]

use antijam::env::{Env, EnvParams, JammerConfig, StepOutcome, SystemState};
use antijam::SimRng;
use rand::Rng;

/// One-packet queue, two-unit battery, arrivals and ambient energy every
/// slot, and a jammer that always answers at the 4 W level.
pub fn toy_params() -> EnvParams {
    EnvParams {
        queue_capacity: 1,
        energy_capacity: 2,
        arrival_prob: 1.0,
        ambient_prob: 1.0,
        ..EnvParams::default()
    }
}

pub fn toy_jammer() -> JammerConfig {
    let mut jammer = JammerConfig::default();
    jammer.attack_probs = vec![0.0, 1.0, 0.0, 0.0];
    jammer
}

pub fn toy_env() -> Env {
    Env::new(toy_params(), toy_jammer()).expect("toy scenario is valid")
}

pub fn default_env() -> Env {
    Env::new(EnvParams::default(), JammerConfig::default()).expect("default scenario is valid")
}

/// Checks that one step neither creates nor destroys packets or energy:
///
/// * `d' = d + arrived - delivered - dropped`
/// * `e' = e + harvested - spent - overflow`
pub fn check_conservation(before: &SystemState, out: &StepOutcome) -> Result<(), String> {
    let d = &out.diagnostics;
    let after = &out.next_state;
    let packets = i64::from(before.data) + i64::from(d.arrived) - i64::from(d.delivered) - i64::from(d.dropped());
    if packets != i64::from(after.data) {
        return Err(format!("packets: {before} -> {after}, expected queue {packets}, {d:?}"));
    }
    let energy = i64::from(before.energy) + i64::from(d.harvested_jammer) + i64::from(d.harvested_ambient)
        - i64::from(d.energy_spent)
        - i64::from(d.energy_overflow);
    if energy != i64::from(after.energy) {
        return Err(format!("energy: {before} -> {after}, expected battery {energy}, {d:?}"));
    }
    if out.reward != d.delivered {
        return Err(format!("reward {} differs from delivered {}", out.reward, d.delivered));
    }
    Ok(())
}

/// Plays `slots` slots with uniformly random feasible actions, checking
/// conservation on every step. Returns the number of steps taken.
pub fn random_slots(env: &mut Env, slots: u64, rng: &mut SimRng) -> Result<u64, String> {
    let mut steps = 0;
    let mut done = 0;
    while done < slots {
        let s = env.state();
        let mask = env.feasible();
        let a = mask.nth(rng.gen_range(0..mask.len())).expect("index within set");
        let out = env.step(a, rng).map_err(|e| e.to_string())?;
        check_conservation(&s, &out)?;
        steps += 1;
        if out.slot_complete {
            done += 1;
        }
    }
    Ok(steps)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Largest relative error between analytic and central-difference gradients
/// of `L = sum_a c_a Q(x)_a` over the parameter indices `coords`.
///
/// Relative error is `|g - n| / max(|g|, |n|, floor)`; the floor keeps
/// vanishing derivatives from turning rounding noise into huge ratios.
pub fn fd_relative_error(net: &antijam::nn::Mlp, x: &[f64], c: &[f64], coords: &[usize], h: f64, floor: f64) -> f64 {
    let pass = net.forward_pass(x).expect("input width matches");
    let analytic = net.backward(&pass, c).0;
    let base = net.params();
    let loss = |p: &[f64]| {
        let mut probe = net.clone();
        probe.set_params(p).expect("same length");
        let q = probe.forward(x).expect("input width matches");
        q.iter().zip(c).map(|(q, c)| q * c).sum::<f64>()
    };
    let mut worst: f64 = 0.0;
    let mut p = base.clone();
    for &i in coords {
        p[i] = base[i] + h;
        let plus = loss(&p);
        p[i] = base[i] - h;
        let minus = loss(&p);
        p[i] = base[i];
        let numeric = (plus - minus) / (2.0 * h);
        let g = analytic[i];
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(floor));
    }
    worst
}

/// Uniform random vector in `[-1, 1]^n`.
pub fn random_vec(n: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}
