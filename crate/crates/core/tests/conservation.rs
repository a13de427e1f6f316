//! Packet and energy bookkeeping over random trajectories and random
//! scenario parameters.

mod common;

use antijam::env::{Env, EnvParams, Epoch, JammerConfig, SystemState};
use antijam::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

use common::{check_conservation, random_slots};

#[test]
fn default_scenario_conserves() {
    let mut env = common::default_env();
    let mut rng = seeded_rng(11, 0);
    let steps = random_slots(&mut env, 50_000, &mut rng).unwrap();
    // Random play deceives about a third of the time at epoch one.
    assert!(steps > 55_000, "{steps}");
}

#[test]
fn second_epoch_only_follows_deception() {
    let mut env = common::default_env();
    let mut rng = seeded_rng(12, 0);
    for _ in 0..20_000 {
        let s = env.state();
        let mask = env.feasible();
        let a = mask.nth(rng.gen_range(0..mask.len())).unwrap();
        let out = env.step(a, &mut rng).unwrap();
        check_conservation(&s, &out).unwrap();
        match (s.epoch(), out.slot_complete) {
            (Epoch::First, false) => assert_eq!(out.next_state.epoch(), Epoch::Second),
            (_, true) => assert_eq!(out.next_state.epoch(), Epoch::First),
            (Epoch::Second, false) => panic!("a slot never has a third epoch"),
        }
        // The jammer level seen at epoch two is the one drawn at epoch one.
        if s.epoch() == Epoch::Second {
            assert_eq!(out.diagnostics.jammer_level > 0, s.jammed);
        }
    }
}

#[test]
fn queue_and_battery_stay_in_bounds() {
    let mut env = common::default_env();
    let mut rng = seeded_rng(13, 0);
    for _ in 0..20_000 {
        let mask = env.feasible();
        let a = mask.nth(rng.gen_range(0..mask.len())).unwrap();
        let out = env.step(a, &mut rng).unwrap();
        assert!(out.next_state.data <= 10 && out.next_state.energy <= 10);
    }
}

fn scenario() -> impl Strategy<Value = (EnvParams, f64, u64)> {
    (1u32..=12, 2u32..=12, 1u32..=4, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=0.2f64, 0.0..=10.0f64, any::<u64>()).prop_map(
        |(d, e, k, lambda, p_e, p_miss, p_avg, seed)| {
            let params = EnvParams {
                queue_capacity: d,
                energy_capacity: e,
                arrival_batch: k,
                arrival_prob: lambda,
                ambient_prob: p_e,
                miss_prob: p_miss,
                ..EnvParams::default()
            };
            (params, p_avg, seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_scenarios_conserve((params, p_avg, seed) in scenario()) {
        let mut env = Env::new(params, JammerConfig::from_budget(p_avg)).unwrap();
        let mut rng = seeded_rng(seed, 0);
        random_slots(&mut env, 2_000, &mut rng).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn every_start_state_conserves(d in 0u32..=10, e in 0u32..=10, seed in any::<u64>()) {
        let mut env = common::default_env();
        env.reset(SystemState::slot_start(d, e)).unwrap();
        let mut rng = seeded_rng(seed, 0);
        random_slots(&mut env, 20, &mut rng).map_err(TestCaseError::fail)?;
    }
}
