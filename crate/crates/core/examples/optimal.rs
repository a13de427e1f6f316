//! Solves the default scenario exactly and reports the long-run behaviour of
//! the optimal policy next to the fixed WD rule.

use antijam::baselines::{wd_policy, PolicyKind};
use antijam::env::{enumerate_model, Env, EnvParams, JammerConfig, StateIndexer};
use antijam::harness::{compute_metrics, evaluate};
use antijam::seeded_rng;
use antijam::tabular::value_iteration;
use antijam::utility::average_utilities;

fn main() {
    let avg_power: f64 = std::env::args().nth(1).map_or(8.0, |s| s.parse().expect("P_avg"));
    let params = EnvParams::default();
    let jammer = JammerConfig::from_budget(avg_power);
    let env = Env::new(params.clone(), jammer.clone()).expect("valid scenario");
    let model = enumerate_model(&params, &jammer, 10_000).expect("model fits");
    let solution = value_iteration(&model, 0.95, 1e-10).expect("converges");
    let indexer = StateIndexer::new(&params);
    let slots = 100_000;

    let optimal = evaluate(&env, PolicyKind::Proposed, slots, &mut seeded_rng(1, 0), |s, _| {
        solution.policy[indexer.index(s)].expect("policy defined on valid states")
    });
    let wd = evaluate(&env, PolicyKind::Wd, slots, &mut seeded_rng(1, 0), |s, _| wd_policy(s, &params));
    for (name, traces) in [("optimal", &optimal), ("wd", &wd)] {
        let w = compute_metrics(traces);
        let (jammer_u, _) = average_utilities(traces, &params);
        println!(
            "{name:>8}: throughput {:.4}  loss {:.4}  pdr {:.4}  jammer utility {:.4}",
            w.avg_throughput(),
            w.packet_loss(),
            w.pdr(),
            jammer_u
        );
    }
}
