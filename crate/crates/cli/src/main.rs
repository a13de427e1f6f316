//! Command-line front end: loads an experiment config, applies overrides,
//! runs every cell and writes the CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use antijam::baselines::PolicyKind;
use antijam::harness::{load_config, run_experiment, Algo, ExperimentConfig};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "antijam", version, about = "Train anti-jamming defence policies and write learning curves as CSV")]
struct Args {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learning algorithm: q, dqn or dueling.
    #[arg(long)]
    algo: Option<Algo>,
    /// Policy scheme: proposed, htt, bm, ra or wd.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Training length in decision epochs.
    #[arg(long)]
    iterations: Option<u64>,
    /// Single seed, replacing the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_FAULT: u8 = 2;

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let mut cfg = match &args.config {
        Some(path) => match load_config(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(algo) = args.algo {
        cfg.algo = algo;
    }
    if let Some(policy) = args.policy {
        cfg.policy = policy;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let report = match run_experiment(&cfg, &args.out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for cell in &report.cells {
        match (&cell.fault, cell.final_throughput()) {
            (Some(fault), _) => eprintln!("{}: {fault}", cell.file_name),
            (None, Some(t)) => println!("{}: final throughput {t:.4}, jammer utility {:.4}", cell.file_name, cell.jammer_utility),
            (None, None) => println!("{}: no rows (zero iterations)", cell.file_name),
        }
    }
    if report.all_faulted() {
        ExitCode::from(EXIT_FAULT)
    } else {
        ExitCode::SUCCESS
    }
}
