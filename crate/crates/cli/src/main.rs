use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use molrelay_cli::{exit, run, thread_cap, ExperimentConfig, ExperimentKind, RunError};

const UNITS: &str = "\
Config files hold `key = value` lines under [chain], [sweep] and [output].
Units: distances_um in micrometres, drift in m/s, diffusion in m^2/s,
degradation in 1/s, slot in seconds, molecules per slot. relay1_pd and
relay1_pfa pin the first relay's detection rates. Threshold experiments use
the destination's last-frame moments. MOLRELAY_THREADS caps worker threads.

Exit status: 0 on success, 1 on a config error, 2 on a numerical failure.";

#[derive(Parser, Debug)]
#[command(name = "molrelay", version, about = "Molecular relay chain experiments", after_help = UNITS)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Seed for Monte Carlo and randomized checks; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; overrides the config. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match thread_cap(std::env::var("MOLRELAY_THREADS").ok().as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("error: cannot size the worker pool: {e}");
                return ExitCode::from(exit::NUMERICAL);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::CONFIG);
        }
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(exit::CONFIG);
        }
    };
    let mut cfg = match ExperimentConfig::parse(cli.kind, &text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(exit::CONFIG);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(exit::CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::NUMERICAL);
        }
    };

    let csv = outcome.table.render();
    let out = cli.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    match &out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &csv) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(exit::CONFIG);
            }
            for line in &outcome.summary {
                println!("{line}");
            }
        }
        None => {
            print!("{csv}");
            for line in &outcome.summary {
                eprintln!("{line}");
            }
        }
    }
    if outcome.failed {
        eprintln!("error: experiment reported failure");
        return ExitCode::from(exit::NUMERICAL);
    }
    ExitCode::from(exit::OK)
}
