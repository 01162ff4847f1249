use std::io;
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use idnc_cli::{parse_config, run_experiment, Options};

/// Simulate in-order IDNC broadcast schedulers and write metric CSVs.
#[derive(Parser, Debug)]
#[command(name = "idnc", version)]
struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of receivers.
    #[arg(long = "M")]
    m: Option<String>,
    /// Number of packets.
    #[arg(long = "N")]
    n: Option<String>,
    /// One value per receiver, or a single mean spread over [mean-0.2, mean+0.2].
    #[arg(long)]
    eps: Option<String>,
    /// Delivery-rate biasing exponent (default 2).
    #[arg(long)]
    alpha: Option<String>,
    /// Monte Carlo runs per cell (default 2000).
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// single or two.
    #[arg(long)]
    setting: Option<String>,
    /// Comma-separated scheduler names, or `all`.
    #[arg(long)]
    algorithm: Option<String>,
    /// receivers, packets or erasure.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long = "sweep-values")]
    sweep_values: Option<String>,
    /// Output directory (default `results`).
    #[arg(long)]
    out: Option<String>,
    /// pi or vi.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long = "state-cap")]
    state_cap: Option<String>,
    #[arg(long = "policy-out")]
    policy_out: Option<String>,
    #[arg(long = "policy-in")]
    policy_in: Option<String>,
    /// Write per-slot traces next to the CSVs.
    #[arg(long)]
    trace: bool,
    /// Print the initial IDNC graph's edge list.
    #[arg(long = "dump-graph")]
    dump_graph: bool,
    /// Starting feedback matrix file (M lines of N 0/1 digits).
    #[arg(long = "initial-sfm")]
    initial_sfm: Option<String>,
}

impl Cli {
    fn options(&self) -> Options {
        let pairs = [
            ("M", &self.m),
            ("N", &self.n),
            ("eps", &self.eps),
            ("alpha", &self.alpha),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("setting", &self.setting),
            ("algorithm", &self.algorithm),
            ("sweep", &self.sweep),
            ("sweep-values", &self.sweep_values),
            ("out", &self.out),
            ("solver", &self.solver),
            ("state-cap", &self.state_cap),
            ("policy-out", &self.policy_out),
            ("policy-in", &self.policy_in),
            ("initial-sfm", &self.initial_sfm),
        ];
        let mut options: Options =
            pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect();
        if self.trace {
            options.insert("trace".into(), "true".into());
        }
        if self.dump_graph {
            options.insert("dump-graph".into(), "true".into());
        }
        options
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let spec = parse_config(cli.config.as_deref(), &cli.options())?;
    let report = run_experiment(&spec, &mut io::stdout().lock())?;
    for path in &report.files {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}
