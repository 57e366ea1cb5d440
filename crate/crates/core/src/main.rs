use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use climfira::cli::{self, CliError, Options, SynthKind};
use climfira::config::DEFAULT_SEED;
use climfira::exec::{self, Execution};

#[derive(Parser)]
#[command(name = "climfira", version, about = "Weather shocks, local projections and functional impulse responses")]
struct Args {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monthly baselines and the regional historical-mean table.
    Baseline,
    /// Regional anomaly series and thresholds.
    Anomaly,
    /// Thresholded shock series.
    Shocks,
    /// Local-projection battery.
    Lp,
    /// Associated factors between prices and a climate field.
    Factors,
    /// Functional impulse responses to spatial shocks.
    Fira,
    /// Writes a synthetic fixture and its config into `--out`.
    Synth {
        #[arg(value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Historical,
    Planted,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut opts = Options { out: args.out.clone(), seed: args.seed, quiet: args.quiet, exec: Execution::default() };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if n == 1 {
            opts.exec = Execution::Sequential;
        } else {
            exec::set_threads(n).map_err(CliError::Config)?;
        }
    }
    if let Command::Synth { kind } = args.command {
        let kind = match kind {
            Kind::Historical => SynthKind::Historical,
            Kind::Planted => SynthKind::Planted,
        };
        let out = args.out.unwrap_or_else(|| PathBuf::from("fixture"));
        cli::cmd_synth(kind, &out, args.seed.unwrap_or(DEFAULT_SEED), &opts)?;
        return Ok(());
    }
    let cfg = cli::load_config(&args.config, &opts)?;
    match args.command {
        Command::Baseline => cli::cmd_baseline(&cfg, &opts).map(drop),
        Command::Anomaly => cli::cmd_anomaly(&cfg, &opts).map(drop),
        Command::Shocks => cli::cmd_shocks(&cfg, &opts).map(drop),
        Command::Lp => cli::cmd_lp(&cfg, &opts).map(drop),
        Command::Factors => cli::cmd_factors(&cfg, &opts).map(drop),
        Command::Fira => cli::cmd_fira(&cfg, &opts).map(drop),
        Command::Synth { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
