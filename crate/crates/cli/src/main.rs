use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trisim::scenario::Mode;
use trisim_cli::{cmd_cdf, cmd_compare, cmd_run, cmd_sweep_n, CdfArgs, CompareArgs, Overrides, RunArgs, SweepArgs};

/// Swarm localization with equilateral triangular formations.
#[derive(Parser)]
#[command(name = "trisim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of one scenario.
    Run {
        scenario: PathBuf,
        /// micro, macro or dead_reckoning.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Proposed method against dead reckoning at several wheel rates.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Wheel rates, rad/s.
        #[arg(long, value_delimiter = ',', default_value = "5.8,2.9")]
        omegas: Vec<f64>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Final error against the number of robots.
    SweepN {
        scenario: PathBuf,
        /// Robot counts.
        #[arg(long = "n", value_delimiter = ',', default_value = "4,6,8")]
        n_values: Vec<usize>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-maneuver placement errors under the vision controller.
    Cdf {
        scenario: PathBuf,
        #[arg(long, default_value_t = 60)]
        maneuvers: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}`, expected micro, macro or dead_reckoning"))
}

fn overrides(mode: Option<Mode>, c: Common) -> Overrides {
    Overrides {
        mode,
        runs: c.runs,
        seed: c.seed,
    }
}

fn main() {
    let cli = Cli::parse();
    let (mut out, mut err) = (io::stdout(), io::stderr());
    let code = match cli.command {
        Command::Run {
            scenario,
            mode,
            common,
            out_dir,
        } => cmd_run(
            &RunArgs {
                scenario,
                overrides: overrides(mode, common),
                out_dir,
            },
            &mut out,
            &mut err,
        ),
        Command::Compare {
            scenarios,
            omegas,
            common,
            out_dir,
        } => cmd_compare(
            &CompareArgs {
                scenarios,
                omegas,
                overrides: overrides(None, common),
                out_dir,
            },
            &mut out,
            &mut err,
        ),
        Command::SweepN {
            scenario,
            n_values,
            common,
            out_dir,
        } => cmd_sweep_n(
            &SweepArgs {
                scenario,
                n_values,
                overrides: overrides(None, common),
                out_dir,
            },
            &mut out,
            &mut err,
        ),
        Command::Cdf {
            scenario,
            maneuvers,
            seed,
            out_dir,
        } => cmd_cdf(
            &CdfArgs {
                scenario,
                maneuvers,
                seed,
                out_dir,
            },
            &mut out,
            &mut err,
        ),
    };
    std::process::exit(code);
}
