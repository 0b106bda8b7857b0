use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fpmdi_cli::commands::{
    cmd_calibrate, cmd_finite, cmd_keyrate, cmd_simulate, cmd_sweep, write_sweep_csv, CalibrateTarget, SweepRow,
};
use fpmdi_cli::config::RunConfig;
use fpmdi_cli::io::parse_counts;
use fpmdi_cli::{CliError, CliResult};

/// Security analysis of MDI-QKD with flawed sources.
#[derive(Parser)]
#[command(name = "fpmdi", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic key rate at the configured operating point.
    Keyrate {
        #[arg(long)]
        no_flaws: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-key analysis of a counts file.
    Finite {
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        no_flaws: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flaw parameters from calibration data.
    Calibrate {
        #[arg(value_enum)]
        target: Target,
        /// Input file, overriding the configured one.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Report file; for `all`, the flaw parameters as TOML.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pulse-level simulation producing a counts file.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_flaws: bool,
        /// Counts file to write; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotic key rate over the configured loss range.
    Sweep {
        #[arg(long)]
        no_flaws: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Phase,
    Pattern,
    Power,
    Extinction,
    All,
}

impl From<Target> for CalibrateTarget {
    fn from(t: Target) -> Self {
        match t {
            Target::Phase => CalibrateTarget::Phase,
            Target::Pattern => CalibrateTarget::Pattern,
            Target::Power => CalibrateTarget::Power,
            Target::Extinction => CalibrateTarget::Extinction,
            Target::All => CalibrateTarget::All,
        }
    }
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(out, &text)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Keyrate { no_flaws, csv, out } => {
            let r = cmd_keyrate(&cfg, no_flaws)?;
            if let Some(p) = csv {
                write_sweep_csv(&[SweepRow {
                    epsilon: None,
                    loss_db: r.report.loss_db,
                    mu_prime: r.report.mu_prime,
                    q_x: r.report.q_x,
                    e_b_x: r.report.e_b_x,
                    e_p: r.report.e_p,
                    rate_per_pulse: r.report.rate_per_pulse,
                    bps: r.report.bits_per_second,
                }], &p)?;
            }
            emit(&r, out.as_deref())
        }
        Command::Finite { counts, no_flaws, out } => {
            let path = match (counts, &cfg.paths.counts) {
                (Some(p), _) => p,
                (None, Some(p)) => cfg.resolve(p),
                (None, None) => return Err(CliError::Config("no counts file given (use --counts)".into())),
            };
            let record = parse_counts(&path)?;
            emit(&cmd_finite(&cfg, &record, no_flaws)?, out.as_deref())
        }
        Command::Calibrate { target, data, out } => {
            let target = CalibrateTarget::from(target);
            let report = cmd_calibrate(&cfg, target, data.as_deref())?;
            match (target, &report.flaws, out) {
                (CalibrateTarget::All, Some(flaws), Some(p)) => {
                    let text = toml::to_string(flaws).map_err(|e| CliError::Numerical(e.to_string()))?;
                    write_text(Some(&p), &text)?;
                    emit(&report, None)
                }
                (_, _, out) => emit(&report, out.as_deref()),
            }
        }
        Command::Simulate { seed, no_flaws, out } => {
            let (record, summary) = cmd_simulate(&cfg, seed, no_flaws)?;
            match out {
                Some(p) => {
                    write_text(Some(&p), &record.to_json())?;
                    emit(&summary, None)
                }
                None => {
                    eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
                    write_text(None, &record.to_json())
                }
            }
        }
        Command::Sweep { no_flaws, csv, out } => {
            let r = cmd_sweep(&cfg, no_flaws)?;
            if let Some(p) = csv {
                write_sweep_csv(&r.rows, &p)?;
            }
            emit(&r, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
