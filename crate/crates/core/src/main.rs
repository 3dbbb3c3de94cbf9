use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand as ClapSubcommand};
use log::{error, info};

use combsense::harness::{run, HarnessError, RunOptions, RunSpec, Subcommand};

/// Comb reference-signal ambiguity and range-Doppler analysis.
#[derive(Parser)]
#[command(name = "combsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Delay-and-sum ambiguity surface (cross-ambiguity when targets are given).
    Af(Common),
    /// Range-Doppler periodogram of the post-FFT receiver.
    Rdmap(Common),
    /// Predicted side peaks, unambiguity regions and offsets.
    Predict(Common),
    /// Compare predictions with numeric surfaces; exit 2 on any mismatch.
    Verify(Common),
    /// Guard-interval extension table.
    GiDemo(Common),
}

#[derive(Args)]
struct Common {
    /// Run specification (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated artifact formats: csv, pgm, json, raw.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau_points: Option<usize>,
    #[arg(long)]
    fd_points: Option<usize>,
    /// Add per-stage wall-clock times to the report.
    #[arg(long)]
    timing: bool,
}

fn execute(sub: Subcommand, args: Common) -> Result<u8, HarnessError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", args.config.display())))?;
    let mut spec = RunSpec::from_toml(&text)?;
    if let Some(f) = args.format {
        spec.outputs.formats = f;
    }
    if let Some(s) = args.seed {
        spec.channel.seed = s;
    }
    if args.tau_points.is_some() {
        spec.grids.tau_points = args.tau_points;
    }
    if args.fd_points.is_some() {
        spec.grids.fd_points = args.fd_points;
    }
    let options = RunOptions { out_dir: args.out, timing: args.timing };
    let report = run(sub, &spec, &options)?;
    print!("{}", report.to_json());
    info!("{sub}: {} mismatches, artifacts {:?}", report.mismatch_count, report.artifacts);
    Ok(if report.mismatch_count > 0 { 2 } else { 0 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let (sub, args) = match cli.command {
        Command::Af(a) => (Subcommand::Af, a),
        Command::Rdmap(a) => (Subcommand::Rdmap, a),
        Command::Predict(a) => (Subcommand::Predict, a),
        Command::Verify(a) => (Subcommand::Verify, a),
        Command::GiDemo(a) => (Subcommand::GiDemo, a),
    };
    match execute(sub, args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
