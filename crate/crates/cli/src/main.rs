use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stark_cli::output::write_report;
use stark_cli::{exit_code, parse_config, run, Subcommand};

/// Numerical experiments for magnetic Schrödinger operators with
/// Aharonov–Bohm type potentials.
#[derive(Debug, Parser)]
#[command(name = "stark", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted `key=value` override, applied before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match parse_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output = o.display().to_string();
    }
    let report = match run(args.subcommand, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", args.subcommand.name());
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    for r in &report.rows {
        println!(
            "{} {} {} value={:e} tolerance={:e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.experiment,
            r.parameter,
            r.value,
            r.tolerance
        );
    }
    let dir = PathBuf::from(&cfg.output);
    match write_report(&dir, args.subcommand, &cfg, &report) {
        Ok(m) => {
            println!("wrote {} (config sha256 {}, seed {})", dir.display(), m.config_sha256, m.seed);
            if m.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
