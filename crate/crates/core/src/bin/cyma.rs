use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cyma_core::harness::{
    run, run_checks, CheckOptions, RunOptions, Suite, EXIT_CONFIG, EXIT_SOLVER,
};
use cyma_core::io::{read_field, sidecar_path, Field};

#[derive(Parser)]
#[command(
    name = "cyma",
    version,
    about = "Complex Monge-Ampere solvers on model tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave wall-times and timestamps out of report.json.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Run a property suite and print its report.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timestamp: bool,
        /// Flip the sign of dd^c before running (the suite must fail).
        #[arg(long, hide = true)]
        mutate_ddc_sign: bool,
    },
    /// Describe a CYF1 field file.
    Info { field: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            no_timestamp,
        } => {
            let outcome = run(&config, &RunOptions { out, no_timestamp });
            eprintln!("{}", outcome.message);
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::Check {
            suite,
            out,
            no_timestamp,
            mutate_ddc_sign,
        } => {
            let suite = match Suite::parse(&suite) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let opts = CheckOptions {
                ddc_sign: if mutate_ddc_sign { -1.0 } else { 1.0 },
                timing: !no_timestamp,
            };
            let report = run_checks(suite, &opts);
            for c in &report.checks {
                let measured = c
                    .measured
                    .map_or_else(|| "n/a".to_string(), |m| format!("{m:.3e}"));
                eprintln!(
                    "{} {:<36} {} {} {:e}{}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.id,
                    measured,
                    serde_json::to_value(c.relation)
                        .unwrap()
                        .as_str()
                        .unwrap_or(""),
                    c.threshold,
                    c.error
                        .as_ref()
                        .map_or(String::new(), |e| format!("  ({e})")),
                );
            }
            let json = report.to_json();
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, &json) {
                        eprintln!("cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_SOLVER as u8);
                    }
                }
                None => print!("{json}"),
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_SOLVER as u8)
            }
        }
        Command::Info { field } => match read_field(&field) {
            Ok(f) => {
                let grid = f.grid();
                println!("kind: {:?}", f.kind());
                println!(
                    "n: {}  res: {}  periods: {:?}",
                    grid.n(),
                    grid.res(),
                    grid.periods()
                );
                match &f {
                    Field::Scalar(s) => {
                        println!(
                            "min: {:e}  max: {:e}  mean: {:e}",
                            s.min(),
                            s.max(),
                            s.mean()
                        );
                        println!("spectral tail: {:e}", s.spectral_tail());
                    }
                    Field::Hermitian(h) => println!("min eigenvalue: {:e}", h.min_eig()),
                }
                let side = sidecar_path(&field);
                if side.exists() {
                    println!("sidecar: {}", side.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                let code = match &e {
                    cyma_core::Error::Format(f) => f.code(),
                    _ => 1,
                };
                ExitCode::from(code)
            }
        },
    }
}
