use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nsg_harness::report::{write_csv, EXIT_INVALID};
use nsg_harness::{list_experiments, run, ExperimentConfig, VERSION};

#[derive(Parser)]
#[command(name = "nsg", version = VERSION, about = "Run the nonsmooth-geometry experiment suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report path; overrides `output.report`. Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV path; overrides `output.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write `runtime_ms` as null so reports are byte-reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// List the experiments.
    List,
    /// Print the tool version.
    Version,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("nsg: {msg}");
    ExitCode::from(code as u8)
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("NSG_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("NSG_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("nsg {VERSION}");
            ExitCode::SUCCESS
        }
        Command::Run { config, out, csv, no_timing } => {
            if let Err(e) = configure_threads() {
                return fail(EXIT_INVALID, e);
            }
            let cfg = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_INVALID, e),
            };
            let result = run(&cfg, !no_timing);
            for r in &result.report.records {
                let margin = r.margin.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
                eprintln!("{} {} [{}] margin {margin}", if r.satisfied { "PASS" } else { "FAIL" }, r.name, r.anchor);
            }
            if let Some(e) = &result.report.error {
                eprintln!("ERROR in check `{}`: {}", e.check, e.message);
            }
            let json = result.report.to_json();
            match out.or(cfg.output.report.clone()) {
                Some(path) => {
                    if let Err(e) = File::create(&path).and_then(|mut f| f.write_all(json.as_bytes())) {
                        return fail(EXIT_INVALID, format!("cannot write {}: {e}", path.display()));
                    }
                }
                None => print!("{json}"),
            }
            if let Some(path) = csv.or(cfg.output.csv.clone()) {
                if let Err(e) = File::create(&path).map_err(csv::Error::from).and_then(|f| write_csv(&result.csv, f)) {
                    return fail(EXIT_INVALID, format!("cannot write {}: {e}", path.display()));
                }
            }
            ExitCode::from(result.report.exit_code as u8)
        }
    }
}
