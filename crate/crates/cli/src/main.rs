use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fmbridge_core::error::HarnessError;
use fmbridge_core::harness::{self, report_table, RunConfig, RunReport, SystemSelector};

/// Evaluate language-model agents, multi-agent systems and planners that
/// can call domain foundation models.
#[derive(Parser)]
#[command(name = "fmbridge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a system over every benchmark instance and write a report.
    Run {
        #[arg(long)]
        bench: PathBuf,
        /// llm | eywa-agent | mas:<topology> | orchestra
        #[arg(long)]
        system: String,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Print the CSV table instead of the text table.
        #[arg(long)]
        csv: bool,
    },
    /// Score a predictions file (JSON lines of {"index","prediction"}).
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Render one or more saved reports as a per-domain table.
    Report {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Serve the bundled mock backends over HTTP until interrupted.
    ServeMock {
        #[arg(long, default_value_t = 8765)]
        port: u16,
    },
    /// Convert a CSV benchmark to JSON lines.
    Convert {
        #[arg(long = "csv")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_table(reports: &[RunReport], csv: bool) {
    let table = report_table(reports);
    print!("{}", if csv { table.csv } else { table.text });
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            bench,
            system,
            registry,
            workers,
            out,
            seed,
            repeats,
            csv,
        } => {
            if workers == 0 {
                return Err(HarnessError::Config("--workers must be at least 1".into()));
            }
            let config = RunConfig {
                bench,
                system: system.parse::<SystemSelector>()?,
                registry,
                workers,
                seed,
                out,
                repeats,
            };
            let report = harness::run(&config)?;
            print_table(std::slice::from_ref(&report), csv);
        }
        Command::Score { pred, bench, out, csv } => {
            let report = harness::score(&pred, &bench)?;
            if let Some(out) = out {
                harness::write_report(&report, out)?;
            }
            print_table(std::slice::from_ref(&report), csv);
        }
        Command::Report { inputs, csv } => {
            let reports = inputs.iter().map(harness::load_report).collect::<Result<Vec<_>, _>>()?;
            print_table(&reports, csv);
        }
        Command::ServeMock { port } => {
            let server = harness::serve_mock(port)?;
            println!("serving mock backends at {}", server.url());
            server.wait();
        }
        Command::Convert { input, out } => {
            let n = harness::convert(&input, &out)?;
            println!("wrote {n} instances to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
