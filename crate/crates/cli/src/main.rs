use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rnnserve::replay;
use rnnserve::report::{to_csv_string, to_json_string};
use rnnserve::workload::write_trace_csv;
use rnnserve::{find_saturation, saturation_sweep, Error, MetricsReport, Scenario};

/// Batched RNN inference simulator.
#[derive(Parser)]
#[command(name = "rnnserve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    config: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy of a scenario at its configured arrival rate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the event log of every policy to this file. Runs are
        /// single-shot (no convergence extension) when logging.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run every policy of a scenario at each offered load.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated offered loads in requests per second.
        #[arg(long, value_delimiter = ',', required = true)]
        loads: Vec<f64>,
    },
    /// Search for the highest sustainable load of every policy.
    Saturate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        /// Relative width of the final bracket.
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Write the request trace of a scenario as CSV.
    Trace {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Arrival rate; defaults to the scenario's.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Replay the textbook micro-scenarios against their golden event logs.
    Replay {
        /// Regenerate the golden logs instead of checking them.
        #[arg(long)]
        bless: bool,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let scenario = Scenario::load(config)?;
    Ok(match seed {
        Some(s) => scenario.with_seed(s),
        None => scenario,
    })
}

fn emit(reports: &[MetricsReport], common: &Common) -> Result<(), Failure> {
    let text = match common.format {
        Format::Csv => to_csv_string(reports),
        Format::Json => to_json_string(reports),
    };
    match &common.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, log } => {
            let scenario = load(&common.config, common.seed)?;
            let reports = match log {
                None => scenario.run_all()?,
                Some(path) => {
                    let rate = scenario.workload.arrival_rate;
                    let mut reports = Vec::new();
                    let mut text = String::new();
                    for policy in &scenario.policies {
                        let (report, lines) = scenario.run_logged(policy, rate)?;
                        text.push_str(&format!("# {}\n", policy.label()));
                        for line in lines {
                            text.push_str(&line);
                            text.push('\n');
                        }
                        reports.push(report);
                    }
                    std::fs::write(&path, text)
                        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
                    reports
                }
            };
            emit(&reports, &common)
        }
        Command::Sweep { common, loads } => {
            let scenario = load(&common.config, common.seed)?;
            let mut reports = Vec::new();
            for policy in &scenario.policies {
                reports.extend(saturation_sweep(&scenario, policy, &loads)?.into_iter().map(|(_, r)| r));
            }
            emit(&reports, &common)
        }
        Command::Saturate {
            config,
            seed,
            lo,
            hi,
            tol,
        } => {
            let scenario = load(&config, seed)?;
            println!("policy,ceiling_rps,throughput_rps");
            for policy in &scenario.policies {
                let s = find_saturation(&scenario, policy, lo, hi, tol)?;
                println!("{},{},{}", policy.label(), s.ceiling_rps, s.throughput_rps);
            }
            Ok(())
        }
        Command::Trace {
            config,
            seed,
            rate,
            output,
        } => {
            let scenario = load(&config, seed)?;
            let trace = scenario.trace(rate.unwrap_or(scenario.workload.arrival_rate))?;
            write_trace_csv(&trace, &output)?;
            Ok(())
        }
        Command::Replay { bless } => {
            if bless {
                for path in replay::bless(Path::new(replay::GOLDEN_DIR))? {
                    println!("blessed {}", path.display());
                }
                println!("rebuild to embed the new logs");
                return Ok(());
            }
            let mut failed = false;
            for outcome in replay::check_all()? {
                match &outcome.diff {
                    None => println!("ok    {}", outcome.name),
                    Some(diff) => {
                        failed = true;
                        println!("FAIL  {}\n{diff}", outcome.name);
                    }
                }
            }
            if failed {
                Err(Failure::Runtime("replay diverged from golden logs".into()))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
