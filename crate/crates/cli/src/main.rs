use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use condreg_cli::config::{parse_sweep, ConfigError, ExperimentConfig};
use condreg_cli::plot::{render, PlotKind, Table};
use condreg_cli::rates_cmd::{evaluate, Formula};
use condreg_cli::{inspect, pipeline, sweep};

#[derive(Parser)]
#[command(name = "condreg", version, about = "Conditional generative distribution regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, train and evaluate every replicate of a config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config whose single list-valued key is swept.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a results or sweep CSV to SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "boxplot")]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        /// Grouping column (boxplot) or x column (line).
        #[arg(long)]
        group: Option<String>,
        /// Plotted metric column.
        #[arg(long)]
        value: Option<String>,
    },
    /// Evaluate a convergence-rate formula.
    Rates {
        #[arg(value_enum)]
        formula: Formula,
        /// `key=value` pairs, comma separated or repeated.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        params: Vec<String>,
    },
    /// Summarise a saved checkpoint.
    InspectCkpt { path: PathBuf },
}

fn config_failure(path: &Path, err: &ConfigError) -> ExitCode {
    eprintln!("invalid config {}:", path.display());
    for e in &err.0 {
        eprintln!("  {e}");
    }
    ExitCode::from(2)
}

fn runtime_failure(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_failure(&config, &e),
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            match pipeline::run(&cfg, &dir) {
                Ok(outcomes) => {
                    print!("{}", pipeline::results_csv(&outcomes));
                    ExitCode::SUCCESS
                }
                Err(e) => runtime_failure(e),
            }
        }
        Command::Sweep { config, out } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => return runtime_failure(format!("cannot read {}: {e}", config.display())),
            };
            let spec = match parse_sweep(&text) {
                Ok(s) => s,
                Err(e) => return config_failure(&config, &e),
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&spec.cells[0].output_dir));
            match sweep::run(&spec, &dir) {
                Ok(cells) => {
                    print!("{}", sweep::sweep_csv(&spec, &cells));
                    ExitCode::SUCCESS
                }
                Err(e) => runtime_failure(e),
            }
        }
        Command::Plot { csv, kind, out, group, value } => {
            let svg = Table::from_path(&csv).and_then(|t| render(&t, kind, group.as_deref(), value.as_deref()));
            match svg {
                Ok(svg) => match std::fs::write(&out, svg) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => runtime_failure(format!("cannot write {}: {e}", out.display())),
                },
                Err(e) => runtime_failure(format!("{}: {e}", csv.display())),
            }
        }
        Command::Rates { formula, params } => match evaluate(formula, &params) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::InspectCkpt { path } => match condreg::checkpoint::load(&path) {
            Ok(model) => {
                print!("{}", inspect::describe(&model));
                ExitCode::SUCCESS
            }
            Err(e) => runtime_failure(format!("{}: {e}", path.display())),
        },
    }
}
