//! Scenario runner and report emitter for the fiber-link simulator.

mod config;
mod error;
mod scenario;

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fiberq::report::{parse_records, FieldValue, Record};

use config::ScenarioConfig;
use error::{CliError, ErrorClass};
use scenario::{run_scenario, Pipeline, Scenario};

/// Environment variable pointing at the default scenario file.
const CONFIG_ENV: &str = "FIBERQ_CONFIG";
const DEFAULT_CONFIG: &str = "config/scenario.toml";

#[derive(Parser)]
#[command(
    name = "fiberq",
    about = "Deployed-fiber quantum link noise simulator and protocol testbench",
    version
)]
struct Cli {
    /// Scenario file; defaults to $FIBERQ_CONFIG, then config/scenario.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated duration in seconds; overrides the pipeline default.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Output directory; overrides the scenario file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seed list for batch runs (out/seed-N/...).
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Worker threads for batch runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paired frequency noise and fit the variance decomposition.
    CharacterizePhase,
    /// Simulate the wind-driven polarization walk and fit the drift power law.
    CharacterizePolarization,
    /// Simulate thermal path-delay drift and fit the temperature slopes.
    CharacterizeDelay,
    /// Run the full time-bin qubit distribution session.
    RunProtocol {
        /// Also write a per-event log (events.tsv).
        #[arg(long)]
        event_log: bool,
    },
    /// Pretty-print previously written report files.
    Report {
        /// Report files produced by the other subcommands.
        files: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.class.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (pipeline, event_log) = match &cli.command {
        Command::CharacterizePhase => (Pipeline::CharacterizePhase, false),
        Command::CharacterizePolarization => (Pipeline::CharacterizePolarization, false),
        Command::CharacterizeDelay => (Pipeline::CharacterizeDelay, false),
        Command::RunProtocol { event_log } => (Pipeline::RunProtocol, *event_log),
        Command::Report { files } => return report_command(files),
    };

    let config = load_config(&cli)?;
    let out_root = cli.out.clone().unwrap_or_else(|| config.scenario.out_dir.clone());
    let base_seed = cli.seed.unwrap_or(config.scenario.seed);

    let seeds: Vec<u64> = match &cli.seeds {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim().parse::<u64>().map_err(|_| {
                    CliError::new(ErrorClass::Config, format!("bad seed {s:?} in --seeds"))
                })
            })
            .collect::<Result<_, _>>()?,
        None => vec![base_seed],
    };

    let scenarios: Vec<Scenario> = seeds
        .iter()
        .map(|&seed| Scenario {
            config: config.clone(),
            pipeline,
            seed,
            // Batch runs get per-seed directories with deterministic names.
            out_dir: if seeds.len() == 1 {
                out_root.clone()
            } else {
                out_root.join(format!("seed-{seed}"))
            },
            duration_override_s: cli.duration,
            event_log,
        })
        .collect();

    if scenarios.len() == 1 || cli.jobs <= 1 {
        for s in &scenarios {
            describe(run_scenario(s)?);
        }
        return Ok(());
    }

    // Independent seeds run in parallel; output naming stays deterministic.
    let jobs = cli.jobs.min(scenarios.len());
    let queue = std::sync::Mutex::new(scenarios.iter());
    let results: Vec<Result<Vec<PathBuf>, CliError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..jobs {
            handles.push(scope.spawn(|| {
                let mut local = Vec::new();
                loop {
                    let next = queue.lock().unwrap().next();
                    match next {
                        Some(s) => local.push(run_scenario(s)),
                        None => break local,
                    }
                }
            }));
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for r in results {
        describe(r?);
    }
    Ok(())
}

fn describe(paths: Vec<PathBuf>) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    if let Some(path) = &cli.config {
        return ScenarioConfig::load(path);
    }
    if let Ok(path) = std::env::var(CONFIG_ENV) {
        if !path.is_empty() {
            return ScenarioConfig::load(PathBuf::from(path).as_path());
        }
    }
    let default = PathBuf::from(DEFAULT_CONFIG);
    if default.exists() {
        return ScenarioConfig::load(&default);
    }
    Ok(ScenarioConfig::default())
}

/// Renders record files as aligned per-kind tables.
fn report_command(files: &[PathBuf]) -> Result<(), CliError> {
    if files.is_empty() {
        return Err(CliError::new(
            ErrorClass::Config,
            "report needs at least one record file",
        ));
    }
    let mut groups: BTreeMap<String, Vec<Record>> = BTreeMap::new();
    for path in files {
        let file = std::fs::File::open(path).map_err(|e| {
            CliError::new(ErrorClass::Io, format!("{}: {e}", path.display()))
        })?;
        for record in parse_records(BufReader::new(file))? {
            groups.entry(record.name.clone()).or_default().push(record);
        }
    }
    for (name, records) in &groups {
        println!("== {name}");
        let keys: Vec<String> = records[0].fields.iter().map(|(k, _)| k.clone()).collect();
        let mut rows: Vec<Vec<String>> = vec![keys.clone()];
        for r in records {
            rows.push(
                keys.iter()
                    .map(|k| match r.get(k) {
                        Some(FieldValue::Float(v)) => format!("{v:.6e}"),
                        Some(FieldValue::Int(v)) => v.to_string(),
                        Some(FieldValue::Text(v)) => v.clone(),
                        None => "-".to_string(),
                    })
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..keys.len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            println!("  {}", line.join("  "));
        }
        println!();
    }
    Ok(())
}
