//! Command-line front end for the scenario registry.
//!
//! Exit codes: 0 all checks pass, 1 some check failed, 2 configuration
//! error, 3 solver non-convergence, 4 domain/hypothesis violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geobridge::error::GeoError;
use geobridge::output::write_json_atomic;
use geobridge::scenario::{parse_config, registry, run_scenario, RunOutput, ScenarioConfig};

#[derive(Parser)]
#[command(name = "geobridge", version, about = "bridge-problem scenario runner")]
struct Cli {
    /// TOML configuration file (its `scenario` key may be overridden by
    /// the verb argument).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for result JSON (env GEOBRIDGE_OUT wins).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override a config key, e.g. --set n_steps=2000 --set mu.sigma=0.1.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Worker threads for run-all.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Seed for randomized sample points.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run one scenario and write <out>/<scenario>.json.
    Run { scenario: String },
    /// Run every scenario in the registry.
    RunAll,
    /// List scenarios with their descriptions and anchors.
    List,
    /// Run one scenario but only print its check lines (no files).
    Check { scenario: String },
}

fn exit_code_for(err: &GeoError) -> u8 {
    match err {
        GeoError::Config(_) | GeoError::Io(_) => 2,
        GeoError::NewtonFailure { .. } | GeoError::BlowUp { .. } => 3,
        GeoError::OutsideDomain { .. }
        | GeoError::DegenerateMetric { .. }
        | GeoError::NonPositiveDensity { .. }
        | GeoError::HypothesisViolation(_) => 4,
    }
}

fn build_config(cli: &Cli, scenario: &str) -> Result<ScenarioConfig, GeoError> {
    let mut sets: Vec<(String, String)> = Vec::new();
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| GeoError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        sets.push((k.to_string(), v.to_string()));
    }
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_config(&text, &sets)?
        }
        None => {
            let base = format!("scenario = {:?}\n", scenario);
            parse_config(&base, &sets)?
        }
    };
    cfg.scenario = scenario.to_string();
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    match std::env::var_os("GEOBRIDGE_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cli.out.clone(),
    }
}

fn print_checks(name: &str, out: &RunOutput) {
    for c in &out.checks {
        println!(
            "{name}: {} value={:.6e} tolerance={:.6e} {}",
            c.name,
            c.value,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn run_one(cli: &Cli, scenario: &str, write: bool) -> Result<bool, GeoError> {
    let cfg = build_config(cli, scenario)?;
    let out = run_scenario(&cfg)?;
    if write {
        let path = out_dir(cli).join(format!("{scenario}.json"));
        write_json_atomic(&path, &out.value)?;
    }
    print_checks(scenario, &out);
    Ok(out.all_pass)
}

fn run_all(cli: &Cli) -> Result<bool, GeoError> {
    let names: Vec<&'static str> = registry().iter().map(|i| i.name).collect();
    let workers = cli.workers.max(1);
    let dir = out_dir(cli);

    // Scenarios run concurrently in fixed-size batches; results are
    // collected and reported in registry order so output is independent
    // of scheduling.
    let mut outcomes: Vec<(String, Result<RunOutput, GeoError>)> = Vec::new();
    for batch in names.chunks(workers) {
        let handles: Vec<_> = batch
            .iter()
            .map(|&name| {
                let cfg = build_config(cli, name);
                std::thread::spawn(move || cfg.and_then(|c| run_scenario(&c)))
            })
            .collect();
        for (&name, h) in batch.iter().zip(handles) {
            let res = h.join().expect("scenario thread panicked");
            outcomes.push((name.to_string(), res));
        }
    }

    let mut all_pass = true;
    let mut first_err: Option<GeoError> = None;
    for (name, res) in outcomes {
        match res {
            Ok(out) => {
                write_json_atomic(&dir.join(format!("{name}.json")), &out.value)?;
                print_checks(&name, &out);
                all_pass &= out.all_pass;
            }
            Err(e) => {
                eprintln!("{name}: error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Run { scenario } => run_one(&cli, scenario, true),
        Verb::Check { scenario } => run_one(&cli, scenario, false),
        Verb::RunAll => run_all(&cli),
        Verb::List => {
            for info in registry() {
                println!("{:<24} {} [{}]", info.name, info.description, info.anchor);
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
