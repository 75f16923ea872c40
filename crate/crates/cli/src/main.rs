use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use twosettle::{load_scenarios, load_system, run_bid, run_myd, run_oracle, Framework, RunConfig};
use twosettle_cli::{run_study, write_outputs, StudySpec};

/// Exit status when a sweep point failed.
const EXIT_POINT_FAILED: u8 = 1;
/// Exit status for unreadable or invalid inputs.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "twosettle", version, about = "Two-settlement market studies for VRES bidding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write the report tables.
    Run {
        /// Study spec (JSON). Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Framework to run; repeat for several (myd, bid, std, oracle).
        #[arg(long = "framework")]
        frameworks: Vec<Framework>,
        /// Run sweep points concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a system file, a scenario file and optionally a study spec.
    Validate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Brute-force the bid grid and compare with the relaxation and mean bids.
    Oracle {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        /// Grid spacing, MW.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Largest grid the search may visit.
        #[arg(long, default_value_t = 1_000_000)]
        cap: u64,
    },
}

/// Error tagged with the exit status it maps to.
struct Failure(u8, anyhow::Error);

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure(EXIT_CONFIG, e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            system,
            scenarios,
            out,
            frameworks,
            parallel,
        } => cmd_run(config, system, scenarios, out, frameworks, parallel),
        Command::Validate {
            system,
            scenarios,
            config,
        } => cmd_validate(system, scenarios, config),
        Command::Oracle {
            system,
            scenarios,
            step,
            gamma,
            cap,
        } => cmd_oracle(system, scenarios, step, gamma, cap),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn cmd_run(
    config: Option<PathBuf>,
    system: Option<PathBuf>,
    scenarios: Option<PathBuf>,
    out: Option<PathBuf>,
    frameworks: Vec<Framework>,
    parallel: bool,
) -> Result<u8, Failure> {
    let mut spec = match &config {
        Some(path) => StudySpec::load(path).map_err(config_err)?,
        None => StudySpec::default(),
    };
    if let Some(p) = system {
        spec.system = p;
    }
    if let Some(p) = scenarios {
        spec.scenarios = p;
    }
    if let Some(p) = out {
        spec.output_dir = p;
    }
    if !frameworks.is_empty() {
        spec.frameworks = frameworks;
    }
    spec.parallel |= parallel;

    let outcome = run_study(&spec).map_err(config_err)?;
    write_outputs(&outcome, &spec.output_dir).map_err(|e| Failure(EXIT_CONFIG, e))?;
    for s in &outcome.summaries {
        for r in &s.reports {
            println!("{:<32} {:<6} total {:>14.2}  std {:>12.2}", s.label, r.framework, r.total, r.std);
        }
        for e in &s.errors {
            println!("{:<32} {:<6} failed: {}", s.label, e.framework, e.message);
        }
    }
    for p in outcome.manifest.points.iter().filter(|p| p.setup_error.is_some()) {
        println!("{:<32} skipped: {}", p.label, p.setup_error.as_deref().unwrap_or_default());
    }
    println!("wrote {}", spec.output_dir.display());
    Ok(if outcome.failed_points() > 0 { EXIT_POINT_FAILED } else { 0 })
}

fn cmd_validate(system: PathBuf, scenarios: Option<PathBuf>, config: Option<PathBuf>) -> Result<u8, Failure> {
    let sys = load_system(&system).map_err(config_err)?;
    println!(
        "system {}: {} buses, {} lines, {} units, {} VRES, {} loads",
        system.display(),
        sys.buses.len(),
        sys.lines.len(),
        sys.conventional_units.len(),
        sys.vres_units.len(),
        sys.loads.len()
    );
    if let Some(path) = scenarios {
        let set = load_scenarios(&path, &sys).map_err(config_err)?;
        println!("scenarios {}: {} scenarios, {} periods", path.display(), set.len(), set.num_periods());
    }
    if let Some(path) = config {
        let spec = StudySpec::load(&path).map_err(config_err)?;
        spec.validate()
            .with_context(|| format!("study spec {}", path.display()))
            .map_err(config_err)?;
        spec.config.validate(&sys).map_err(config_err)?;
        println!("study {}: {} sweep points", path.display(), twosettle_cli::sweep_points(&spec).len());
    }
    Ok(0)
}

fn cmd_oracle(system: PathBuf, scenarios: PathBuf, step: f64, gamma: f64, cap: u64) -> Result<u8, Failure> {
    let sys = load_system(&system).map_err(config_err)?;
    let set = load_scenarios(&scenarios, &sys).map_err(config_err)?;
    let config = RunConfig {
        gamma,
        oracle_step: step,
        oracle_cap: cap,
        ..RunConfig::default()
    };
    config.validate(&sys).map_err(config_err)?;
    let oracle = run_oracle(&sys, &set, &config).map_err(|e| Failure(EXIT_POINT_FAILED, e.into()))?;
    let bid = run_bid(&sys, &set, &config).map_err(|e| Failure(EXIT_POINT_FAILED, e.into()))?;
    let myd = run_myd(&sys, &set, &config).map_err(|e| Failure(EXIT_POINT_FAILED, e.into()))?;
    println!("grid points {}", oracle.costs.len());
    for run in [&oracle.run, &bid, &myd] {
        println!("{:<6} total {:>14.2}", run.report.framework, run.report.total);
        if let Some(b) = &run.bids {
            for (k, row) in b.0.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                println!("       {} [{}]", sys.vres_units[k].id, cells.join(", "));
            }
        }
    }
    let gap = (bid.report.total - oracle.run.report.total) / oracle.run.report.total.abs().max(1e-9);
    println!("relaxation vs grid optimum {:+.3}%", 100.0 * gap);
    Ok(0)
}
