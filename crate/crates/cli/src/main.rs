//! `psys`: scenario-driven runner for particle-system stationarity
//! checks, convolution/transform oracles, and Monte Carlo simulation.
//!
//! Exit codes: 0 the scenario's `expected` annotation is met, 1 verdict
//! mismatch, 2 configuration error, 3 unsupported request.

mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use psys_core::measures::MeasureError;
use psys_core::simulate::SimError;
use scenario::{run_br, run_check, run_oracle, run_simulate, scenario_hash, Scenario};

#[derive(Parser)]
#[command(name = "psys", version, about = "particle-system stationarity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports, CSVs and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rayon thread count (results are identical at any value).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an analytic stationarity checker.
    Check(RunArgs),
    /// Run a convolution or transform-identity oracle.
    Oracle(RunArgs),
    /// Simulate the particle system and tabulate empirical intensities.
    Simulate(RunArgs),
    /// Simulate the Brown-Resnick max-stable process.
    Br(RunArgs),
}

type CommandResult = anyhow::Result<(bool, Vec<String>, serde_json::Value)>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&RunArgs, fn(&Scenario, u64, &Path) -> CommandResult) =
        match &cli.command {
            Command::Check(a) => (a, cmd_check),
            Command::Oracle(a) => (a, cmd_oracle),
            Command::Simulate(a) => (a, cmd_simulate),
            Command::Br(a) => (a, cmd_br),
        };

    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("psys: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("psys: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let scenario: Scenario = match serde_json::from_slice(&bytes) {
        Ok(s) => s,
        Err(e) => {
            eprintln!(
                "psys: {} line {} column {}: {e}",
                args.config.display(),
                e.line(),
                e.column()
            );
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("psys: cannot create {}: {e}", args.out.display());
        return ExitCode::from(2);
    }
    let seed = args.seed.unwrap_or(scenario.seed);

    match runner(&scenario, seed, &args.out) {
        Ok((verdict, outputs, extra)) => {
            let mut manifest = json!({
                "scenario": scenario.name,
                "seed": seed,
                "scenario_hash": format!("{:016x}", scenario_hash(&bytes)),
                "expected": scenario.expected,
                "verdict": verdict,
                "expectation_met": scenario.expected.matches(verdict),
                "outputs": outputs,
            });
            if let (Some(doc), Some(add)) = (manifest.as_object_mut(), extra.as_object()) {
                for (k, v) in add {
                    doc.insert(k.clone(), v.clone());
                }
            }
            let path = args.out.join(format!("{}_manifest.json", scenario.name));
            if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
            {
                eprintln!("psys: cannot write manifest: {e}");
                return ExitCode::from(2);
            }
            if scenario.expected.matches(verdict) {
                println!("{}: expectation met (verdict {})", scenario.name, verdict);
                ExitCode::SUCCESS
            } else {
                println!(
                    "{}: verdict {} does not match expected {:?}",
                    scenario.name, verdict, scenario.expected
                );
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let code = classify_error(&e);
            eprintln!("psys: {e:#}");
            ExitCode::from(code)
        }
    }
}

/// Unsupported-request errors exit 3, everything else is a config error.
fn classify_error(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(m) = cause.downcast_ref::<MeasureError>() {
            if matches!(m, MeasureError::SignedMeasure | MeasureError::UnsupportedSubspace) {
                return 3;
            }
        }
        if let Some(s) = cause.downcast_ref::<SimError>() {
            if matches!(s, SimError::Measure(MeasureError::SignedMeasure)) {
                return 3;
            }
        }
        if let Some(g) = cause.downcast_ref::<psys_core::transform::GridError>() {
            if matches!(g, psys_core::transform::GridError::UnsupportedKernel) {
                return 3;
            }
        }
    }
    2
}

fn cmd_check(scenario: &Scenario, _seed: u64, out: &Path) -> CommandResult {
    let outcome = run_check(scenario)?;
    let name = format!("{}_report.json", scenario.name);
    std::fs::write(out.join(&name), outcome.report.to_json())?;
    Ok((outcome.verdict, vec![name], json!({})))
}

fn cmd_oracle(scenario: &Scenario, _seed: u64, out: &Path) -> CommandResult {
    let outcome = run_oracle(scenario)?;
    let name = format!("{}_oracle.json", scenario.name);
    let doc = json!({
        "residuals": outcome.residuals,
        "threshold": outcome.threshold,
        "stationary": outcome.verdict,
    });
    std::fs::write(out.join(&name), serde_json::to_string_pretty(&doc)?)?;
    Ok((outcome.verdict, vec![name], json!({"residuals": outcome.residuals})))
}

fn cmd_simulate(scenario: &Scenario, seed: u64, out: &Path) -> CommandResult {
    let outcome = run_simulate(scenario, seed)?;
    let csv_name = format!("{}_points.csv", scenario.name);
    std::fs::write(out.join(&csv_name), &outcome.csv)?;
    let summary_name = format!("{}_summary.json", scenario.name);
    let doc = json!({
        "mean_points_per_replicate": outcome.mean_points_per_replicate,
        "truncation_delta": outcome.truncation_delta,
        "bin_counts": outcome.bin_counts,
    });
    std::fs::write(out.join(&summary_name), serde_json::to_string_pretty(&doc)?)?;
    let extra = json!({"truncation_delta": outcome.truncation_delta});
    Ok((outcome.verdict, vec![csv_name, summary_name], extra))
}

fn cmd_br(scenario: &Scenario, seed: u64, out: &Path) -> CommandResult {
    let outcome = run_br(scenario, seed)?;
    let csv_name = format!("{}_maxstable.csv", scenario.name);
    std::fs::write(out.join(&csv_name), &outcome.csv)?;
    let summary_name = format!("{}_summary.json", scenario.name);
    let doc = json!({
        "ks_by_margin": outcome.ks_by_margin,
        "atoms_mean": outcome.atoms_mean,
        "exhausted_replicates": outcome.exhausted_replicates,
        "residual_bound": outcome.residual_bound,
    });
    std::fs::write(out.join(&summary_name), serde_json::to_string_pretty(&doc)?)?;
    let extra = json!({"residual_bound": outcome.residual_bound});
    Ok((outcome.verdict, vec![csv_name, summary_name], extra))
}
