use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deadcore_cli::{run_experiment, ExperimentSpec, Kind};

/// Dead-core free-boundary experiments driven by JSON configurations.
#[derive(Parser)]
#[command(name = "deadcore", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every case at every resolution.
    Solve(Common),
    /// Check the radial oracles and the solver against exact solutions.
    OracleCheck(Common),
    /// Fit growth and gradient exponents and run the geometric diagnostics.
    Sweep(Common),
    /// Dead-core radius on growing balls.
    Liouville(Common),
    /// Borderline runs with exponential exact solutions.
    Borderline(Common),
    /// Dead-core stability under boundary perturbations.
    Stability(Common),
    /// Solve, analyze and plot.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kinds, args): (&[Kind], Common) = match cli.command {
        Command::Solve(a) => (&[Kind::Solve], a),
        Command::OracleCheck(a) => (&[Kind::OracleCheck], a),
        Command::Sweep(a) => (&[Kind::ExponentSweep], a),
        Command::Liouville(a) => (&[Kind::Liouville], a),
        Command::Borderline(a) => (&[Kind::Borderline], a),
        Command::Stability(a) => (&[Kind::Stability], a),
        Command::Report(a) => (&[Kind::FullReport], a),
    };
    match run(kinds, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(kinds: &[Kind], args: Common) -> Result<bool, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut spec = ExperimentSpec::from_json(&text).map_err(|e| e.to_string())?;
    if !kinds.contains(&spec.kind) {
        return Err(format!("configuration kind `{}` does not match this subcommand", spec.kind));
    }
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let report = run_experiment(&spec).map_err(|e| e.to_string())?;
    for c in &report.checks {
        println!("{}", c.summary());
    }
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    Ok(failed == 0)
}
