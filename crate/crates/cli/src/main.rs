//! `guided-abc`: run experiments, compare posteriors and calibrate distances.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use guided_abc::config::{apply_override, RunConfig};
use guided_abc::metrics::{wasserstein1_systems, DEFAULT_COMPARE_SIZE};
use guided_abc::models::{mad_calibrate, ModelConfig};
use guided_abc::output::{read_particles, write_outputs};
use guided_abc::rng::stream;
use guided_abc::AbcError;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "guided-abc", version, about = "Sequential ABC with guided proposal samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path override such as `proposal.kind=hybrid` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "GUIDED_ABC_WORKERS")]
        workers: Option<usize>,
        /// Output directory (default: the config's `out`, else `guided-abc-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wasserstein-1 distance between two particle files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Equally weighted draws taken from each file.
        #[arg(long, default_value_t = DEFAULT_COMPARE_SIZE)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-summary MAD scales from prior-predictive simulations.
    Calibrate {
        /// Model name, e.g. `boom_bust`.
        #[arg(long)]
        model: String,
        /// Model parameter override such as `n_obs=50` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the scale record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code for configuration and validation failures.
const EXIT_CONFIG: u8 = 2;

fn fail(err: &AbcError) -> ExitCode {
    let (field, code) = match err {
        AbcError::Config { field, .. } => (Value::String(field.clone()), EXIT_CONFIG),
        _ => (Value::Null, 1),
    };
    eprintln!("{}", json!({ "error": err.to_string(), "field": field }));
    ExitCode::from(code)
}

fn config_error(field: &str, message: impl ToString) -> AbcError {
    AbcError::Config {
        field: field.into(),
        message: message.to_string(),
    }
}

fn cmd_run(
    config: PathBuf,
    mut overrides: Vec<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), AbcError> {
    if let Some(seed) = seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::from_path(&config, &overrides)?;
    let workers = workers.or(cfg.workers).unwrap_or(0);
    let dir = out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("guided-abc-out"));
    let problem = cfg.problem()?;
    let outputs = cfg.execute(&problem, workers)?;
    let manifest = write_outputs(&dir, &cfg, problem.distance.scale(), &outputs)?;
    for r in &manifest.runs {
        println!(
            "run {} (seed {}): {} iterations, final delta {}, stopped: {}",
            r.run,
            r.seed,
            r.iterations,
            r.final_delta,
            r.stop_reason.name()
        );
    }
    println!("results written to {}", dir.display());
    Ok(())
}

fn cmd_compare(a: PathBuf, b: PathBuf, m: usize, seed: u64) -> Result<(), AbcError> {
    if m == 0 {
        return Err(config_error("m", "must be positive"));
    }
    let sa = read_particles(&a)?.to_system()?;
    let sb = read_particles(&b)?.to_system()?;
    let mut rng = stream(seed, 0, 0);
    let w = wasserstein1_systems(&sa, &sb, m, &mut rng).map_err(|e| match e {
        AbcError::SizeCap { .. } => config_error("m", e),
        other => other,
    })?;
    println!("{}", json!({ "wasserstein1": w, "m": m, "seed": seed }));
    Ok(())
}

fn cmd_calibrate(model: String, overrides: Vec<String>, n: usize, seed: u64, out: Option<PathBuf>) -> Result<(), AbcError> {
    if n < 2 {
        return Err(config_error("n", "at least 2 simulations are needed"));
    }
    let mut doc = json!({ "name": model });
    for o in &overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: ModelConfig = serde_json::from_value(doc).map_err(|e| config_error("model", e))?;
    let built = cfg.build().map_err(|e| config_error("model", e))?;
    let distance = mad_calibrate(built.as_ref(), n, seed)?;
    let record = json!({ "model": cfg, "n": n, "seed": seed, "scale": distance.scale() });
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    match out {
        Some(path) => std::fs::write(&path, text + "\n").map_err(|e| AbcError::Io(format!("{}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            seed,
            workers,
            out,
        } => cmd_run(config, overrides, seed, workers, out),
        Command::Compare { a, b, m, seed } => cmd_compare(a, b, m, seed),
        Command::Calibrate {
            model,
            overrides,
            n,
            seed,
            out,
        } => cmd_calibrate(model, overrides, n, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
