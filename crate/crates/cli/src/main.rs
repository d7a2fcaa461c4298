use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use snse_core::cascade::{decompose, DataDecomposition};
use snse_core::harness::{
    compare_records, read_records_file, replay_in, run_ensemble, verify, worker_count, write_records_file, RunConfig,
    RunContext, Verdict, WORKERS_ENV,
};
use snse_core::spectral::FieldSnapshot;

const MANIFEST_SCHEMA: &str = "snse.decomposition/1";

#[derive(Parser)]
#[command(name = "snse", version, about = "Stochastic Navier-Stokes cascade simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a field snapshot into dyadic pieces.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps0: f64,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate an ensemble and write path records as JSONL.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the path count of the config.
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Check the ensemble bounds on a records file.
    Verify {
        #[arg(long)]
        records: PathBuf,
        /// Defaults to the configuration stored in the records file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Regenerate records from their seeds and compare bit for bit.
    Replay {
        #[arg(long)]
        record: PathBuf,
        /// Only replay this path.
        #[arg(long)]
        path_id: Option<u64>,
        /// Defaults to the configuration stored in the records file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Decompose { input, eps0, delta, k_max, out } => cmd_decompose(&input, eps0, delta, k_max, &out),
        Command::Run { config, out, paths, workers } => cmd_run(&config, &out, paths, workers),
        Command::Verify { records, config, report } => cmd_verify(&records, config.as_deref(), &report),
        Command::Replay { record, path_id, config } => cmd_replay(&record, path_id, config.as_deref()),
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().resolved()?.to_toml_string());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_decompose(input: &Path, eps0: f64, delta: f64, k_max: usize, out: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let field = FieldSnapshot::from_json(&text)?.to_field(None)?;
    let d = decompose(&field, eps0, delta, k_max)?;
    fs::create_dir_all(out)?;
    let mut pieces = Vec::with_capacity(d.levels());
    for (k, p) in d.pieces.iter().enumerate() {
        let name = format!("piece_{k}.json");
        fs::write(out.join(&name), FieldSnapshot::from_field(p, delta).to_json())?;
        pieces.push(name);
    }
    let bounds: Vec<f64> = (0..d.levels()).map(|k| DataDecomposition::level_bound(eps0, k)).collect();
    let shells: Vec<_> = d
        .shells
        .iter()
        .map(|s| json!({ "inner": s.inner, "outer": if s.outer.is_finite() { json!(s.outer) } else { json!(null) } }))
        .collect();
    let manifest = json!({
        "schema": MANIFEST_SCHEMA,
        "resolution": field.lattice().resolution(),
        "eps0": eps0,
        "delta": delta,
        "k_max": k_max,
        "shells": shells,
        "half_norms": d.half_norms,
        "level_bounds": bounds,
        "data_bounds": d.data_bounds,
        "pieces": pieces,
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("{} pieces written to {}", d.levels(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(config: &Path, out: &Path, paths: Option<usize>, workers: Option<usize>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(p) = paths {
        cfg.paths = p;
    }
    let cfg = cfg.resolved()?;
    let workers = workers.unwrap_or_else(worker_count);
    let (_, records) = run_ensemble(&cfg, workers)?;
    write_records_file(out, &cfg, &records)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    println!("{} paths written to {} ({failed} failed)", records.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(records: &Path, config: Option<&Path>, report: &Path) -> Result<ExitCode> {
    let (header, recs) = read_records_file(records)?;
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => header.config,
    };
    let rep = verify(&recs, &cfg)?;
    fs::write(report, serde_json::to_string_pretty(&rep)?)?;
    for (name, verdict) in rep.verdicts() {
        println!("{:<7} {name}", format!("{verdict:?}").to_uppercase());
    }
    if !rep.failed_paths.is_empty() {
        println!("FAIL    {} paths failed: {:?}", rep.failed_paths.len(), rep.failed_paths);
    }
    println!("overall: {:?}", rep.overall);
    Ok(if rep.overall == Verdict::Pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_replay(records: &Path, path_id: Option<u64>, config: Option<&Path>) -> Result<ExitCode> {
    let (header, recs) = read_records_file(records)?;
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => header.config,
    };
    let selected: Vec<_> = recs.iter().filter(|r| path_id.is_none_or(|id| r.path_id == id)).collect();
    if selected.is_empty() {
        bail!("no matching records in {}", records.display());
    }
    cfg.save_stride = selected[0].save_stride;
    let ctx = RunContext::new(cfg)?;
    let mut all_identical = true;
    for rec in selected {
        let again = replay_in(rec, &ctx)?;
        let rep = compare_records(rec, &again);
        all_identical &= rep.identical;
        println!("{}", serde_json::to_string(&rep)?);
    }
    Ok(if all_identical { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
