use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use super::record::{PathRecord, RunHeader, PATH_SCHEMA, RUN_SCHEMA};
use super::{HarnessError, RunConfig, RunContext};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SNSE_WORKERS";

/// Worker count from `SNSE_WORKERS`, else the number of available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs paths `0..config.paths` on `workers` threads; output is ordered by path id.
pub fn run_ensemble(config: &RunConfig, workers: usize) -> Result<(RunContext, Vec<PathRecord>), HarnessError> {
    let ctx = RunContext::new(config.clone())?;
    let records = run_paths(&ctx, 0..ctx.config().paths as u64, workers)?;
    Ok((ctx, records))
}

pub fn run_paths(
    ctx: &RunContext,
    ids: impl IntoIterator<Item = u64>,
    workers: usize,
) -> Result<Vec<PathRecord>, HarnessError> {
    let ids: Vec<u64> = ids.into_iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| ids.par_iter().map(|&id| ctx.run_path(id)).collect()))
}

pub fn write_records<W: Write>(mut out: W, config: &RunConfig, records: &[PathRecord]) -> Result<(), HarnessError> {
    serde_json::to_writer(&mut out, &RunHeader::new(config))?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_file(path: &Path, config: &RunConfig, records: &[PathRecord]) -> Result<(), HarnessError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_records(file, config, records)
}

/// Parses a records file: header line, then one path per line.
pub fn read_records<R: BufRead>(input: R) -> Result<(RunHeader, Vec<PathRecord>), HarnessError> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| HarnessError::Format("empty records file".into()))??;
    let header: RunHeader = serde_json::from_str(&header_line)?;
    if header.schema != RUN_SCHEMA {
        return Err(HarnessError::Format(format!("unknown run schema {:?}", header.schema)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PathRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Format(format!("record on line {}: {e}", i + 2)))?;
        if r.schema != PATH_SCHEMA {
            return Err(HarnessError::Format(format!("unknown path schema {:?}", r.schema)));
        }
        records.push(r);
    }
    Ok((header, records))
}

pub fn read_records_file(path: &Path) -> Result<(RunHeader, Vec<PathRecord>), HarnessError> {
    read_records(BufReader::new(std::fs::File::open(path)?))
}
