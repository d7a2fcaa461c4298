use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::record::PathRecord;
use super::{HarnessError, RunConfig, RunContext};

/// Regenerates `record` under `config`, at the record's own save stride.
pub fn replay(record: &PathRecord, config: &RunConfig) -> Result<PathRecord, HarnessError> {
    let mut config = config.clone();
    config.save_stride = record.save_stride;
    let ctx = RunContext::new(config)?;
    replay_in(record, &ctx)
}

/// Regenerates `record` in an existing context (whose stride is used as is).
pub fn replay_in(record: &PathRecord, ctx: &RunContext) -> Result<PathRecord, HarnessError> {
    if record.config_hash != ctx.config_hash() {
        return Err(HarnessError::HashMismatch {
            record: record.config_hash.clone(),
            config: ctx.config_hash().to_string(),
        });
    }
    Ok(ctx.run_path(record.path_id))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub path_id: u64,
    pub identical: bool,
    /// JSON paths (`/stats/levels/0/sup_q0`, ...) where the records differ.
    pub mismatches: Vec<String>,
}

pub fn compare_records(original: &PathRecord, replayed: &PathRecord) -> ReplayReport {
    let a = serde_json::to_value(original).expect("record serializes");
    let b = serde_json::to_value(replayed).expect("record serializes");
    let mut mismatches = Vec::new();
    diff_values(&a, &b, String::new(), &mut mismatches);
    ReplayReport {
        path_id: original.path_id,
        identical: mismatches.is_empty(),
        mismatches,
    }
}

fn diff_values(a: &Value, b: &Value, at: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                match (x.get(k), y.get(k)) {
                    (Some(p), Some(q)) => diff_values(p, q, format!("{at}/{k}"), out),
                    _ => out.push(format!("{at}/{k}")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{at} (length {} vs {})", x.len(), y.len()));
                return;
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                diff_values(p, q, format!("{at}/{i}"), out);
            }
        }
        _ => {
            if a != b {
                out.push(if at.is_empty() { "/".into() } else { at });
            }
        }
    }
}

/// Every sample of `coarse` appears, with identical values, in `fine`.
pub fn is_sample_supersequence(coarse: &PathRecord, fine: &PathRecord) -> bool {
    if coarse.levels.len() != fine.levels.len() {
        return false;
    }
    let mut j = 0;
    for (i, &t) in coarse.times.iter().enumerate() {
        while j < fine.times.len() && fine.times[j] < t {
            j += 1;
        }
        if j == fine.times.len() || fine.times[j] != t {
            return false;
        }
        let same = coarse.levels.iter().zip(&fine.levels).all(|(c, f)| {
            c.q0[i] == f.q0[j]
                && c.q_delta[i] == f.q_delta[j]
                && c.psi[i] == f.psi[j]
                && c.phi[i] == f.phi[j]
                && c.zeta[i] == f.zeta[j]
                && c.partial_sum_norm[i] == f.partial_sum_norm[j]
        });
        if !same {
            return false;
        }
    }
    true
}
