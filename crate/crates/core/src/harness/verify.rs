use serde::{Deserialize, Serialize};

use super::record::PathRecord;
use super::{HarnessError, RunConfig};
use crate::stopping::{
    headline_check, level_energy_check, markov_bound_check, pointwise_check, positivity_check, BoundReport,
    EnsembleStats, LevelEnergyReport, PathStats, PointwiseReport, PositivityReport, Regularity, StopThresholds,
    HeadlineReport, MIN_BOUND_PATHS,
};

pub const REPORT_SCHEMA: &str = "snse.report/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    fn of(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult<T> {
    pub name: String,
    pub verdict: Verdict,
    /// Why the check was skipped.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    pub detail: Option<T>,
}

impl<T> CheckResult<T> {
    fn new(name: impl Into<String>, pass: bool, detail: T) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::of(pass),
            note: None,
            detail: Some(detail),
        }
    }

    fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::Skipped,
            note: Some(note.into()),
            detail: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub config_hash: String,
    pub paths: usize,
    pub failed_paths: Vec<u64>,
    pub ensemble: Option<EnsembleStats>,
    pub probability_bounds: Vec<CheckResult<BoundReport>>,
    pub positivity: CheckResult<PositivityReport>,
    pub headline: CheckResult<HeadlineReport>,
    pub pointwise: CheckResult<PointwiseReport>,
    pub level_energy: Vec<LevelEnergyReport>,
    pub union_bound: Verdict,
    pub overall: Verdict,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.overall == Verdict::Pass
    }

    /// `(name, verdict)` for every check in report order.
    pub fn verdicts(&self) -> Vec<(String, Verdict)> {
        let mut out: Vec<(String, Verdict)> = self
            .probability_bounds
            .iter()
            .map(|c| (c.name.clone(), c.verdict.clone()))
            .collect();
        out.push((self.positivity.name.clone(), self.positivity.verdict.clone()));
        out.push((self.headline.name.clone(), self.headline.verdict.clone()));
        out.push((self.pointwise.name.clone(), self.pointwise.verdict.clone()));
        out.push(("union-bound".into(), self.union_bound.clone()));
        out
    }
}

/// Runs every ensemble check over the records of one run.
pub fn verify(records: &[PathRecord], config: &RunConfig) -> Result<VerifyReport, HarnessError> {
    let config = config.clone().resolved()?;
    let hash = config.hash();
    if let Some(r) = records.iter().find(|r| r.config_hash != hash) {
        return Err(HarnessError::HashMismatch {
            record: r.config_hash.clone(),
            config: hash,
        });
    }
    let failed_paths: Vec<u64> = records.iter().filter(|r| !r.is_ok()).map(|r| r.path_id).collect();
    let stats: Vec<PathStats> = records.iter().filter(|r| r.is_ok()).map(|r| r.stats.clone()).collect();
    let v = &config.verify;
    let m_thresholds = records
        .iter()
        .find(|r| r.is_ok())
        .map(|_| thresholds_from(&config))
        .transpose()?;

    let ensemble = if stats.is_empty() {
        None
    } else {
        Some(EnsembleStats::from_paths(&stats, config.p0).map_err(HarnessError::from)?)
    };

    let mut probability_bounds = Vec::new();
    if let Some(th) = &m_thresholds {
        let levels = th.m.len().min(v.bound_levels + 1);
        for k in 0..levels {
            for (reg, tag) in [(Regularity::Half, "half"), (Regularity::Delta, "delta")] {
                let name = format!("probability-bound/level-{k}/{tag}");
                if stats.len() < MIN_BOUND_PATHS {
                    probability_bounds.push(CheckResult::skipped(
                        name,
                        format!("{} paths, at least {MIN_BOUND_PATHS} needed", stats.len()),
                    ));
                    continue;
                }
                let r = markov_bound_check(&stats, th, k, reg, config.p0)?;
                probability_bounds.push(CheckResult::new(name, r.pass, r));
            }
        }
    }

    let positivity = if stats.is_empty() {
        CheckResult::skipped("positivity", "no successful paths")
    } else {
        let grid: Vec<f64> = v.t0_fractions.iter().map(|f| f * config.horizon).collect();
        let r = positivity_check(&stats, &grid)?;
        CheckResult::new("positivity", r.pass, r)
    };

    let headline = if stats.is_empty() {
        CheckResult::skipped("headline", "no successful paths")
    } else if config.headline_horizons().len() < 2 {
        CheckResult::skipped("headline", "fewer than two horizons")
    } else {
        let r = headline_check(&stats, config.eps0, config.mode, v.stability_tolerance, config.p0)?;
        CheckResult::new("headline", r.pass, r)
    };

    let pointwise = if stats.is_empty() {
        CheckResult::skipped("pointwise-control", "no successful paths")
    } else {
        let r = pointwise_check(
            &stats,
            config.eps_bar(),
            config.eps_sigma,
            config.dt,
            v.overshoot_constant,
            v.pointwise_levels,
        );
        CheckResult::new("pointwise-control", r.pass, r)
    };

    let level_energy = [Regularity::Half, Regularity::Delta]
        .into_iter()
        .map(|reg| level_energy_check(&stats, reg, v.pointwise_levels))
        .collect();

    let union_bound = match &ensemble {
        Some(e) => Verdict::of(e.union_bound_holds),
        None => Verdict::Skipped,
    };

    let mut report = VerifyReport {
        schema: REPORT_SCHEMA.to_string(),
        config_hash: hash,
        paths: records.len(),
        failed_paths,
        ensemble,
        probability_bounds,
        positivity,
        headline,
        pointwise,
        level_energy,
        union_bound,
        overall: Verdict::Pass,
    };
    let any_fail = !report.failed_paths.is_empty() || report.verdicts().iter().any(|(_, v)| *v == Verdict::Fail);
    report.overall = Verdict::of(!any_fail);
    Ok(report)
}

fn thresholds_from(config: &RunConfig) -> Result<StopThresholds, HarnessError> {
    let ctx = super::RunContext::new(config.clone())?;
    Ok(ctx.thresholds().clone())
}
