//! Stopping times of the cascade and Monte Carlo checks of the probability
//! bounds and headline energy estimates built on them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat::RatioEstimate;

#[derive(Debug, Error)]
pub enum StoppingError {
    #[error("level {level} is missing its {series} series")]
    MissingSeries { level: usize, series: &'static str },
    #[error("level {level}: time grid is not strictly increasing")]
    BadGrid { level: usize },
    #[error("{got} thresholds for {levels} levels")]
    ThresholdCount { got: usize, levels: usize },
    #[error("need at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A stopping time in `[0, ∞]`; `Never` means no crossing within the observed run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "time", rename_all = "kebab-case")]
pub enum StopTime {
    At(f64),
    Never,
}

impl StopTime {
    pub fn time(self) -> Option<f64> {
        match self {
            StopTime::At(t) => Some(t),
            StopTime::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, StopTime::Never)
    }

    /// `self < t`, with `Never` above every finite time.
    pub fn before(self, t: f64) -> bool {
        matches!(self, StopTime::At(s) if s < t)
    }

    pub fn min(self, other: Self) -> Self {
        if self.cmp_time(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn cmp_time(&self, other: &Self) -> Ordering {
        match (self, other) {
            (StopTime::At(a), StopTime::At(b)) => a.total_cmp(b),
            (StopTime::At(_), StopTime::Never) => Ordering::Less,
            (StopTime::Never, StopTime::At(_)) => Ordering::Greater,
            (StopTime::Never, StopTime::Never) => Ordering::Equal,
        }
    }
}

/// Sampled `Q_{k,0}` and `Q_{k,δ}` of one level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub t: Vec<f64>,
    pub q0: Vec<f64>,
    pub q_delta: Vec<f64>,
}

/// Crossing levels: `ε̄/2^k` for `Q_{k,0}` and `M_k` for `Q_{k,δ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopThresholds {
    pub eps_bar: f64,
    pub m: Vec<f64>,
}

impl StopThresholds {
    pub fn eps_level(&self, k: usize) -> f64 {
        self.eps_bar / 2f64.powi(k as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub horizon: f64,
    /// `τ_k`: first time `Q_{k,0} >= ε̄/2^k`.
    pub tau_eps: Vec<StopTime>,
    /// `ρ_k`: first time `Q_{k,δ} >= M_k`.
    pub rho: Vec<StopTime>,
    /// `τ^k = min_{j<=k} (τ_j ∧ ρ_j)`.
    pub tau_upto: Vec<StopTime>,
    /// `τ = min_k τ^k`.
    pub tau: StopTime,
}

impl StoppingRecord {
    pub fn from_parts(horizon: f64, tau_eps: Vec<StopTime>, rho: Vec<StopTime>) -> Self {
        let mut running = StopTime::Never;
        let tau_upto: Vec<StopTime> = tau_eps
            .iter()
            .zip(&rho)
            .map(|(a, b)| {
                running = running.min(a.min(*b));
                running
            })
            .collect();
        Self {
            horizon,
            tau: running,
            tau_eps,
            rho,
            tau_upto,
        }
    }

    pub fn levels(&self) -> usize {
        self.tau_eps.len()
    }
}

/// First time `series >= threshold`, linearly interpolated between samples.
pub fn first_crossing(t: &[f64], series: &[f64], threshold: f64) -> StopTime {
    let Some(i) = series.iter().position(|&q| q >= threshold) else {
        return StopTime::Never;
    };
    if i == 0 || series[i] == threshold {
        return StopTime::At(t[i]);
    }
    let (q0, q1) = (series[i - 1], series[i]);
    let frac = (threshold - q0) / (q1 - q0);
    StopTime::At((t[i - 1] + frac * (t[i] - t[i - 1])).min(t[i]))
}

pub fn detect_stops(
    levels: &[LevelSeries],
    thresholds: &StopThresholds,
    horizon: f64,
) -> Result<StoppingRecord, StoppingError> {
    if thresholds.m.len() != levels.len() {
        return Err(StoppingError::ThresholdCount {
            got: thresholds.m.len(),
            levels: levels.len(),
        });
    }
    let mut tau_eps = Vec::with_capacity(levels.len());
    let mut rho = Vec::with_capacity(levels.len());
    for (k, s) in levels.iter().enumerate() {
        if s.t.is_empty() {
            return Err(StoppingError::MissingSeries { level: k, series: "t" });
        }
        if s.q0.len() != s.t.len() {
            return Err(StoppingError::MissingSeries { level: k, series: "q0" });
        }
        if s.q_delta.len() != s.t.len() {
            return Err(StoppingError::MissingSeries { level: k, series: "q_delta" });
        }
        if s.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StoppingError::BadGrid { level: k });
        }
        tau_eps.push(first_crossing(&s.t, &s.q0, thresholds.eps_level(k)));
        rho.push(first_crossing(&s.t, &s.q_delta, thresholds.m[k]));
    }
    Ok(StoppingRecord::from_parts(horizon, tau_eps, rho))
}

/// Wilson score interval for `successes / n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const WILSON_Z: f64 = 1.96;

/// Per-level quantities of one path that the ensemble checks reduce over.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// `sup_t Q_{k,0}` over the whole simulated run.
    pub sup_q0: f64,
    /// `sup_t Q_{k,δ}` over the whole simulated run.
    pub sup_q_delta: f64,
    /// `‖v₀^(k)‖²_{H^{1/2}}` and `‖v₀^(k)‖²_{H^{1/2+δ}}`.
    pub data_energy: [f64; 2],
    /// `sup‖v^(k)‖²_{H^{1/2+α}} + ∫‖v^(k)‖²_{H^{3/2+α}}` up to `min(τ, T)`, `α ∈ {0, δ}`.
    pub energy: [f64; 2],
}

/// Running headline quantities of `u` at one horizon `h`, stopped at `τ`:
/// `sup_{t<=τ∧h} ‖u‖²_{H^{1/2}}` and `∫₀^{τ∧h} ‖u‖²_{H^{3/2}}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadlineSample {
    pub horizon: f64,
    pub sup_energy: f64,
    pub dissipation: f64,
}

impl HeadlineSample {
    pub fn total(&self) -> f64 {
        self.sup_energy + self.dissipation
    }
}

/// Everything the ensemble checks need from one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub stops: StoppingRecord,
    /// Last simulated time (`min(T, τ + grace)`).
    pub end_time: f64,
    pub levels: Vec<LevelStats>,
    pub headline: Vec<HeadlineSample>,
}

impl PathStats {
    fn stop(&self, k: usize, kind: Regularity) -> StopTime {
        match kind {
            Regularity::Half => self.stops.tau_eps[k],
            Regularity::Delta => self.stops.rho[k],
        }
    }

    /// `stop` happened before the horizon and no later than `τ`. Crossings in
    /// the grace window after `τ` do not count.
    fn within_window(&self, stop: StopTime) -> bool {
        stop.before(self.stops.horizon) && stop.cmp_time(&self.stops.tau) != std::cmp::Ordering::Greater
    }

    /// Level `k` crossed its threshold of the given kind up to `τ`.
    pub fn exceeded(&self, k: usize, kind: Regularity) -> bool {
        self.within_window(self.stop(k, kind))
    }

    /// Level `k` did not cross, and the path stopped (at another level) before the horizon.
    fn censored(&self, k: usize, kind: Regularity) -> bool {
        !self.exceeded(k, kind) && self.stops.tau.before(self.stops.horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    /// `Q_{k,0}` against `ε̄/2^k`.
    Half,
    /// `Q_{k,δ}` against `M_k`.
    Delta,
}

/// `p₀ / 2^{2k+2}`.
pub fn level_budget(p0: f64, k: usize) -> f64 {
    p0 / 4f64.powi(k as i32 + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelExceedance {
    pub level: usize,
    pub exceed_half: usize,
    pub exceed_delta: usize,
    /// Paths stopped before the horizon by another level, with neither
    /// threshold of this level crossed.
    pub censored: usize,
    pub freq_half: f64,
    pub freq_delta: f64,
    pub wilson_half: (f64, f64),
    pub wilson_delta: (f64, f64),
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub paths: usize,
    pub horizon: f64,
    pub p0: f64,
    pub stopped_before_horizon: usize,
    pub prob_tau: f64,
    pub wilson_tau: (f64, f64),
    /// Paths with `τ` never reached.
    pub censoring_rate: f64,
    pub levels: Vec<LevelExceedance>,
    /// `Σ_k p₀/2^{2k+2}` over the simulated levels.
    pub budget_sum: f64,
    /// `ℙ̂(τ^k < T) <= Σ_{j<=k} (exceedance_{j,0} + exceedance_{j,δ})` for every `k`.
    pub union_bound_holds: bool,
}

impl EnsembleStats {
    pub fn from_paths(paths: &[PathStats], p0: f64) -> Result<Self, StoppingError> {
        let first = paths.first().ok_or(StoppingError::TooFewPaths { min: 1, got: 0 })?;
        let horizon = first.stops.horizon;
        let levels = first.stops.levels();
        if paths.iter().any(|p| p.stops.levels() != levels) {
            return Err(StoppingError::InvalidArgument("paths disagree on the level count".into()));
        }
        let m = paths.len();
        let stopped = paths.iter().filter(|p| p.stops.tau.before(horizon)).count();
        let never = paths.iter().filter(|p| p.stops.tau.is_never()).count();
        let mut out_levels = Vec::with_capacity(levels);
        let mut union_ok = true;
        let mut cumulative = 0usize;
        for k in 0..levels {
            let exceed_half = paths.iter().filter(|p| p.exceeded(k, Regularity::Half)).count();
            let exceed_delta = paths.iter().filter(|p| p.exceeded(k, Regularity::Delta)).count();
            let censored = paths
                .iter()
                .filter(|p| p.censored(k, Regularity::Half) && p.censored(k, Regularity::Delta))
                .count();
            cumulative += exceed_half + exceed_delta;
            let upto = paths.iter().filter(|p| p.within_window(p.stops.tau_upto[k])).count();
            union_ok &= upto <= cumulative;
            out_levels.push(LevelExceedance {
                level: k,
                exceed_half,
                exceed_delta,
                censored,
                freq_half: exceed_half as f64 / m as f64,
                freq_delta: exceed_delta as f64 / m as f64,
                wilson_half: wilson_interval(exceed_half, m, WILSON_Z),
                wilson_delta: wilson_interval(exceed_delta, m, WILSON_Z),
                budget: level_budget(p0, k),
            });
        }
        Ok(Self {
            paths: m,
            horizon,
            p0,
            stopped_before_horizon: stopped,
            prob_tau: stopped as f64 / m as f64,
            wilson_tau: wilson_interval(stopped, m, WILSON_Z),
            censoring_rate: never as f64 / m as f64,
            budget_sum: (0..levels).map(|k| level_budget(p0, k)).sum(),
            levels: out_levels,
            union_bound_holds: union_ok,
        })
    }
}

pub const MIN_BOUND_PATHS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub level: usize,
    pub regularity: Regularity,
    pub paths: usize,
    pub exceedances: usize,
    /// Paths stopped by another level before the horizon, so this level was
    /// not observed up to `T`.
    pub censored: usize,
    pub frequency: f64,
    pub wilson: (f64, f64),
    pub budget: f64,
    /// `E[(sup Q)²] / threshold²` from the measured suprema.
    pub markov_bound: f64,
    /// `E[‖v₀^(k)‖²] / threshold²`, the data side of the Markov estimate.
    pub data_ratio: f64,
    pub pass: bool,
}

/// Compares `ℙ̂(sup_t Q_{k,α} >= threshold)` with the budget `p₀/2^{2k+2}`.
pub fn markov_bound_check(
    paths: &[PathStats],
    thresholds: &StopThresholds,
    k: usize,
    regularity: Regularity,
    p0: f64,
) -> Result<BoundReport, StoppingError> {
    if paths.len() < MIN_BOUND_PATHS {
        return Err(StoppingError::TooFewPaths {
            min: MIN_BOUND_PATHS,
            got: paths.len(),
        });
    }
    if k >= thresholds.m.len() || paths.iter().any(|p| p.levels.len() <= k || p.stops.levels() <= k) {
        return Err(StoppingError::InvalidArgument(format!("level {k} not present in every path")));
    }
    let m = paths.len();
    let (threshold, slot) = match regularity {
        Regularity::Half => (thresholds.eps_level(k), 0),
        Regularity::Delta => (thresholds.m[k], 1),
    };
    let exceedances = paths.iter().filter(|p| p.exceeded(k, regularity)).count();
    let censored = paths.iter().filter(|p| p.censored(k, regularity)).count();
    let (lo, hi) = wilson_interval(exceedances, m, WILSON_Z);
    let sup = |p: &PathStats| match regularity {
        Regularity::Half => p.levels[k].sup_q0,
        Regularity::Delta => p.levels[k].sup_q_delta,
    };
    let second_moment = paths.iter().map(|p| sup(p).powi(2)).sum::<f64>() / m as f64;
    let data = paths.iter().map(|p| p.levels[k].data_energy[slot]).sum::<f64>() / m as f64;
    let budget = level_budget(p0, k);
    Ok(BoundReport {
        level: k,
        regularity,
        paths: m,
        exceedances,
        censored,
        frequency: exceedances as f64 / m as f64,
        wilson: (lo, hi),
        budget,
        markov_bound: second_moment / (threshold * threshold),
        data_ratio: data / (threshold * threshold),
        pass: hi <= budget,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityPoint {
    pub t0: f64,
    pub stopped: usize,
    pub probability: f64,
    pub wilson: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub paths: usize,
    pub points: Vec<PositivityPoint>,
    /// Least-squares line `ℙ̂(τ < t₀) ≈ slope·t₀ + intercept`.
    pub slope: f64,
    pub intercept: f64,
    pub intercept_tolerance: f64,
    /// For every `t₀` with `t₀/2` also on the grid: the intervals of
    /// `ℙ̂(τ < t₀/2)` and `ℙ̂(τ < t₀)/2` overlap.
    pub halving_consistent: bool,
    pub pass: bool,
}

/// `ℙ̂(τ < t₀)` along a grid of `t₀`, a linear fit, and the halving check.
pub fn positivity_check(paths: &[PathStats], t0_grid: &[f64]) -> Result<PositivityReport, StoppingError> {
    if paths.is_empty() {
        return Err(StoppingError::TooFewPaths { min: 1, got: 0 });
    }
    if t0_grid.len() < 2 || t0_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(StoppingError::InvalidArgument("need at least two positive t0 values".into()));
    }
    let m = paths.len();
    let points: Vec<PositivityPoint> = t0_grid
        .iter()
        .map(|&t0| {
            let stopped = paths.iter().filter(|p| p.stops.tau.before(t0)).count();
            PositivityPoint {
                t0,
                stopped,
                probability: stopped as f64 / m as f64,
                wilson: wilson_interval(stopped, m, WILSON_Z),
            }
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.t0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.probability).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.t0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.t0 - mx) * (p.probability - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let tol = 2.0 / m as f64;

    let mut halving = true;
    for p in &points {
        let half = p.t0 / 2.0;
        if let Some(q) = points.iter().find(|q| (q.t0 - half).abs() <= 1e-12 * p.t0) {
            let (lo_h, hi_h) = q.wilson;
            let (lo_f, hi_f) = (p.wilson.0 / 2.0, p.wilson.1 / 2.0);
            halving &= lo_h <= hi_f && lo_f <= hi_h;
        }
    }
    let monotone = points.windows(2).all(|w| w[1].t0 <= w[0].t0 || w[1].stopped >= w[0].stopped);
    Ok(PositivityReport {
        paths: m,
        slope,
        intercept,
        intercept_tolerance: tol,
        halving_consistent: halving,
        pass: intercept.abs() <= tol && slope.is_finite() && halving && monotone,
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadlineMode {
    /// Estimate up to `τ`, constant checked for stability in the horizon.
    SmallNoise,
    /// Estimate on fixed horizons, constant allowed to grow with the horizon.
    FixedHorizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadlineReport {
    pub mode: HeadlineMode,
    pub eps0: f64,
    pub horizons: Vec<f64>,
    /// `E[sup‖u‖²_{H^{1/2}} + ∫‖u‖²_{H^{3/2}}] / ε₀²` per horizon.
    pub constants: Vec<RatioEstimate>,
    /// `|C(last) - C(first)| / C(first)` between the first and last horizons.
    pub relative_change: f64,
    pub stability_tolerance: f64,
    pub monotone: bool,
    pub prob_tau: f64,
    pub wilson_tau: (f64, f64),
    pub p0: f64,
    pub pass: bool,
}

/// Fits `C(h) = E[sup‖u‖² + ∫‖u‖²_{H^{3/2}}] / ε₀²` at every recorded horizon.
///
/// Small-noise mode passes when the first and last constants agree within
/// `stability_tolerance`; fixed-horizon mode passes when `C` is nondecreasing
/// in the horizon and `ℙ̂(τ < T) <= p₀`.
pub fn headline_check(
    paths: &[PathStats],
    eps0: f64,
    mode: HeadlineMode,
    stability_tolerance: f64,
    p0: f64,
) -> Result<HeadlineReport, StoppingError> {
    let first = paths.first().ok_or(StoppingError::TooFewPaths { min: 1, got: 0 })?;
    let horizons: Vec<f64> = first.headline.iter().map(|h| h.horizon).collect();
    if horizons.len() < 2 {
        return Err(StoppingError::InvalidArgument("need samples at two or more horizons".into()));
    }
    if paths.iter().any(|p| p.headline.len() != horizons.len()) {
        return Err(StoppingError::InvalidArgument("paths disagree on the headline horizons".into()));
    }
    let scale = eps0 * eps0;
    let constants: Vec<RatioEstimate> = (0..horizons.len())
        .map(|i| {
            let pairs: Vec<(f64, f64)> = paths.iter().map(|p| (p.headline[i].total(), scale)).collect();
            RatioEstimate::from_pairs(&pairs)
        })
        .collect();
    let c_first = constants[0].ratio;
    let c_last = constants[constants.len() - 1].ratio;
    let relative_change = if c_first > 0.0 {
        (c_last - c_first).abs() / c_first
    } else if c_last == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let monotone = constants.windows(2).all(|w| w[1].ratio >= w[0].ratio);
    let horizon = first.stops.horizon;
    let stopped = paths.iter().filter(|p| p.stops.tau.before(horizon)).count();
    let m = paths.len();
    let prob_tau = stopped as f64 / m as f64;
    let pass = match mode {
        HeadlineMode::SmallNoise => relative_change <= stability_tolerance,
        HeadlineMode::FixedHorizon => monotone && prob_tau <= p0,
    };
    Ok(HeadlineReport {
        mode,
        eps0,
        horizons,
        constants,
        relative_change,
        stability_tolerance,
        monotone,
        prob_tau,
        wilson_tau: wilson_interval(stopped, m, WILSON_Z),
        p0,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub paths: usize,
    /// `ε̄ / 2^{k-1}` per level.
    pub bounds: Vec<f64>,
    /// Allowed one-step overshoot per level.
    pub allowances: Vec<f64>,
    /// Largest `sup_t Q_{k,0}` seen per level.
    pub max_sup: Vec<f64>,
    /// Paths exceeding `bound + allowance`, per level.
    pub violations: Vec<usize>,
    /// Paths exceeding `bound` but within the allowance, per level.
    pub overshoots: Vec<usize>,
    pub pass: bool,
}

/// `sup_t Q_{k,0} <= ε̄/2^{k-1} + c·ε_σ·(ε̄/2^{k-1})·√Δt` on every path and level.
pub fn pointwise_check(
    paths: &[PathStats],
    eps_bar: f64,
    eps_sigma: f64,
    dt: f64,
    overshoot_constant: f64,
    max_level: usize,
) -> PointwiseReport {
    let levels = paths.first().map_or(0, |p| p.levels.len()).min(max_level + 1);
    let bounds: Vec<f64> = (0..levels).map(|k| 2.0 * eps_bar / 2f64.powi(k as i32)).collect();
    let allowances: Vec<f64> = bounds.iter().map(|b| overshoot_constant * eps_sigma * b * dt.sqrt()).collect();
    let mut max_sup = vec![0.0f64; levels];
    let mut violations = vec![0; levels];
    let mut overshoots = vec![0; levels];
    for p in paths {
        for k in 0..levels {
            let s = p.levels[k].sup_q0;
            max_sup[k] = max_sup[k].max(s);
            if s > bounds[k] + allowances[k] {
                violations[k] += 1;
            } else if s > bounds[k] {
                overshoots[k] += 1;
            }
        }
    }
    PointwiseReport {
        paths: paths.len(),
        pass: violations.iter().all(|&v| v == 0),
        bounds,
        allowances,
        max_sup,
        violations,
        overshoots,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEnergyReport {
    pub regularity: Regularity,
    /// `E[sup‖v^(k)‖² + ∫‖v^(k)‖²] / E[‖v₀^(k)‖²]` per level with nonzero data.
    pub constants: Vec<Option<f64>>,
    /// `max C_k / min C_k` over levels with nonzero data.
    pub spread: f64,
}

/// Fitted constants of the per-level energy estimate and their spread across levels.
pub fn level_energy_check(paths: &[PathStats], regularity: Regularity, max_level: usize) -> LevelEnergyReport {
    let slot = match regularity {
        Regularity::Half => 0,
        Regularity::Delta => 1,
    };
    let levels = paths.first().map_or(0, |p| p.levels.len()).min(max_level + 1);
    let constants: Vec<Option<f64>> = (0..levels)
        .map(|k| {
            let data: f64 = paths.iter().map(|p| p.levels[k].data_energy[slot]).sum();
            let energy: f64 = paths.iter().map(|p| p.levels[k].energy[slot]).sum();
            (data > 0.0).then(|| energy / data)
        })
        .collect();
    let present: Vec<f64> = constants.iter().flatten().copied().collect();
    let spread = match (
        present.iter().cloned().reduce(f64::max),
        present.iter().cloned().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) if lo > 0.0 => hi / lo,
        _ => 1.0,
    };
    LevelEnergyReport {
        regularity,
        constants,
        spread,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn series(t: &[f64], q0: &[f64], qd: &[f64]) -> LevelSeries {
        LevelSeries {
            t: t.to_vec(),
            q0: q0.to_vec(),
            q_delta: qd.to_vec(),
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    fn stats(tau: &[Option<f64>], horizon: f64) -> PathStats {
        let tau_eps: Vec<StopTime> = tau.iter().map(|t| t.map_or(StopTime::Never, StopTime::At)).collect();
        let rho = vec![StopTime::Never; tau.len()];
        PathStats {
            stops: StoppingRecord::from_parts(horizon, tau_eps, rho),
            end_time: horizon,
            levels: vec![LevelStats::default(); tau.len()],
            headline: vec![],
        }
    }

    #[test]
    fn zero_path_never_stops() {
        let t = grid(11, 0.1);
        let z = vec![0.0; 11];
        let levels = vec![series(&t, &z, &z); 3];
        let th = StopThresholds { eps_bar: 0.4, m: vec![1.0; 3] };
        let r = detect_stops(&levels, &th, 1.0).unwrap();
        assert!(r.tau.is_never());
        assert!(r.tau_upto.iter().all(|s| s.is_never()));
    }

    #[test]
    fn crossing_on_grid_point_is_exact() {
        let t = grid(11, 0.1);
        let q: Vec<f64> = t.iter().map(|&s| s).collect();
        let z = vec![0.0; 11];
        let th = StopThresholds { eps_bar: q[3], m: vec![1.0] };
        let r = detect_stops(&[series(&t, &q, &z)], &th, 1.0).unwrap();
        assert_eq!(r.tau_eps[0], StopTime::At(t[3]));
        assert_eq!(r.tau, StopTime::At(t[3]));
    }

    #[test]
    fn crossing_between_points_is_interpolated() {
        let t = [0.0, 1.0];
        let q = [0.0, 2.0];
        assert_eq!(first_crossing(&t, &q, 0.5), StopTime::At(0.25));
        assert_eq!(first_crossing(&t, &q, 3.0), StopTime::Never);
    }

    #[test]
    fn three_level_minimum() {
        let t = grid(11, 0.1);
        let ramp = |at: f64| -> Vec<f64> { t.iter().map(|&s| if s >= at - 1e-12 { 1.0 } else { 0.0 }).collect() };
        let z = vec![0.0; 11];
        let levels = vec![series(&t, &ramp(0.3), &z), series(&t, &ramp(0.2), &z), series(&t, &ramp(0.5), &z)];
        let th = StopThresholds { eps_bar: 1e-3, m: vec![1.0; 3] };
        let r = detect_stops(&levels, &th, 1.0).unwrap();
        let t2 = r.tau_upto[2].time().unwrap();
        assert!(t2 > 0.1 && t2 <= 0.2 + 1e-12, "{t2}");
        assert_eq!(r.tau, r.tau_upto[2]);
        assert!(r.tau_upto[1].cmp_time(&r.tau_upto[0]) != Ordering::Greater);
    }

    #[test]
    fn missing_series_is_an_error() {
        let t = grid(5, 0.1);
        let levels = vec![series(&t, &[0.0; 5], &[0.0; 3])];
        let th = StopThresholds { eps_bar: 0.4, m: vec![1.0] };
        assert!(matches!(
            detect_stops(&levels, &th, 1.0),
            Err(StoppingError::MissingSeries { level: 0, series: "q_delta" })
        ));
        assert!(detect_stops(&levels, &StopThresholds { eps_bar: 0.4, m: vec![] }, 1.0).is_err());
    }

    #[test]
    fn stop_time_serializes_tagged() {
        let s = serde_json::to_string(&StopTime::Never).unwrap();
        assert_eq!(s, r#"{"kind":"never"}"#);
        let a: StopTime = serde_json::from_str(r#"{"kind":"at","time":0.5}"#).unwrap();
        assert_eq!(a, StopTime::At(0.5));
    }

    #[test]
    fn wilson_matches_reference_values() {
        // closed-form Wilson bounds for 0/1000 and 5/100 at z = 1.96
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.003826).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(5, 100, 1.96);
        assert!((lo - 0.021544).abs() < 1e-5, "{lo}");
        assert!((hi - 0.111752).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn budgets_sum_below_p0() {
        let s: f64 = (0..50).map(|k| level_budget(0.1, k)).sum();
        assert!((s - 0.1 / 3.0).abs() < 1e-15);
        assert!(s <= 0.1);
    }

    #[test]
    fn markov_check_needs_enough_paths() {
        let paths = vec![stats(&[None], 1.0); 100];
        let th = StopThresholds { eps_bar: 0.4, m: vec![1.0] };
        assert!(matches!(
            markov_bound_check(&paths, &th, 0, Regularity::Half, 0.1),
            Err(StoppingError::TooFewPaths { .. })
        ));
        let paths = vec![stats(&[None], 1.0); 400];
        let r = markov_bound_check(&paths, &th, 0, Regularity::Half, 0.1).unwrap();
        assert!(r.pass && r.exceedances == 0);
    }

    #[test]
    fn frequent_exceedance_fails_budget() {
        let mut paths = vec![stats(&[None], 1.0); 400];
        for p in paths.iter_mut().take(40) {
            *p = stats(&[Some(0.5)], 1.0);
        }
        let th = StopThresholds { eps_bar: 0.4, m: vec![1.0] };
        let r = markov_bound_check(&paths, &th, 0, Regularity::Half, 0.1).unwrap();
        assert_eq!(r.exceedances, 40);
        assert!(!r.pass);
    }

    #[test]
    fn crossings_after_tau_are_censored_not_counted() {
        // level 0 stops the path at 0.4; level 1 crosses later, inside the grace window
        let mut paths = vec![stats(&[None, None], 1.0); 400];
        paths[0] = stats(&[Some(0.4), Some(0.45)], 1.0);
        assert!(paths[0].exceeded(0, Regularity::Half));
        assert!(!paths[0].exceeded(1, Regularity::Half));
        let th = StopThresholds { eps_bar: 0.4, m: vec![1.0, 1.0] };
        let r = markov_bound_check(&paths, &th, 1, Regularity::Half, 0.1).unwrap();
        assert_eq!((r.exceedances, r.censored), (0, 1));
        let e = EnsembleStats::from_paths(&paths, 0.1).unwrap();
        assert_eq!(e.levels[0].exceed_half, 1);
        assert_eq!(e.levels[1].exceed_half, 0);
        assert!(e.union_bound_holds);
    }

    #[test]
    fn positivity_on_never_stopping_ensemble() {
        let paths = vec![stats(&[None, None], 1.0); 50];
        let r = positivity_check(&paths, &[0.05, 0.1, 0.2, 0.4]).unwrap();
        assert_eq!(r.intercept, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn headline_zero_data() {
        let mut p = stats(&[None], 1.0);
        p.headline = vec![
            HeadlineSample { horizon: 0.5, ..Default::default() },
            HeadlineSample { horizon: 1.0, ..Default::default() },
        ];
        let r = headline_check(&[p.clone(), p], 0.1, HeadlineMode::SmallNoise, 0.3, 0.1).unwrap();
        assert_eq!(r.constants[0].ratio, 0.0);
        assert!(r.pass);
    }

    fn arb_series() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..2.0f64, 0.0..4.0f64), 2..30)
    }

    proptest! {
        #[test]
        fn raising_thresholds_never_advances_stops(
            levels in prop::collection::vec(arb_series(), 1..4),
            eps_bar in 0.1..1.5f64,
            m in 0.1..3.0f64,
            bump in 0.0..1.0f64,
        ) {
            let series: Vec<LevelSeries> = levels.iter().map(|v| {
                let t = grid(v.len(), 0.1);
                LevelSeries { t, q0: v.iter().map(|x| x.0).collect(), q_delta: v.iter().map(|x| x.1).collect() }
            }).collect();
            let lo = StopThresholds { eps_bar, m: vec![m; series.len()] };
            let hi = StopThresholds { eps_bar: eps_bar * (1.0 + bump), m: vec![m * (1.0 + bump); series.len()] };
            let a = detect_stops(&series, &lo, 10.0).unwrap();
            let b = detect_stops(&series, &hi, 10.0).unwrap();
            for k in 0..series.len() {
                prop_assert!(a.tau_eps[k].cmp_time(&b.tau_eps[k]) != Ordering::Greater);
                prop_assert!(a.rho[k].cmp_time(&b.rho[k]) != Ordering::Greater);
                prop_assert!(a.tau_upto[k].cmp_time(&b.tau_upto[k]) != Ordering::Greater);
            }
            prop_assert!(a.tau.cmp_time(&b.tau) != Ordering::Greater);
        }

        #[test]
        fn tau_is_the_minimum_over_levels(
            levels in prop::collection::vec(arb_series(), 1..5),
            eps_bar in 0.1..1.5f64,
        ) {
            let series: Vec<LevelSeries> = levels.iter().map(|v| {
                let t = grid(v.len(), 0.1);
                LevelSeries { t, q0: v.iter().map(|x| x.0).collect(), q_delta: v.iter().map(|x| x.1).collect() }
            }).collect();
            let th = StopThresholds { eps_bar, m: vec![1.5; series.len()] };
            let r = detect_stops(&series, &th, 10.0).unwrap();
            let min = r.tau_upto.iter().fold(StopTime::Never, |a, b| a.min(*b));
            prop_assert_eq!(min, r.tau);
            prop_assert_eq!(*r.tau_upto.last().unwrap(), r.tau);
            for w in r.tau_upto.windows(2) {
                prop_assert!(w[1].cmp_time(&w[0]) != Ordering::Greater);
            }
            for k in 0..series.len() {
                prop_assert!(r.tau.cmp_time(&r.tau_eps[k]) != Ordering::Greater);
                prop_assert!(r.tau.cmp_time(&r.rho[k]) != Ordering::Greater);
            }
        }
    }
}
