use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{LevelTrace, PathRecord, PathStatus, PATH_SCHEMA};
use super::{HarnessError, RunConfig};
use crate::cascade::{
    decompose, level_thresholds, nonlinearity, Cascade, CascadeError, DataDecomposition, ResidualAccumulator,
};
use crate::heat::{EnergyLedger, HeatScheme, HeatStepPlan};
use crate::noise::{NoiseCoefficient, NoiseKindTag, WienerBasis};
use crate::spectral::{FieldSnapshot, ModeLattice, SpectralField};
use crate::stopping::{
    first_crossing, HeadlineMode, HeadlineSample, LevelStats, PathStats, StopThresholds, StopTime, StoppingRecord,
};

/// Everything shared by the paths of one run; immutable once built.
pub struct RunContext {
    config: RunConfig,
    config_hash: String,
    lattice: Arc<ModeLattice>,
    initial: SpectralField,
    decomposition: DataDecomposition,
    thresholds: StopThresholds,
    plan: HeatStepPlan,
    noise: Arc<NoiseCoefficient>,
}

/// Random solenoidal data with `‖u₀‖_{H^{1/2}} = scale · ε₀`, or the configured snapshot.
pub fn initial_data(config: &RunConfig, lattice: &Arc<ModeLattice>) -> Result<SpectralField, HarnessError> {
    if let Some(path) = &config.data.snapshot {
        let text = std::fs::read_to_string(path)?;
        return Ok(FieldSnapshot::from_json(&text)?.to_field(Some(lattice))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed());
    let u = SpectralField::random_solenoidal(lattice, &mut rng, config.data.max_wavenumber, config.data.decay);
    let norm = u.sobolev_norm(0.5);
    if norm == 0.0 || config.data.scale == 0.0 {
        return Ok(SpectralField::zeros(lattice));
    }
    Ok(u.scaled(config.data.scale * config.eps0 / norm))
}

impl RunContext {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        let config = config.resolved()?;
        let lattice = ModeLattice::new(config.resolution)?;
        let initial = initial_data(&config, &lattice)?;
        Self::with_initial(config, initial)
    }

    /// Context for explicit initial data (must live on the configured lattice).
    pub fn with_initial(config: RunConfig, initial: SpectralField) -> Result<Self, HarnessError> {
        let config = config.resolved()?;
        let lattice = initial.lattice().clone();
        if lattice.resolution() != config.resolution {
            return Err(HarnessError::Config(format!(
                "initial data has resolution {}, config says {}",
                lattice.resolution(),
                config.resolution
            )));
        }
        let decomposition = decompose(&initial, config.eps0, config.delta, config.k_max)?;
        let m = level_thresholds(&decomposition, config.m_factor);
        let plan = HeatStepPlan::for_lattice(&lattice, config.dt, config.horizon, HeatScheme::ExponentialEuler)
            .map_err(CascadeError::from)?;
        let noise = match config.noise {
            NoiseKindTag::Zero => NoiseCoefficient::zero(&lattice, config.directions),
            NoiseKindTag::LinearConvolution => {
                NoiseCoefficient::linear_convolution(&lattice, config.directions, config.eps_sigma)?
            }
        };
        Ok(Self {
            config_hash: config.hash(),
            thresholds: StopThresholds {
                eps_bar: config.eps_bar(),
                m,
            },
            config,
            lattice,
            initial,
            decomposition,
            plan,
            noise: Arc::new(noise),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    pub fn initial(&self) -> &SpectralField {
        &self.initial
    }

    pub fn decomposition(&self) -> &DataDecomposition {
        &self.decomposition
    }

    pub fn thresholds(&self) -> &StopThresholds {
        &self.thresholds
    }

    pub fn plan(&self) -> &HeatStepPlan {
        &self.plan
    }

    pub fn noise(&self) -> &Arc<NoiseCoefficient> {
        &self.noise
    }

    /// Fresh cascade at `t = 0`.
    pub fn cascade(&self) -> Result<Cascade, CascadeError> {
        Cascade::new(
            &self.decomposition,
            &self.thresholds.m,
            self.thresholds.eps_bar,
            self.plan.clone(),
            self.noise.clone(),
        )
    }

    /// Brownian path of `path_id`.
    pub fn wiener(&self, path_id: u64) -> WienerBasis {
        WienerBasis::new(self.config.directions, self.config.path_seed(path_id))
    }

    /// Runs one path: lockstep cascade to `min(T, τ + grace)` with online stop detection.
    pub fn run_path(&self, path_id: u64) -> PathRecord {
        PathDriver::new(self, path_id).run()
    }
}

struct Headline {
    sup: f64,
    dissipation: f64,
    last_rate: f64,
}

impl Headline {
    fn new(u: &SpectralField) -> Self {
        Self {
            sup: u.sobolev_norm_sq(0.5),
            dissipation: 0.0,
            last_rate: u.sobolev_norm_sq(1.5),
        }
    }

    fn update(&mut self, u: &SpectralField, dt: f64) {
        let rate = u.sobolev_norm_sq(1.5);
        self.dissipation += 0.5 * dt * (self.last_rate + rate);
        self.last_rate = rate;
        self.sup = self.sup.max(u.sobolev_norm_sq(0.5));
    }

    fn sample(&self, horizon: f64) -> HeadlineSample {
        HeadlineSample {
            horizon,
            sup_energy: self.sup,
            dissipation: self.dissipation,
        }
    }
}

struct PathDriver<'a> {
    ctx: &'a RunContext,
    path_id: u64,
    times: Vec<f64>,
    traces: Vec<LevelTrace>,
    sup_q: Vec<[f64; 2]>,
    /// Suprema stop updating at the first grid time at or after `τ`.
    sup_frozen: bool,
    prev_q: Vec<[f64; 2]>,
    tau_eps: Vec<StopTime>,
    rho: Vec<StopTime>,
}

impl<'a> PathDriver<'a> {
    fn new(ctx: &'a RunContext, path_id: u64) -> Self {
        let n = ctx.decomposition.levels();
        Self {
            ctx,
            path_id,
            times: Vec::new(),
            traces: vec![LevelTrace::default(); n],
            sup_q: vec![[0.0; 2]; n],
            sup_frozen: false,
            prev_q: vec![[0.0; 2]; n],
            tau_eps: vec![StopTime::Never; n],
            rho: vec![StopTime::Never; n],
        }
    }

    fn sample(&mut self, t: f64, cascade: &Cascade) {
        self.times.push(t);
        let sums = cascade.partial_sums();
        for ((trace, level), u) in self.traces.iter_mut().zip(cascade.levels()).zip(&sums) {
            let c = &level.cutoff;
            trace.q0.push(c.q0());
            trace.q_delta.push(c.q_delta());
            trace.psi.push(c.psi);
            trace.phi.push(c.phi);
            trace.zeta.push(c.zeta);
            trace.partial_sum_norm.push(u.sobolev_norm(0.5));
        }
    }

    /// Updates first crossings from the step `(t_prev, t]`.
    fn detect(&mut self, t_prev: f64, t: f64, cascade: &Cascade, first: bool) {
        let th = &self.ctx.thresholds;
        for (k, level) in cascade.levels().iter().enumerate() {
            let q = [level.cutoff.q0(), level.cutoff.q_delta()];
            let limits = [th.eps_level(k), th.m[k]];
            for a in 0..2 {
                if !self.sup_frozen {
                    self.sup_q[k][a] = self.sup_q[k][a].max(q[a]);
                }
                let slot = if a == 0 { &mut self.tau_eps[k] } else { &mut self.rho[k] };
                if slot.is_never() {
                    *slot = if first {
                        first_crossing(&[t], &[q[a]], limits[a])
                    } else {
                        first_crossing(&[t_prev, t], &[self.prev_q[k][a], q[a]], limits[a])
                    };
                }
            }
            self.prev_q[k] = q;
        }
    }

    fn tau(&self) -> StopTime {
        self.tau_eps
            .iter()
            .zip(&self.rho)
            .fold(StopTime::Never, |acc, (a, b)| acc.min(a.min(*b)))
    }

    fn run(mut self) -> PathRecord {
        let ctx = self.ctx;
        let cfg = &ctx.config;
        let dt = cfg.dt;
        let steps = cfg.steps();
        let seed = cfg.path_seed(self.path_id);
        let mut basis = ctx.wiener(self.path_id);
        let horizons = cfg.headline_horizons();
        let mut status = PathStatus::Ok;

        let mut cascade = match ctx.cascade() {
            Ok(c) => c,
            Err(e) => {
                return self.finish(
                    seed,
                    PathStatus::Failed { time: 0.0, message: e.to_string() },
                    0.0,
                    vec![],
                    vec![],
                    None,
                )
            }
        };
        let mut total = cascade.total();
        let zero = SpectralField::zeros(&ctx.lattice);
        let mut headline = Headline::new(&total);
        let mut headline_samples: Vec<HeadlineSample> = Vec::with_capacity(horizons.len());
        let mut residual = if cfg.residual_modes.is_empty() {
            None
        } else {
            ResidualAccumulator::new(&total, &cfg.residual_modes).ok()
        };
        let mut frozen_ledgers: Option<Vec<[EnergyLedger; 2]>> = None;
        let mut stopped = false;
        let mut end_step = steps;

        self.sample(0.0, &cascade);
        self.detect(0.0, 0.0, &cascade, true);
        if !self.tau().is_never() {
            stopped = true;
            self.sup_frozen = true;
            frozen_ledgers = Some(cascade.levels().iter().map(|l| l.ledgers.clone()).collect());
            end_step = end_step.min(cfg.grace_steps);
        }
        let mut end_time = 0.0;

        let mut j = 0;
        while j < end_step {
            let t_left = j as f64 * dt;
            let t = (j + 1) as f64 * dt;
            let dw = match basis.sample_increment(dt) {
                Ok(dw) => dw,
                Err(e) => {
                    status = PathStatus::Failed { time: t_left, message: e.to_string() };
                    break;
                }
            };
            let lower = match cascade.step(&dw) {
                Ok(l) => l,
                Err(e) => {
                    status = PathStatus::Failed { time: t, message: e.to_string() };
                    break;
                }
            };
            total = cascade.total();
            end_time = t;
            if !stopped {
                if let Some(acc) = residual.as_mut() {
                    let nl = nonlinearity(&lower.physical, cascade.transformer());
                    let g = (!ctx.noise.is_zero())
                        .then(|| ctx.noise.difference_increment(t_left, &lower.spectral, &zero, &dw));
                    acc.accumulate(dt, &lower.spectral, Some(&nl), g.as_ref());
                    acc.observe(&total);
                }
            }
            let headline_live = !stopped || cfg.mode == HeadlineMode::FixedHorizon;
            if headline_live {
                headline.update(&total, dt);
            }
            self.detect(t_left, t, &cascade, false);
            if !stopped && !self.tau().is_never() {
                stopped = true;
                self.sup_frozen = true;
                frozen_ledgers = Some(cascade.levels().iter().map(|l| l.ledgers.clone()).collect());
                if cfg.mode == HeadlineMode::SmallNoise {
                    end_step = end_step.min(j + 1 + cfg.grace_steps);
                }
            }
            for &h in &horizons[headline_samples.len()..] {
                if t >= h - 1e-9 * dt {
                    headline_samples.push(headline.sample(h));
                }
            }
            j += 1;
            if j % cfg.save_stride == 0 || j == end_step {
                self.sample(t, &cascade);
            }
        }
        if status != PathStatus::Ok && self.times.last() != Some(&end_time) && end_time > 0.0 {
            self.sample(end_time, &cascade);
        }
        for &h in &horizons[headline_samples.len()..] {
            headline_samples.push(headline.sample(h));
        }
        let ledgers = frozen_ledgers.unwrap_or_else(|| cascade.levels().iter().map(|l| l.ledgers.clone()).collect());
        self.finish(
            seed,
            status,
            end_time,
            ledgers,
            headline_samples,
            residual.map(|r| r.report()),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        seed: u64,
        status: PathStatus,
        end_time: f64,
        ledgers: Vec<[EnergyLedger; 2]>,
        headline: Vec<HeadlineSample>,
        residual: Option<crate::cascade::ResidualReport>,
    ) -> PathRecord {
        let ctx = self.ctx;
        let cfg = &ctx.config;
        let d = &ctx.decomposition;
        let levels: Vec<LevelStats> = (0..d.levels())
            .map(|k| LevelStats {
                sup_q0: self.sup_q[k][0],
                sup_q_delta: self.sup_q[k][1],
                data_energy: [d.pieces[k].sobolev_norm_sq(0.5), d.pieces[k].sobolev_norm_sq(0.5 + cfg.delta)],
                energy: ledgers
                    .get(k)
                    .map_or([0.0; 2], |l| [l[0].sup_energy + l[0].dissipation, l[1].sup_energy + l[1].dissipation]),
            })
            .collect();
        let tau = self.tau();
        let stops = StoppingRecord::from_parts(cfg.horizon, self.tau_eps.clone(), self.rho.clone());
        debug_assert_eq!(stops.tau, tau);
        PathRecord {
            schema: PATH_SCHEMA.to_string(),
            config_hash: ctx.config_hash.clone(),
            path_id: self.path_id,
            seed,
            directions: cfg.directions,
            save_stride: cfg.save_stride,
            status,
            times: self.times,
            levels: self.traces,
            stats: PathStats {
                stops,
                end_time,
                levels,
                headline,
            },
            ledgers,
            residual,
        }
    }
}
