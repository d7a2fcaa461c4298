use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::noise::NoiseKindTag;
use crate::stopping::HeadlineMode;

pub const CONFIG_SCHEMA: &str = "snse.config/1";

/// How the initial field is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Field snapshot to load instead of generating random data.
    pub snapshot: Option<String>,
    /// Support radius of the random data.
    pub max_wavenumber: f64,
    /// Amplitude decay exponent of the random data.
    pub decay: f64,
    /// `‖u₀‖_{H^{1/2}} = scale · ε₀`; ignored for snapshots.
    pub scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            snapshot: None,
            max_wavenumber: 9.0,
            decay: 5.0,
            scale: 1.0,
        }
    }
}

/// Tolerances used by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Multiplier `c` in the overshoot allowance `c·ε_σ·(ε̄/2^{k-1})·√Δt`.
    pub overshoot_constant: f64,
    /// Highest level included in the pointwise and energy checks.
    pub pointwise_levels: usize,
    /// Highest level included in the probability budget checks.
    pub bound_levels: usize,
    /// Allowed relative change of the headline constant between horizons.
    pub stability_tolerance: f64,
    /// `t₀` grid for the positivity check, as fractions of `T`.
    pub t0_fractions: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            overshoot_constant: 3.0,
            pointwise_levels: 4,
            bound_levels: 3,
            stability_tolerance: 0.3,
            t0_fractions: vec![0.125, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Grid points per axis.
    pub resolution: usize,
    pub delta: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Retained Brownian directions.
    pub directions: usize,
    pub eps0: f64,
    /// Defaults to `8 ε₀`.
    pub eps_bar: Option<f64>,
    /// Also accept `ε̄ = 2ε₀`, the closed end of the admissible range. For stress runs.
    pub boundary_eps_bar: bool,
    pub eps_sigma: f64,
    pub noise: NoiseKindTag,
    pub p0: f64,
    pub k_max: usize,
    /// `M_k = m_factor · max_{j<=k} ‖v₀^(j)‖_{H^{1/2+δ}}`.
    pub m_factor: f64,
    pub paths: usize,
    pub seed: u64,
    pub mode: HeadlineMode,
    pub save_stride: usize,
    /// Steps simulated past `τ` for diagnostics.
    pub grace_steps: usize,
    /// Horizons for the headline estimate; defaults to `[T/2, T]`.
    pub headline_horizons: Option<Vec<f64>>,
    /// Fourier modes used for the weak-form residual.
    pub residual_modes: Vec<[i32; 3]>,
    pub data: DataConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            resolution: 16,
            delta: 0.25,
            dt: 0.01,
            horizon: 1.0,
            directions: 16,
            eps0: 0.05,
            eps_bar: None,
            boundary_eps_bar: false,
            eps_sigma: 0.5,
            noise: NoiseKindTag::LinearConvolution,
            p0: 0.1,
            k_max: 5,
            m_factor: 8.0,
            paths: 100,
            seed: 0,
            mode: HeadlineMode::SmallNoise,
            save_stride: 1,
            grace_steps: 10,
            headline_horizons: None,
            residual_modes: vec![[1, 0, 0], [0, 1, 1], [1, 1, 1], [2, 1, 0]],
            data: DataConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn eps_bar(&self) -> f64 {
        self.eps_bar.unwrap_or(8.0 * self.eps0)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn headline_horizons(&self) -> Vec<f64> {
        self.headline_horizons
            .clone()
            .unwrap_or_else(|| vec![0.5 * self.horizon, self.horizon])
    }

    /// Fills defaulted fields and validates the result.
    pub fn resolved(mut self) -> Result<Self, HarnessError> {
        self.eps_bar = Some(self.eps_bar());
        self.headline_horizons = Some(self.headline_horizons());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("unknown config schema {:?}", self.schema));
        }
        if self.resolution < 4 || self.resolution % 2 != 0 {
            return bad(format!("resolution must be even and >= 4, got {}", self.resolution));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return bad(format!("delta must lie in (0, 1/2], got {}", self.delta));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad(format!("dt and horizon must be positive, got {} and {}", self.dt, self.horizon));
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt));
        }
        if !(self.eps0 > 0.0) {
            return bad(format!("eps0 must be positive, got {}", self.eps0));
        }
        let eb = self.eps_bar();
        let above_lower = eb > 2.0 * self.eps0 || (self.boundary_eps_bar && eb == 2.0 * self.eps0);
        if !(above_lower && eb < 1.0) {
            return bad(format!("eps_bar must lie in (2 eps0, 1) = ({}, 1), got {eb}", 2.0 * self.eps0));
        }
        if !(self.eps_sigma >= 0.0) || !self.eps_sigma.is_finite() {
            return bad(format!("eps_sigma must be finite and nonnegative, got {}", self.eps_sigma));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return bad(format!("p0 must lie in (0, 1), got {}", self.p0));
        }
        if self.directions == 0 || self.paths == 0 || self.save_stride == 0 {
            return bad("directions, paths and save_stride must be positive".into());
        }
        if !(self.m_factor > 0.0) {
            return bad(format!("m_factor must be positive, got {}", self.m_factor));
        }
        let hs = self.headline_horizons();
        if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && *h <= self.horizon * (1.0 + 1e-12))) {
            return bad("headline horizons must lie in (0, T]".into());
        }
        if hs.windows(2).any(|w| w[1] <= w[0]) {
            return bad("headline horizons must be increasing".into());
        }
        if self.verify.t0_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("t0 fractions must lie in (0, 1]".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        toml::from_str::<Self>(s)
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .resolved()
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str::<Self>(s)
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .resolved()
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Hash of every field that influences a single path; the path count and
    /// save stride are excluded so records stay replayable across both.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.paths = 0;
        canon.save_stride = 0;
        canon.eps_bar = Some(self.eps_bar());
        canon.headline_horizons = Some(self.headline_horizons());
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    /// Counter-based seed for `path_id`: existing paths keep their randomness
    /// when the path count changes.
    pub fn path_seed(&self, path_id: u64) -> u64 {
        derive_seed(self.seed, b"path", path_id)
    }

    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, b"data", 0)
    }
}

fn derive_seed(master: u64, tag: &[u8], counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag);
    h.update(counter.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_resolve() {
        let c = RunConfig::default().resolved().unwrap();
        assert_eq!(c.eps_bar, Some(0.4));
        assert_eq!(c.headline_horizons, Some(vec![0.5, 1.0]));
        assert_eq!(c.steps(), 100);
    }

    #[test]
    fn round_trips_through_toml_and_json() {
        let c = RunConfig::default().resolved().unwrap();
        let t = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(t, c);
        let j = RunConfig::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(j, c);
    }

    #[test]
    fn partial_toml_takes_defaults() {
        let c = RunConfig::from_toml_str("resolution = 8\npaths = 3\n[data]\ndecay = 1.0\n").unwrap();
        assert_eq!(c.resolution, 8);
        assert_eq!(c.paths, 3);
        assert_eq!(c.data.decay, 1.0);
        assert_eq!(c.data.max_wavenumber, 9.0);
        assert!(RunConfig::from_toml_str("unknown_key = 1\n").is_err());
    }

    #[test]
    fn invalid_relations_are_rejected() {
        let with = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(|c| c.eps_bar = Some(0.09)).is_err());
        assert!(with(|c| c.eps_bar = Some(1.0)).is_err());
        assert!(with(|c| c.eps_bar = Some(0.1)).is_err());
        assert!(with(|c| {
            c.eps_bar = Some(0.1);
            c.boundary_eps_bar = true;
        })
        .is_ok());
        assert!(with(|c| c.delta = 0.6).is_err());
        assert!(with(|c| c.delta = 0.0).is_err());
        assert!(with(|c| c.dt = 0.0).is_err());
        assert!(with(|c| c.dt = 0.03).is_err());
        assert!(with(|c| c.resolution = 7).is_err());
        assert!(with(|c| c.headline_horizons = Some(vec![1.0, 0.5])).is_err());
        assert!(with(|c| c.delta = 0.5).is_ok());
    }

    #[test]
    fn seeds_are_counter_based() {
        let c = RunConfig::default();
        let mut d = c.clone();
        d.paths = 5000;
        assert_eq!(c.path_seed(7), d.path_seed(7));
        assert_ne!(c.path_seed(7), c.path_seed(8));
        assert_eq!(c.hash(), d.hash());
        d.seed = 1;
        assert_ne!(c.path_seed(7), d.path_seed(7));
        assert_ne!(c.hash(), d.hash());
    }
}
