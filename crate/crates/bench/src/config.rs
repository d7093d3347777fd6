//! Scenario configuration: a flat TOML document, every key optional except
//! `seed`. Missing keys take the default preset values.

use std::path::Path;

use fedalloc::{ChannelParams, OptimizerConfig};
use serde::Deserialize;

use crate::error::{BenchError, Result};

/// Switched-capacitance coefficient in J per gigacycle per GHz².
pub const RHO_NORMALIZED: f64 = 0.05;
/// Switched-capacitance coefficient in J per cycle per Hz^(ζ-1).
pub const RHO_RAW: f64 = 1e-24;

pub const DEFAULT_SWEEP: [f64; 6] = [1.0, 1.2, 1.4, 1.6, 1.8, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoPreset {
    Normalized,
    /// Raw SI value, converted to gigacycle/GHz units.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceCount {
    Fixed(usize),
    /// Poisson-distributed count with this mean, at least one device.
    Poisson(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub devices: DeviceCount,
    /// Metadata only.
    pub coverage_radius_m: f64,
    /// Metadata only.
    pub fl_area_m: f64,
    /// Dataset size interval, bytes.
    pub dataset_range: (f64, f64),
    pub b_cycles: f64,
    pub c_payload: f64,
    pub rho: f64,
    pub zeta: f64,
    pub t_max: f64,
    pub f_max: f64,
    pub e_up_max: f64,
    pub w_time: f64,
    pub w_energy: f64,
    pub channel: ChannelParams,
    /// Channel slots simulated before σ is frozen.
    pub burn_in: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds per suite run: `seed, seed + 1, ...`.
    pub seeds: usize,
    /// Dataset-size multipliers of the energy sweep.
    pub sweep: Vec<f64>,
}

impl ScenarioConfig {
    /// Default preset: ten devices, 5–10 MB datasets, 40 cycles/byte,
    /// 4.5 KB payload, 4 s latency budget, 2 GHz, 20 J upload energy,
    /// equal weights.
    pub fn preset(seed: u64) -> Self {
        Self {
            seed,
            devices: DeviceCount::Fixed(10),
            coverage_radius_m: 150.0,
            fl_area_m: 100.0,
            dataset_range: (5e6, 10e6),
            b_cycles: 40.0,
            c_payload: 4500.0,
            rho: RHO_NORMALIZED,
            zeta: 3.0,
            t_max: 4.0,
            f_max: 2.0,
            e_up_max: 20.0,
            w_time: 0.5,
            w_energy: 0.5,
            channel: ChannelParams::default(),
            burn_in: 20,
            optimizer: OptimizerConfig::default(),
            seeds: 1,
            sweep: DEFAULT_SWEEP.to_vec(),
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("coverage_radius_m", self.coverage_radius_m),
            ("fl_area_m", self.fl_area_m),
            ("b_cycles", self.b_cycles),
            ("c_payload", self.c_payload),
            ("rho", self.rho),
            ("t_max", self.t_max),
            ("f_max", self.f_max),
            ("e_up_max", self.e_up_max),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(key, format!("must be positive, got {value}")));
            }
        }
        match self.devices {
            DeviceCount::Fixed(0) => return Err(invalid("n_devices", "must be at least 1")),
            DeviceCount::Poisson(rate) if !(rate > 0.0 && rate.is_finite()) => {
                return Err(invalid("arrival_rate", format!("must be positive, got {rate}")))
            }
            _ => {}
        }
        let (lo, hi) = self.dataset_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(invalid("dataset_range", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        if self.zeta < 2.0 {
            return Err(invalid("zeta", format!("must be at least 2, got {}", self.zeta)));
        }
        for (key, w) in [("w_time", self.w_time), ("w_energy", self.w_energy)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(key, format!("must lie in [0, 1], got {w}")));
            }
        }
        if (self.w_time + self.w_energy - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "w_energy",
                format!("w_time + w_energy must be 1, got {} + {}", self.w_time, self.w_energy),
            ));
        }
        if self.burn_in == 0 {
            return Err(invalid("burn_in", "at least one channel slot is needed"));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds", "must be at least 1"));
        }
        if self.sweep.is_empty() || self.sweep.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(invalid("sweep", "multipliers must be positive"));
        }
        self.channel.validate().map_err(|e| core_invalid("channel", e))?;
        self.optimizer.validate().map_err(|e| core_invalid("solver", e))
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn core_invalid(section: &str, err: fedalloc::Error) -> BenchError {
    match err {
        fedalloc::Error::InvalidParameter { name, value } => invalid(name, format!("invalid value {value}")),
        other => invalid(section, other.to_string()),
    }
}

/// On-disk form; field names are the accepted keys.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    n_devices: Option<usize>,
    arrival_rate: Option<f64>,
    coverage_radius_m: Option<f64>,
    fl_area_m: Option<f64>,
    dataset_range: Option<[f64; 2]>,
    b_cycles: Option<f64>,
    c_payload: Option<f64>,
    rho_preset: Option<RhoPreset>,
    rho: Option<f64>,
    zeta: Option<f64>,
    t_max: Option<f64>,
    f_max: Option<f64>,
    e_up_max: Option<f64>,
    w_time: Option<f64>,
    w_energy: Option<f64>,

    mss: Option<f64>,
    loss_a: Option<f64>,
    loss_b: Option<f64>,
    loss_c: Option<f64>,
    b_acked: Option<f64>,
    a0: Option<f64>,
    delta_ip_max: Option<f64>,
    x_corr: Option<f64>,
    burn_in: Option<usize>,

    theta0: Option<f64>,
    theta_lo: Option<f64>,
    theta_hi: Option<f64>,
    epsilon_factor: Option<f64>,
    block_tol: Option<f64>,
    block_max_iter: Option<usize>,
    step_scale: Option<f64>,
    outer_tol: Option<f64>,
    outer_max: Option<usize>,
    reject_max: Option<usize>,
    hms: Option<usize>,
    hmcr_mean: Option<f64>,
    hmcr_sd: Option<f64>,
    par_mean: Option<f64>,
    par_sd: Option<f64>,
    bw_min: Option<f64>,
    bw_max: Option<f64>,
    improvisations: Option<usize>,
    penalty_delta: Option<f64>,

    seeds: Option<usize>,
    sweep: Option<Vec<f64>>,
}

macro_rules! fill {
    ($raw:ident, $target:expr, $($key:ident),+) => {
        $(if let Some(v) = $raw.$key { $target.$key = v; })+
    };
}

impl RawConfig {
    fn materialize(self) -> Result<ScenarioConfig> {
        let seed = self.seed.ok_or(BenchError::MissingSeed)?;
        let mut cfg = ScenarioConfig::preset(seed);
        cfg.devices = match (self.n_devices, self.arrival_rate) {
            (Some(_), Some(_)) => return Err(invalid("arrival_rate", "give either n_devices or arrival_rate")),
            (Some(n), None) => DeviceCount::Fixed(n),
            (None, Some(rate)) => DeviceCount::Poisson(rate),
            (None, None) => cfg.devices,
        };
        if let Some([lo, hi]) = self.dataset_range {
            cfg.dataset_range = (lo, hi);
        }
        fill!(self, cfg, coverage_radius_m, fl_area_m, b_cycles, c_payload, zeta, t_max, f_max, e_up_max);
        cfg.rho = match (self.rho, self.rho_preset) {
            (Some(_), Some(_)) => return Err(invalid("rho_preset", "give either rho or rho_preset")),
            (Some(rho), None) => rho,
            (None, Some(RhoPreset::Raw)) => RHO_RAW * 1e9f64.powf(cfg.zeta),
            (None, Some(RhoPreset::Normalized)) | (None, None) => RHO_NORMALIZED,
        };
        match (self.w_time, self.w_energy) {
            (Some(t), Some(e)) => (cfg.w_time, cfg.w_energy) = (t, e),
            (Some(t), None) => (cfg.w_time, cfg.w_energy) = (t, 1.0 - t),
            (None, Some(e)) => (cfg.w_time, cfg.w_energy) = (1.0 - e, e),
            (None, None) => {}
        }

        fill!(self, cfg.channel, mss, loss_a, loss_b, loss_c, b_acked, a0, delta_ip_max, x_corr);
        fill!(self, cfg, burn_in, seeds, sweep);

        let opt = &mut cfg.optimizer;
        fill!(self, opt.accuracy, theta0, theta_lo, theta_hi, epsilon_factor);
        fill!(self, opt, block_tol, block_max_iter, step_scale, outer_tol, outer_max, reject_max);
        fill!(self, opt.harmony, hms, hmcr_mean, hmcr_sd, par_mean, par_sd, bw_min, bw_max, penalty_delta);
        if let Some(t) = self.improvisations {
            opt.harmony.t_max_improv = t;
        }

        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    raw.materialize()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
