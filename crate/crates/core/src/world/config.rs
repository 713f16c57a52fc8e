//! Run configuration: plain-text `key=value` files with strict key
//! checking, canonical dumps and a stable content hash.

use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown configuration key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

/// Physical and economic parameters of the air-ground system.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    pub mu_count: usize,
    pub grid_side_cells: u32,
    pub cell_size_m: f64,
    /// Base stations form a `bs_grid x bs_grid` layout (B = bs_grid^2).
    pub bs_grid: u32,
    pub uav_altitude_m: f64,
    /// Epoch duration delta, seconds.
    pub epoch_seconds: f64,
    /// Handover delay xi, seconds.
    pub handover_seconds: f64,
    pub channels: usize,
    /// Channel bandwidth eta, Hz.
    pub bandwidth_hz: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_dbm_per_hz: f64,
    /// Task arrival probability lambda per epoch.
    pub arrival_prob: f64,
    /// Input packets per task, D_max.
    pub packets_per_task: u32,
    /// Bits per packet, mu.
    pub bits_per_packet: f64,
    /// CPU cycles per input bit, vartheta.
    pub cycles_per_bit: f64,
    /// Local CPU frequency, Hz.
    pub cpu_hz: f64,
    /// Effective switched capacitance.
    pub capacitance: f64,
    /// AoI upper limit A_max, seconds.
    pub aoi_cap_seconds: f64,
    /// Maximum transmit power, Watt.
    pub max_tx_power_w: f64,
    /// Isolated VM computation service rate chi_0, bits/second.
    pub vm_rate_bps: f64,
    /// VM multiplexing interference factor.
    pub vm_interference: f64,
    /// Utility weight on AoI freshness.
    pub weight_aoi: f64,
    /// Utility weight on energy.
    pub weight_energy: f64,
    /// Discount factor gamma in [0, 1).
    pub discount: f64,
    pub ground_gain_ref: f64,
    pub ground_gain_exp: f64,
    pub uav_gain_ref: f64,
    pub uav_gain_exp: f64,
}

impl WorldConfig {
    /// Reference parameter set used in the experiments.
    pub fn full_default() -> Self {
        WorldConfig {
            seed: 1,
            mu_count: 20,
            grid_side_cells: 40,
            cell_size_m: 10.0,
            bs_grid: 2,
            uav_altitude_m: 100.0,
            epoch_seconds: 1.0,
            handover_seconds: 1e-2,
            channels: 16,
            bandwidth_hz: 1e6,
            noise_dbm_per_hz: -144.0,
            arrival_prob: 0.5,
            packets_per_task: 10,
            bits_per_packet: 5e5,
            cycles_per_bit: 1300.0,
            cpu_hz: 1e9,
            capacitance: 1e-27,
            aoi_cap_seconds: 30.0,
            max_tx_power_w: 3.0,
            vm_rate_bps: 2e7,
            vm_interference: 0.2,
            weight_aoi: 10.0,
            weight_energy: 2.0,
            discount: 0.9,
            ground_gain_ref: 1e-4,
            ground_gain_exp: 3.8,
            uav_gain_ref: 1.4e-4,
            uav_gain_exp: 2.0,
        }
    }

    /// Small profile for fast runs: 3 MUs on an 8x8 grid of 65 m cells
    /// (matching the serving-distance range of the reference 400 m area),
    /// 2 channels, 4-packet tasks, sporadic arrivals.
    pub fn desk_default() -> Self {
        WorldConfig {
            mu_count: 3,
            grid_side_cells: 8,
            cell_size_m: 65.0,
            channels: 2,
            packets_per_task: 4,
            arrival_prob: 0.3,
            discount: 0.7,
            ..Self::full_default()
        }
    }

    /// Noise density in Watt/Hz.
    pub fn noise_w_per_hz(&self) -> f64 {
        10f64.powf((self.noise_dbm_per_hz - 30.0) / 10.0)
    }

    /// Number of base stations.
    pub fn bs_count(&self) -> usize {
        (self.bs_grid * self.bs_grid) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        if self.handover_seconds < 0.0 || self.epoch_seconds <= self.handover_seconds {
            return bad("epoch_seconds", "requires epoch_seconds > handover_seconds >= 0");
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return bad("arrival_prob", "must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)");
        }
        if self.packets_per_task < 1 {
            return bad("packets_per_task", "must be at least 1");
        }
        if self.mu_count == 0 {
            return bad("mu_count", "must be at least 1");
        }
        if self.bs_grid == 0 || self.bs_grid > self.grid_side_cells {
            return bad("bs_grid", "must lie in 1..=grid_side_cells");
        }
        if self.channels == 0 {
            return bad("channels", "must be at least 1");
        }
        for (key, v) in [
            ("cell_size_m", self.cell_size_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("bits_per_packet", self.bits_per_packet),
            ("cycles_per_bit", self.cycles_per_bit),
            ("cpu_hz", self.cpu_hz),
            ("capacitance", self.capacitance),
            ("aoi_cap_seconds", self.aoi_cap_seconds),
            ("max_tx_power_w", self.max_tx_power_w),
            ("vm_rate_bps", self.vm_rate_bps),
            ("ground_gain_ref", self.ground_gain_ref),
            ("uav_gain_ref", self.uav_gain_ref),
        ] {
            if v.is_nan() || v <= 0.0 {
                return bad(key, "must be positive");
            }
        }
        if self.vm_interference < 0.0 {
            return bad("vm_interference", "must be non-negative");
        }
        Ok(())
    }
}

/// Learner hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub hidden_neurons: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub target_sync_period: u64,
    pub epsilon_final: f64,
}

impl LearnConfig {
    pub fn full_default() -> Self {
        LearnConfig {
            replay_capacity: 5000,
            batch_size: 200,
            hidden_neurons: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            target_sync_period: 100,
            epsilon_final: 0.02,
        }
    }

    pub fn desk_default() -> Self {
        LearnConfig {
            replay_capacity: 1000,
            batch_size: 16,
            learning_rate: 5e-4,
            ..Self::full_default()
        }
    }
}

/// Experiment sweep grids.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub experiment_epochs: u64,
    pub lambda_grid: Vec<f64>,
    pub channel_grid: Vec<usize>,
    pub batch_grid: Vec<usize>,
}

impl SweepConfig {
    pub fn default_grids() -> Self {
        SweepConfig {
            experiment_epochs: 20_000,
            lambda_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            channel_grid: vec![1, 2, 4],
            batch_grid: vec![8, 32, 128],
        }
    }
}

/// Full run configuration as loaded from a `key=value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub learn: LearnConfig,
    pub sweeps: SweepConfig,
}

fn join<T: std::fmt::Display>(vals: &[T]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl SimConfig {
    pub fn full_default() -> Self {
        SimConfig {
            world: WorldConfig::full_default(),
            learn: LearnConfig::full_default(),
            sweeps: SweepConfig::default_grids(),
        }
    }

    pub fn desk_default() -> Self {
        SimConfig {
            world: WorldConfig::desk_default(),
            learn: LearnConfig::desk_default(),
            sweeps: SweepConfig::default_grids(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_default(&text, Self::full_default())
    }

    /// Parse `key=value` lines on top of `base`; `#` starts a comment.
    pub fn from_str_default(text: &str, base: SimConfig) -> Result<Self, ConfigError> {
        let mut cfg = base;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                msg: format!("expected key=value, found `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    ConfigError::UnknownKey { .. } | ConfigError::Invalid { .. } => e,
                    other => other,
                })?;
        }
        cfg.world.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Invalid {
                key: key.to_string(),
                msg: format!("cannot parse `{value}`"),
            })
        }
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
            if value.trim().is_empty() {
                return Err(ConfigError::Invalid {
                    key: key.to_string(),
                    msg: "empty grid".to_string(),
                });
            }
            value
                .split(',')
                .map(|v| {
                    v.trim().parse().map_err(|_| ConfigError::Invalid {
                        key: key.to_string(),
                        msg: format!("cannot parse `{v}`"),
                    })
                })
                .collect()
        }
        let w = &mut self.world;
        let l = &mut self.learn;
        let s = &mut self.sweeps;
        match key {
            "seed" => w.seed = num(key, value)?,
            "mu_count" => w.mu_count = num(key, value)?,
            "grid_side_cells" => w.grid_side_cells = num(key, value)?,
            "cell_size_m" => w.cell_size_m = num(key, value)?,
            "bs_grid" => w.bs_grid = num(key, value)?,
            "uav_altitude_m" => w.uav_altitude_m = num(key, value)?,
            "epoch_seconds" => w.epoch_seconds = num(key, value)?,
            "handover_seconds" => w.handover_seconds = num(key, value)?,
            "channels" => w.channels = num(key, value)?,
            "bandwidth_hz" => w.bandwidth_hz = num(key, value)?,
            "noise_dbm_per_hz" => w.noise_dbm_per_hz = num(key, value)?,
            "arrival_prob" => w.arrival_prob = num(key, value)?,
            "packets_per_task" => w.packets_per_task = num(key, value)?,
            "bits_per_packet" => w.bits_per_packet = num(key, value)?,
            "cycles_per_bit" => w.cycles_per_bit = num(key, value)?,
            "cpu_hz" => w.cpu_hz = num(key, value)?,
            "capacitance" => w.capacitance = num(key, value)?,
            "aoi_cap_seconds" => w.aoi_cap_seconds = num(key, value)?,
            "max_tx_power_w" => w.max_tx_power_w = num(key, value)?,
            "vm_rate_bps" => w.vm_rate_bps = num(key, value)?,
            "vm_interference" => w.vm_interference = num(key, value)?,
            "weight_aoi" => w.weight_aoi = num(key, value)?,
            "weight_energy" => w.weight_energy = num(key, value)?,
            "discount" => w.discount = num(key, value)?,
            "ground_gain_ref" => w.ground_gain_ref = num(key, value)?,
            "ground_gain_exp" => w.ground_gain_exp = num(key, value)?,
            "uav_gain_ref" => w.uav_gain_ref = num(key, value)?,
            "uav_gain_exp" => w.uav_gain_exp = num(key, value)?,
            "replay_capacity" => l.replay_capacity = num(key, value)?,
            "batch_size" => l.batch_size = num(key, value)?,
            "hidden_neurons" => l.hidden_neurons = num(key, value)?,
            "learning_rate" => l.learning_rate = num(key, value)?,
            "adam_beta1" => l.adam_beta1 = num(key, value)?,
            "adam_beta2" => l.adam_beta2 = num(key, value)?,
            "adam_epsilon" => l.adam_epsilon = num(key, value)?,
            "target_sync_period" => l.target_sync_period = num(key, value)?,
            "epsilon_final" => l.epsilon_final = num(key, value)?,
            "experiment_epochs" => s.experiment_epochs = num(key, value)?,
            "lambda_grid" => s.lambda_grid = list(key, value)?,
            "channel_grid" => s.channel_grid = list(key, value)?,
            "batch_grid" => s.batch_grid = list(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Canonical dump; `load(dump(c))` reproduces `c` and dumps identically.
    pub fn dump(&self) -> String {
        let w = &self.world;
        let l = &self.learn;
        let s = &self.sweeps;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("seed", w.seed.to_string());
        kv("mu_count", w.mu_count.to_string());
        kv("grid_side_cells", w.grid_side_cells.to_string());
        kv("cell_size_m", w.cell_size_m.to_string());
        kv("bs_grid", w.bs_grid.to_string());
        kv("uav_altitude_m", w.uav_altitude_m.to_string());
        kv("epoch_seconds", w.epoch_seconds.to_string());
        kv("handover_seconds", w.handover_seconds.to_string());
        kv("channels", w.channels.to_string());
        kv("bandwidth_hz", w.bandwidth_hz.to_string());
        kv("noise_dbm_per_hz", w.noise_dbm_per_hz.to_string());
        kv("arrival_prob", w.arrival_prob.to_string());
        kv("packets_per_task", w.packets_per_task.to_string());
        kv("bits_per_packet", w.bits_per_packet.to_string());
        kv("cycles_per_bit", w.cycles_per_bit.to_string());
        kv("cpu_hz", w.cpu_hz.to_string());
        kv("capacitance", w.capacitance.to_string());
        kv("aoi_cap_seconds", w.aoi_cap_seconds.to_string());
        kv("max_tx_power_w", w.max_tx_power_w.to_string());
        kv("vm_rate_bps", w.vm_rate_bps.to_string());
        kv("vm_interference", w.vm_interference.to_string());
        kv("weight_aoi", w.weight_aoi.to_string());
        kv("weight_energy", w.weight_energy.to_string());
        kv("discount", w.discount.to_string());
        kv("ground_gain_ref", w.ground_gain_ref.to_string());
        kv("ground_gain_exp", w.ground_gain_exp.to_string());
        kv("uav_gain_ref", w.uav_gain_ref.to_string());
        kv("uav_gain_exp", w.uav_gain_exp.to_string());
        kv("replay_capacity", l.replay_capacity.to_string());
        kv("batch_size", l.batch_size.to_string());
        kv("hidden_neurons", l.hidden_neurons.to_string());
        kv("learning_rate", l.learning_rate.to_string());
        kv("adam_beta1", l.adam_beta1.to_string());
        kv("adam_beta2", l.adam_beta2.to_string());
        kv("adam_epsilon", l.adam_epsilon.to_string());
        kv("target_sync_period", l.target_sync_period.to_string());
        kv("epsilon_final", l.epsilon_final.to_string());
        kv("experiment_epochs", s.experiment_epochs.to_string());
        kv("lambda_grid", join(&s.lambda_grid));
        kv("channel_grid", join(&s.channel_grid));
        kv("batch_grid", join(&s.batch_grid));
        out
    }

    /// FNV-1a hash of the canonical dump.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in self.dump().bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}
