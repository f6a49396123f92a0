use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::link::LinkConfig;
use crate::protocol::{ControlChannel, ProtocolConfig};
use crate::rf_env::{Emitter, EmitterKind, FrontEndConfig};
use crate::sensor::SensorConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentSpec {
    pub frontend: FrontEndConfig,
    /// Background emitters present in every run.
    pub emitters: Vec<Emitter>,
}

/// The primary user placed by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuConfig {
    pub enabled: bool,
    pub kind: EmitterKind,
    pub bandwidth: f64,
    /// Amplitude scale; power is its square.
    pub power: f64,
    /// Seconds the PU needs to follow the SU onto a new carrier. Defaults
    /// to twice the resense period.
    pub reaction_latency: Option<f64>,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig {
            enabled: true,
            kind: EmitterKind::BandNoise,
            bandwidth: 0.8e6,
            power: 2.0,
            reaction_latency: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeConfig {
    /// Carrier used by `static`.
    pub static_freq: f64,
    /// Bands swept by `dsa`.
    pub dsa_bands: Vec<[f64; 2]>,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            static_freq: 2480e6,
            dsa_bands: vec![[2400e6, 2480e6], [866.5e6, 869.5e6]],
        }
    }
}

/// PU center swept over `[start, stop]`; the PU sits at
/// `su_freq + (point - reference)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub packets_per_point: u32,
    pub reference: f64,
}

impl Default for PuSweep {
    fn default() -> Self {
        PuSweep {
            start: 2479e6,
            stop: 2481e6,
            step: 0.1e6,
            packets_per_point: 1000,
            reference: 2480e6,
        }
    }
}

impl PuSweep {
    /// PU offsets from the SU carrier, one per grid point.
    pub fn offsets(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| self.start + i as f64 * self.step - self.reference)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub bands: Vec<[f64; 2]>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            bands: vec![[2400e6, 2500e6], [850e6, 950e6]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seeds: Vec<u64>,
    pub outputs: PathBuf,
    pub environment: EnvironmentSpec,
    pub sensor: SensorConfig,
    pub protocol: ProtocolConfig,
    pub channel: ControlChannel,
    pub link: LinkConfig,
    pub pu: PuConfig,
    pub mode: ModeConfig,
    pub pu_sweep: PuSweep,
    pub scan: ScanConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seeds: (1..=20).collect(),
            outputs: PathBuf::from("out"),
            environment: EnvironmentSpec::default(),
            sensor: SensorConfig::default(),
            protocol: ProtocolConfig::default(),
            channel: ControlChannel::default(),
            link: LinkConfig::default(),
            pu: PuConfig::default(),
            mode: ModeConfig::default(),
            pu_sweep: PuSweep::default(),
            scan: ScanConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn reaction_latency(&self) -> f64 {
        self.pu.reaction_latency.unwrap_or(2.0 * self.protocol.resense_period)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if !(self.pu_sweep.step > 0.0) || !(self.pu_sweep.stop >= self.pu_sweep.start) {
            return bad("pu_sweep needs step > 0 and stop >= start");
        }
        if self.pu_sweep.packets_per_point == 0 {
            return bad("pu_sweep.packets_per_point must be >= 1");
        }
        for band in self.mode.dsa_bands.iter().chain(&self.scan.bands) {
            if !(band[1] > band[0]) {
                return bad("every band needs high > low");
            }
        }
        if self.pu.enabled {
            let probe = match self.pu.kind {
                EmitterKind::Tone => Emitter::tone("pu", 0.0, self.pu.power),
                _ => Emitter::band_noise("pu", 0.0, self.pu.bandwidth, self.pu.power),
            };
            if self.pu.kind == EmitterKind::SweepingBandNoise {
                return bad("the swept PU must be Tone or BandNoise");
            }
            probe.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
            if !(self.reaction_latency() >= 0.0) {
                return bad("pu.reaction_latency must be >= 0");
            }
        }
        self.environment
            .frontend
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        self.sensor
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        self.protocol
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        self.link.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(())
    }

    /// PU emitter centered at `center`, active over `[from, to)`.
    pub fn pu_emitter(&self, id: String, center: f64, from: f64, to: f64) -> Emitter {
        let e = match self.pu.kind {
            EmitterKind::Tone => Emitter::tone(id, center, self.pu.power),
            _ => Emitter::band_noise(id, center, self.pu.bandwidth, self.pu.power),
        };
        e.active_between(from, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(ScenarioConfig::load(&path).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn grid_is_exact() {
        let offs = PuSweep::default().offsets();
        assert_eq!(offs.len(), 21);
        assert_eq!(offs[0], -1e6);
        assert_eq!(offs[7], -300e3);
        assert_eq!(offs[10], 0.0);
        assert_eq!(offs[20], 1e6);
    }

    #[test]
    fn latency_defaults_to_two_periods() {
        assert_eq!(ScenarioConfig::default().reaction_latency(), 3.6);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_toml("seeds = []").is_err());
        assert!(ScenarioConfig::from_toml("[pu_sweep]\nstep = 0.0").is_err());
        assert!(ScenarioConfig::from_toml("[mode]\ndsa_bands = [[2.0, 1.0]]").is_err());
        assert!(ScenarioConfig::from_toml("[protocol]\nretry_interval = 0.0").is_err());
    }
}
