//! Energy-detection spectrum sensor.
//!
//! Samples are packed into vectors of `fft_size`, windowed with a
//! Blackman-Harris window and transformed. Per-bin power `|X_k|²/fft_size`
//! is averaged over `avg_vectors` vectors, the outer eighth of the bins on
//! each side is discarded, and the retained bins are reported as carrier
//! frequencies around the tuned center. Wide bands are covered by stepping
//! the tuner in chunks of the retained bandwidth.

mod map;
mod window;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rf_env::{EnvError, Environment, IqBuffer};

pub use map::{min_energy_frequency, EnergyEntry, EnergyMap};
pub use window::blackman_harris;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("fewer than one bin: channel bandwidth {channel_bandwidth} Hz exceeds sample rate {usrp_rate}")]
    FewerThanOneBin { usrp_rate: f64, channel_bandwidth: f64 },
    #[error("fft size {0} leaves no usable bins after edge discard")]
    NoUsableBins(usize),
    #[error("invalid sensor configuration: {0}")]
    InvalidConfig(String),
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("insufficient dwell: need {needed} samples, buffer holds {available}")]
    InsufficientDwell { needed: usize, available: usize },
    #[error("buffer sample rate {buffer} does not match sensor rate {sensor}")]
    RateMismatch { buffer: f64, sensor: f64 },
    #[error("chunk bandwidth {chunk} Hz exceeds the front-end window {window} Hz")]
    ChunkTooWide { chunk: f64, window: f64 },
    #[error("band [{0}, {1}] is empty")]
    EmptyBand(f64, f64),
    #[error("energy map is empty")]
    EmptyMap,
    #[error(transparent)]
    Capture(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub usrp_rate: f64,
    pub channel_bandwidth: f64,
    pub avg_vectors: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            usrp_rate: 4e6,
            channel_bandwidth: 6250.0,
            avg_vectors: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FftLayout {
    pub fft_size: usize,
    pub bin_start: usize,
    pub bin_stop: usize,
    pub usable_bins: usize,
}

/// `ceil` that forgives representation error on exact quotients.
fn ceil_ratio(num: f64, den: f64) -> f64 {
    let q = num / den;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        q.ceil()
    }
}

pub fn fft_layout(cfg: &SensorConfig) -> Result<FftLayout, SensorError> {
    if !(cfg.usrp_rate > 0.0) || !(cfg.channel_bandwidth > 0.0) {
        return Err(SensorError::InvalidConfig(
            "usrp_rate and channel_bandwidth must be > 0".into(),
        ));
    }
    if cfg.channel_bandwidth > cfg.usrp_rate {
        return Err(SensorError::FewerThanOneBin {
            usrp_rate: cfg.usrp_rate,
            channel_bandwidth: cfg.channel_bandwidth,
        });
    }
    let fft_size = ceil_ratio(cfg.usrp_rate, cfg.channel_bandwidth) as usize;
    let bin_start = fft_size.div_ceil(8);
    let bin_stop = fft_size.saturating_sub(bin_start);
    if bin_stop <= bin_start {
        return Err(SensorError::NoUsableBins(fft_size));
    }
    Ok(FftLayout {
        fft_size,
        bin_start,
        bin_stop,
        usable_bins: bin_stop - bin_start,
    })
}

impl SensorConfig {
    pub fn validate(&self) -> Result<FftLayout, SensorError> {
        if self.avg_vectors == 0 {
            return Err(SensorError::InvalidConfig("avg_vectors must be >= 1".into()));
        }
        fft_layout(self)
    }

    /// Actual FFT bin spacing, `usrp_rate / fft_size`. Equal to
    /// `channel_bandwidth` whenever the rate is a whole multiple of it.
    pub fn bin_spacing(&self) -> Result<f64, SensorError> {
        Ok(self.usrp_rate / fft_layout(self)?.fft_size as f64)
    }

    pub fn chunk_bandwidth(&self) -> Result<f64, SensorError> {
        let layout = fft_layout(self)?;
        Ok(layout.usable_bins as f64 * self.usrp_rate / layout.fft_size as f64)
    }

    pub fn samples_per_dwell(&self) -> Result<usize, SensorError> {
        Ok(self.validate()?.fft_size * self.avg_vectors)
    }

    /// Simulated seconds one dwell occupies the front-end.
    pub fn dwell_time(&self, tune_delay: f64) -> Result<f64, SensorError> {
        Ok(tune_delay + self.samples_per_dwell()? as f64 / self.usrp_rate)
    }

    /// Number of dwells needed to cover `[low, high)`.
    pub fn dwells_for(&self, low: f64, high: f64) -> Result<usize, SensorError> {
        if !(high > low) {
            return Err(SensorError::EmptyBand(low, high));
        }
        Ok(ceil_ratio(high - low, self.chunk_bandwidth()?) as usize)
    }
}

/// Averaged windowed periodogram of one dwell, restricted to retained bins.
pub fn sense_dwell(buf: &IqBuffer, cfg: &SensorConfig) -> Result<EnergyMap, SensorError> {
    let layout = cfg.validate()?;
    if buf.sample_rate != cfg.usrp_rate {
        return Err(SensorError::RateMismatch {
            buffer: buf.sample_rate,
            sensor: cfg.usrp_rate,
        });
    }
    let n = layout.fft_size;
    let needed = n * cfg.avg_vectors;
    if buf.samples.len() < needed {
        return Err(SensorError::InsufficientDwell {
            needed,
            available: buf.samples.len(),
        });
    }

    let window = blackman_harris(n)?;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut vector = vec![Complex64::new(0.0, 0.0); n];
    let mut power = vec![0.0f64; n];

    for chunk in buf.samples[..needed].chunks_exact(n) {
        for ((v, s), w) in vector.iter_mut().zip(chunk).zip(&window) {
            *v = s * w;
        }
        fft.process_with_scratch(&mut vector, &mut scratch);
        for (p, x) in power.iter_mut().zip(&vector) {
            *p += x.norm_sqr();
        }
    }
    let scale = 1.0 / (n as f64 * cfg.avg_vectors as f64);

    let spacing = cfg.usrp_rate / n as f64;
    let half = n / 2;
    let entries = (layout.bin_start..layout.bin_stop)
        .map(|k| {
            let raw = (k + n - half) % n;
            let carrier = buf.center_freq + (k as f64 - half as f64) * spacing;
            EnergyEntry::new(carrier, power[raw] * scale)
        })
        .collect();

    let low = buf.center_freq + (layout.bin_start as f64 - half as f64) * spacing;
    let high = buf.center_freq + (layout.bin_stop as f64 - half as f64) * spacing;
    Ok(EnergyMap {
        entries,
        band: (low, high),
        sensed_at: buf.start_time,
        sensing_time: needed as f64 / cfg.usrp_rate,
    })
}

/// Steps the front-end across `[low, high)` one chunk at a time and
/// concatenates the dwell maps. Carriers at or above `high` are dropped.
pub fn sweep(env: &Environment, band: (f64, f64), cfg: &SensorConfig, at_time: f64) -> Result<EnergyMap, SensorError> {
    let (low, high) = band;
    let layout = cfg.validate()?;
    if cfg.usrp_rate != env.frontend.sample_rate {
        return Err(SensorError::RateMismatch {
            buffer: env.frontend.sample_rate,
            sensor: cfg.usrp_rate,
        });
    }
    let chunk = cfg.chunk_bandwidth()?;
    if chunk > env.frontend.max_instantaneous_bw {
        return Err(SensorError::ChunkTooWide {
            chunk,
            window: env.frontend.max_instantaneous_bw,
        });
    }
    let dwells = cfg.dwells_for(low, high)?;
    let dwell = cfg.dwell_time(env.frontend.tune_delay)?;
    let spacing = cfg.bin_spacing()?;
    // Offset from tuned center to the first retained carrier.
    let first_offset = (layout.bin_start as f64 - (layout.fft_size / 2) as f64) * spacing;

    let mut entries = Vec::with_capacity(dwells * layout.usable_bins);
    for i in 0..dwells {
        let center = low + i as f64 * chunk - first_offset;
        let buf = env.capture(center, dwell, at_time + i as f64 * dwell)?;
        let map = sense_dwell(&buf, cfg)?;
        entries.extend(map.entries.into_iter().filter(|e| e.carrier_freq < high));
    }
    Ok(EnergyMap {
        entries,
        band: (low, high),
        sensed_at: at_time,
        sensing_time: dwells as f64 * dwell,
    })
}

/// A source of energy maps, as used by the receiver's sensing loop.
pub trait SpectrumSensor {
    fn sense(&mut self, at_time: f64) -> Result<EnergyMap, SensorError>;
}

impl<F> SpectrumSensor for F
where
    F: FnMut(f64) -> Result<EnergyMap, SensorError>,
{
    fn sense(&mut self, at_time: f64) -> Result<EnergyMap, SensorError> {
        self(at_time)
    }
}

/// Sweeps a fixed list of bands back to back.
#[derive(Debug, Clone)]
pub struct BandSweeper<'a> {
    pub env: &'a Environment,
    pub bands: Vec<(f64, f64)>,
    pub cfg: SensorConfig,
}

impl SpectrumSensor for BandSweeper<'_> {
    fn sense(&mut self, at_time: f64) -> Result<EnergyMap, SensorError> {
        let mut t = at_time;
        let mut maps = Vec::with_capacity(self.bands.len());
        for &band in &self.bands {
            let m = sweep(self.env, band, &self.cfg, t)?;
            t += m.sensing_time;
            maps.push(m);
        }
        EnergyMap::merge(maps).ok_or(SensorError::EmptyMap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf_env::{Emitter, FrontEndConfig};

    fn table1() -> SensorConfig {
        SensorConfig::default()
    }

    #[test]
    fn layout_for_reference_parameters() {
        let l = fft_layout(&table1()).unwrap();
        assert_eq!(
            (l.fft_size, l.bin_start, l.bin_stop, l.usable_bins),
            (640, 80, 560, 480)
        );
        assert_eq!(table1().chunk_bandwidth().unwrap(), 3e6);
    }

    #[test]
    fn smallest_layout() {
        let cfg = SensorConfig {
            usrp_rate: 8.0,
            channel_bandwidth: 1.0,
            avg_vectors: 1,
        };
        let l = fft_layout(&cfg).unwrap();
        assert_eq!((l.fft_size, l.bin_start, l.bin_stop, l.usable_bins), (8, 1, 7, 6));
    }

    #[test]
    fn channel_wider_than_rate_is_rejected() {
        let cfg = SensorConfig {
            usrp_rate: 1e6,
            channel_bandwidth: 2e6,
            avg_vectors: 1,
        };
        assert!(matches!(fft_layout(&cfg), Err(SensorError::FewerThanOneBin { .. })));
    }

    #[test]
    fn degenerate_sizes_have_no_usable_bins() {
        for (rate, bw) in [(1.0, 1.0), (2.0, 1.0)] {
            let cfg = SensorConfig {
                usrp_rate: rate,
                channel_bandwidth: bw,
                avg_vectors: 1,
            };
            assert!(matches!(fft_layout(&cfg), Err(SensorError::NoUsableBins(_))));
        }
    }

    #[test]
    fn non_divisible_rate_rounds_fft_size_up() {
        let cfg = SensorConfig {
            usrp_rate: 1000.0,
            channel_bandwidth: 30.0,
            avg_vectors: 1,
        };
        let l = fft_layout(&cfg).unwrap();
        assert_eq!(l.fft_size, 34);
        assert_eq!(l.bin_start, 5);
        assert_eq!(l.bin_stop, 29);
    }

    #[test]
    fn zero_buffer_gives_zero_energy() {
        let cfg = SensorConfig {
            avg_vectors: 4,
            ..table1()
        };
        let buf = IqBuffer {
            samples: vec![Complex64::new(0.0, 0.0); 2560],
            center_freq: 2.44e9,
            sample_rate: 4e6,
            start_time: 0.0,
        };
        let m = sense_dwell(&buf, &cfg).unwrap();
        assert_eq!(m.len(), 480);
        assert!(m.entries.iter().all(|e| e.energy == 0.0));
    }

    #[test]
    fn short_buffer_is_insufficient() {
        let cfg = SensorConfig {
            avg_vectors: 4,
            ..table1()
        };
        let buf = IqBuffer {
            samples: vec![Complex64::new(0.0, 0.0); 2559],
            center_freq: 0.0,
            sample_rate: 4e6,
            start_time: 0.0,
        };
        assert_eq!(
            sense_dwell(&buf, &cfg),
            Err(SensorError::InsufficientDwell {
                needed: 2560,
                available: 2559
            })
        );
    }

    #[test]
    fn carriers_are_contiguous_and_centered() {
        let cfg = SensorConfig {
            avg_vectors: 1,
            ..table1()
        };
        let buf = IqBuffer {
            samples: vec![Complex64::new(1.0, 0.0); 640],
            center_freq: 2_441_500_000.0,
            sample_rate: 4e6,
            start_time: 0.0,
        };
        let m = sense_dwell(&buf, &cfg).unwrap();
        assert_eq!(m.entries[0].carrier_freq, 2_440_000_000.0);
        assert_eq!(m.entries[479].carrier_freq, 2_442_993_750.0);
        assert!(m
            .entries
            .windows(2)
            .all(|w| w[1].carrier_freq - w[0].carrier_freq == 6250.0));
        // DC input lands on the tuned center.
        assert_eq!(m.argmax().unwrap().carrier_freq, 2_441_500_000.0);
    }

    #[test]
    fn sweep_dwell_count_and_timing() {
        let cfg = SensorConfig {
            avg_vectors: 2,
            ..table1()
        };
        assert_eq!(cfg.dwells_for(2405e6, 2480e6).unwrap(), 25);
        assert_eq!(cfg.dwells_for(2405e6, 2408e6).unwrap(), 1);

        let env = Environment::new(vec![], FrontEndConfig::default(), 1).unwrap();
        let m = sweep(&env, (2405e6, 2414e6), &cfg, 1.0).unwrap();
        assert_eq!(m.len(), 3 * 480);
        let dwell = 0.005 + 2.0 * 640.0 / 4e6;
        assert!((m.sensing_time - 3.0 * dwell).abs() < 1e-12);
        assert_eq!(m.entries[0].carrier_freq, 2405e6);
        assert_eq!(m.entries.last().unwrap().carrier_freq, 2414e6 - 6250.0);
    }

    #[test]
    fn sweep_clips_partial_last_chunk() {
        let cfg = SensorConfig {
            avg_vectors: 1,
            ..table1()
        };
        let env = Environment::new(vec![], FrontEndConfig::default(), 1).unwrap();
        let m = sweep(&env, (2400e6, 2401e6), &cfg, 0.0).unwrap();
        assert_eq!(m.len(), 160);
        assert!(m.entries.iter().all(|e| e.carrier_freq < 2401e6));
    }

    #[test]
    fn empty_band_is_rejected() {
        let env = Environment::new(vec![], FrontEndConfig::default(), 1).unwrap();
        assert!(matches!(
            sweep(&env, (5.0, 5.0), &table1(), 0.0),
            Err(SensorError::EmptyBand(..))
        ));
    }

    #[test]
    fn band_sweeper_merges_in_frequency_order() {
        let env = Environment::new(
            vec![Emitter::band_noise("pu", 2441e6, 0.5e6, 1.0)],
            FrontEndConfig::default(),
            9,
        )
        .unwrap();
        let cfg = SensorConfig {
            avg_vectors: 2,
            ..table1()
        };
        let mut s = BandSweeper {
            env: &env,
            bands: vec![(2440e6, 2443e6), (866.5e6, 869.5e6)],
            cfg,
        };
        let m = s.sense(0.0).unwrap();
        assert_eq!(m.len(), 960);
        assert!(m.entries.windows(2).all(|w| w[0].carrier_freq < w[1].carrier_freq));
        let dwell = cfg.dwell_time(0.005).unwrap();
        assert!((m.sensing_time - 2.0 * dwell).abs() < 1e-12);
        let peak = m.argmax().unwrap().carrier_freq;
        assert!((peak - 2441e6).abs() <= 0.25e6);
    }
}
