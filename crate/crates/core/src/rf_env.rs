//! Synthetic RF environment seen through a virtual tunable front-end.
//!
//! A capture returns complex baseband samples for a requested center
//! frequency. Emitters are synthesized constructively: tones directly in the
//! time domain, band-limited noise as a sum of per-bin complex Gaussian
//! components taken to the time domain with one inverse FFT. Only spectral
//! content inside the front-end's instantaneous bandwidth is ever generated,
//! so emitters outside the window contribute exactly nothing.
//!
//! Every random draw comes from a substream keyed by the environment seed,
//! the emitter id and the capture request, so captures are reproducible and
//! the contribution of one emitter never depends on which others exist.

use std::cell::RefCell;
use std::collections::HashSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

const NOISE_STREAM: u64 = 0x6e6f_6973_655f_666c;

/// FFT planner plus reusable spectrum and scratch buffers.
struct Synth {
    planner: FftPlanner<f64>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

thread_local! {
    static SYNTH: RefCell<Synth> = RefCell::new(Synth {
        planner: FftPlanner::new(),
        spectrum: Vec::new(),
        scratch: Vec::new(),
    });
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("empty capture: duration {duration} s does not exceed tune delay {tune_delay} s")]
    EmptyCapture { duration: f64, tune_delay: f64 },
    #[error("invalid emitter `{id}`: {reason}")]
    InvalidEmitter { id: String, reason: String },
    #[error("duplicate emitter id `{0}`")]
    DuplicateEmitter(String),
    #[error("invalid front-end configuration: {0}")]
    InvalidFrontEnd(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmitterKind {
    Tone,
    BandNoise,
    SweepingBandNoise,
}

/// Stepped center-frequency schedule of a sweeping emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub start_freq: f64,
    pub stop_freq: f64,
    pub step: f64,
    pub dwell: f64,
}

fn always() -> [f64; 2] {
    [0.0, f64::INFINITY]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub id: String,
    pub center_freq: f64,
    #[serde(default)]
    pub bandwidth: f64,
    /// Linear amplitude scale; the emitted power is `power²`.
    pub power: f64,
    pub kind: EmitterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Half-open `[start, stop)` in seconds.
    #[serde(default = "always")]
    pub active_interval: [f64; 2],
}

impl Emitter {
    pub fn tone(id: impl Into<String>, center_freq: f64, power: f64) -> Self {
        Emitter {
            id: id.into(),
            center_freq,
            bandwidth: 0.0,
            power,
            kind: EmitterKind::Tone,
            sweep: None,
            active_interval: always(),
        }
    }

    pub fn band_noise(id: impl Into<String>, center_freq: f64, bandwidth: f64, power: f64) -> Self {
        Emitter {
            id: id.into(),
            center_freq,
            bandwidth,
            power,
            kind: EmitterKind::BandNoise,
            sweep: None,
            active_interval: always(),
        }
    }

    pub fn active_between(mut self, start: f64, stop: f64) -> Self {
        self.active_interval = [start, stop];
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |reason: &str| {
            Err(EnvError::InvalidEmitter {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.power >= 0.0) {
            return bad("power must be >= 0");
        }
        match self.kind {
            EmitterKind::Tone if self.bandwidth != 0.0 => return bad("tones have zero bandwidth"),
            EmitterKind::BandNoise | EmitterKind::SweepingBandNoise if !(self.bandwidth > 0.0) => {
                return bad("band noise needs bandwidth > 0")
            }
            EmitterKind::SweepingBandNoise if self.sweep.is_none() => {
                return bad("sweeping emitter needs a sweep schedule")
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if !(s.start_freq <= s.stop_freq) || !(s.step > 0.0) || !(s.dwell > 0.0) {
                return bad("sweep needs start <= stop, step > 0 and dwell > 0");
            }
        }
        let [start, stop] = self.active_interval;
        if !(start <= stop) {
            return bad("active interval start must not exceed stop");
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        let [start, stop] = self.active_interval;
        t >= start && t < stop
    }

    /// True if the emitter is on at any instant of `[from, to)`.
    pub fn is_active_during(&self, from: f64, to: f64) -> bool {
        let [start, stop] = self.active_interval;
        start < to && from < stop
    }

    /// Center frequency at time `t`. Sweeps step from `start_freq` every
    /// `dwell` seconds after activation and hold at `stop_freq`.
    pub fn current_center(&self, t: f64) -> f64 {
        match &self.sweep {
            None => self.center_freq,
            Some(s) => {
                let elapsed = (t - self.active_interval[0]).max(0.0);
                let steps = (elapsed / s.dwell).floor();
                (s.start_freq + steps * s.step).min(s.stop_freq)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontEndConfig {
    pub sample_rate: f64,
    pub max_instantaneous_bw: f64,
    pub tune_delay: f64,
    pub noise_floor_power: f64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            sample_rate: 4e6,
            max_instantaneous_bw: 4e6,
            tune_delay: 0.005,
            noise_floor_power: 1e-6,
        }
    }
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidFrontEnd(m.to_string()));
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate must be > 0");
        }
        if !(self.max_instantaneous_bw > 0.0) || self.max_instantaneous_bw > self.sample_rate {
            return bad("max_instantaneous_bw must be in (0, sample_rate]");
        }
        if !(self.tune_delay >= 0.0) {
            return bad("tune_delay must be >= 0");
        }
        if !(self.noise_floor_power >= 0.0) {
            return bad("noise_floor_power must be >= 0");
        }
        Ok(())
    }
}

/// A run of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    pub center_freq: f64,
    pub sample_rate: f64,
    /// Time of the first retained sample.
    pub start_time: f64,
}

impl IqBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    emitters: Vec<Emitter>,
    pub frontend: FrontEndConfig,
    pub rng_seed: u64,
}

impl Environment {
    pub fn new(emitters: Vec<Emitter>, frontend: FrontEndConfig, rng_seed: u64) -> Result<Self, EnvError> {
        frontend.validate()?;
        let mut seen = HashSet::new();
        for e in &emitters {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(EnvError::DuplicateEmitter(e.id.clone()));
            }
        }
        Ok(Environment {
            emitters,
            frontend,
            rng_seed,
        })
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn push_emitter(&mut self, emitter: Emitter) -> Result<(), EnvError> {
        emitter.validate()?;
        if self.emitters.iter().any(|e| e.id == emitter.id) {
            return Err(EnvError::DuplicateEmitter(emitter.id));
        }
        self.emitters.push(emitter);
        Ok(())
    }

    pub fn emitter_mut(&mut self, id: &str) -> Option<&mut Emitter> {
        self.emitters.iter_mut().find(|e| e.id == id)
    }

    /// Tunes to `center_freq` at `at_time` and records for `duration`
    /// seconds. The first `tune_delay` seconds are discarded; emitter
    /// activity and sweep position are evaluated at the first retained
    /// sample.
    pub fn capture(&self, center_freq: f64, duration: f64, at_time: f64) -> Result<IqBuffer, EnvError> {
        let fe = &self.frontend;
        let empty = EnvError::EmptyCapture {
            duration,
            tune_delay: fe.tune_delay,
        };
        if !(duration > fe.tune_delay) {
            return Err(empty);
        }
        let n = ((duration - fe.tune_delay) * fe.sample_rate).round() as usize;
        if n == 0 {
            return Err(empty);
        }
        let start_time = at_time + fe.tune_delay;
        let request_key = [center_freq.to_bits(), at_time.to_bits()];
        let mut samples = vec![Complex64::new(0.0, 0.0); n];

        for e in self.emitters.iter().filter(|e| e.is_active(start_time)) {
            let offset = e.current_center(start_time) - center_freq;
            match e.kind {
                EmitterKind::Tone => add_tone(&mut samples, offset, e.power, fe),
                EmitterKind::BandNoise | EmitterKind::SweepingBandNoise => {
                    let mut rng =
                        rng::substream(self.rng_seed, &[rng::hash_str(&e.id), request_key[0], request_key[1]]);
                    add_band_noise(&mut samples, offset, e.bandwidth, e.power, fe, &mut rng);
                }
            }
        }

        if fe.noise_floor_power > 0.0 {
            let mut rng = rng::substream(self.rng_seed, &[NOISE_STREAM, request_key[0], request_key[1]]);
            let sigma = (fe.noise_floor_power / 2.0).sqrt();
            for s in samples.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *s += Complex64::new(re * sigma, im * sigma);
            }
        }

        Ok(IqBuffer {
            samples,
            center_freq,
            sample_rate: fe.sample_rate,
            start_time,
        })
    }
}

fn add_tone(samples: &mut [Complex64], offset: f64, amplitude: f64, fe: &FrontEndConfig) {
    if offset.abs() > fe.max_instantaneous_bw / 2.0 || amplitude == 0.0 {
        return;
    }
    let cycles_per_sample = offset / fe.sample_rate;
    for (n, s) in samples.iter_mut().enumerate() {
        let phase = (cycles_per_sample * n as f64).fract();
        *s += Complex64::from_polar(amplitude, TAU * phase);
    }
}

/// Adds white Gaussian noise occupying `[offset - bw/2, offset + bw/2]`,
/// restricted to the instantaneous window. The expected power over the full
/// band is `amplitude²`; the visible share is whatever falls in the window.
fn add_band_noise<R: Rng>(
    samples: &mut [Complex64],
    offset: f64,
    bandwidth: f64,
    amplitude: f64,
    fe: &FrontEndConfig,
    rng: &mut R,
) {
    if amplitude == 0.0 {
        return;
    }
    let n = samples.len();
    let spacing = fe.sample_rate / n as f64;
    let half_window = fe.max_instantaneous_bw / 2.0;
    // Grid index range representable without aliasing.
    let lowest = -((n / 2) as i64);
    let highest = ((n - 1) / 2) as i64;

    let band_lo = ((offset - bandwidth / 2.0) / spacing).ceil() as i64;
    let band_hi = ((offset + bandwidth / 2.0) / spacing).floor() as i64;
    let (band_lo, band_hi, occupied) = if band_hi >= band_lo {
        (band_lo, band_hi, (band_hi - band_lo + 1) as f64)
    } else {
        // Narrower than one grid bin: all power in the nearest bin.
        let j = (offset / spacing).round() as i64;
        if (j as f64 * spacing - offset).abs() > bandwidth / 2.0 + spacing {
            return;
        }
        (j, j, 1.0)
    };

    let win_lo = (-half_window / spacing).ceil() as i64;
    let win_hi = (half_window / spacing).floor() as i64;
    let lo = band_lo.max(win_lo).max(lowest);
    let hi = band_hi.min(win_hi).min(highest);
    if lo > hi {
        return;
    }

    let sigma = (amplitude * amplitude / occupied / 2.0).sqrt();
    SYNTH.with(|cell| {
        let synth = &mut *cell.borrow_mut();
        let spectrum = &mut synth.spectrum;
        spectrum.clear();
        spectrum.resize(n, Complex64::new(0.0, 0.0));
        for j in lo..=hi {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spectrum[j.rem_euclid(n as i64) as usize] = Complex64::new(re * sigma, im * sigma);
        }
        let fft = synth.planner.plan_fft_inverse(n);
        let need = fft.get_inplace_scratch_len();
        if synth.scratch.len() < need {
            synth.scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        fft.process_with_scratch(spectrum, &mut synth.scratch[..need]);
        for (s, x) in samples.iter_mut().zip(spectrum.iter()) {
            *s += x;
        }
    });
}
