use dsa_core::rf_env::{Emitter, Environment, FrontEndConfig};
use dsa_core::scenario::{run_scan, ScenarioConfig};
use dsa_core::sensor::{
    blackman_harris, min_energy_frequency, sense_dwell, sweep, BandSweeper, SensorConfig, SpectrumSensor,
};

fn small() -> SensorConfig {
    SensorConfig {
        usrp_rate: 4e6,
        channel_bandwidth: 6250.0,
        avg_vectors: 64,
    }
}

#[test]
fn white_noise_bins_average_to_window_power() {
    let cfg = SensorConfig::default();
    let fe = FrontEndConfig::default();
    let env = Environment::new(vec![], fe, 11).unwrap();
    let buf = env
        .capture(2.45e9, cfg.dwell_time(fe.tune_delay).unwrap(), 0.0)
        .unwrap();
    let map = sense_dwell(&buf, &cfg).unwrap();
    let w = blackman_harris(640).unwrap();
    let expected = fe.noise_floor_power * w.iter().map(|x| x * x).sum::<f64>() / 640.0;
    let mean = map.entries.iter().map(|e| e.energy).sum::<f64>() / map.len() as f64;
    assert!((mean / expected - 1.0).abs() < 0.01, "{mean} vs {expected}");
    // 512 averages keep every bin within about ±25%.
    assert!(map.entries.iter().all(|e| (e.energy / expected - 1.0).abs() < 0.3));
}

#[test]
fn on_bin_tone_energy_is_coherent_gain() {
    let cfg = small();
    let fe = FrontEndConfig {
        noise_floor_power: 0.0,
        ..FrontEndConfig::default()
    };
    let f = 2.45e9 + 37.0 * 6250.0;
    let env = Environment::new(vec![Emitter::tone("t", f, 0.5)], fe, 1).unwrap();
    let buf = env
        .capture(2.45e9, cfg.dwell_time(fe.tune_delay).unwrap(), 0.0)
        .unwrap();
    let map = sense_dwell(&buf, &cfg).unwrap();
    let w = blackman_harris(640).unwrap();
    let expected = 0.25 * w.iter().sum::<f64>().powi(2) / 640.0;
    let peak = map.argmax().unwrap();
    assert_eq!(peak.carrier_freq, f);
    assert!((peak.energy / expected - 1.0).abs() < 1e-9);
}

#[test]
fn sweep_tiles_band_without_gaps() {
    let cfg = small();
    let env = Environment::new(vec![], FrontEndConfig::default(), 2).unwrap();
    let map = sweep(&env, (2400e6, 2410e6), &cfg, 0.0).unwrap();
    assert_eq!(map.len(), 1600);
    assert_eq!(map.entries[0].carrier_freq, 2400e6);
    assert!(map
        .entries
        .windows(2)
        .all(|w| w[1].carrier_freq - w[0].carrier_freq == 6250.0));
    let dwell = cfg.dwell_time(0.005).unwrap();
    assert_eq!(map.sensing_time, 4.0 * dwell);
}

#[test]
fn quiet_band_picks_the_lowest_minimum_and_loud_bins_are_avoided() {
    let cfg = small();
    let fe = FrontEndConfig::default();
    let pu = Emitter::band_noise("pu", 2401.5e6, 1e6, 2.0);
    let env = Environment::new(vec![pu], fe, 3).unwrap();
    let mut s = BandSweeper {
        env: &env,
        bands: vec![(2400e6, 2403e6)],
        cfg,
    };
    let map = s.sense(0.0).unwrap();
    let best = min_energy_frequency(&map, &[]).unwrap();
    let oracle = map
        .entries
        .iter()
        .min_by(|a, b| {
            a.energy
                .total_cmp(&b.energy)
                .then(a.carrier_freq.total_cmp(&b.carrier_freq))
        })
        .unwrap();
    assert_eq!(best.carrier_freq, oracle.carrier_freq);
    assert!((best.carrier_freq - 2401.5e6).abs() > 0.5e6);
}

/// Maximal runs of bins above `threshold`, as (first, last) carriers.
fn regions(map: &dsa_core::sensor::EnergyMap, threshold: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut open = false;
    for e in &map.entries {
        if e.energy > threshold {
            if open {
                out.last_mut().unwrap().1 = e.carrier_freq;
            } else {
                out.push((e.carrier_freq, e.carrier_freq));
                open = true;
            }
        } else {
            open = false;
        }
    }
    out
}

#[test]
fn scan_finds_two_band_noise_users() {
    let mut cfg = ScenarioConfig {
        sensor: small(),
        ..ScenarioConfig::default()
    };
    cfg.environment.emitters = vec![
        Emitter::band_noise("a", 2420e6, 2e6, 1.0),
        Emitter::band_noise("b", 2466e6, 1e6, 1.0),
    ];
    let maps = run_scan(&cfg, 1).unwrap();
    let found = regions(&maps[0], cfg.protocol.threshold);
    assert_eq!(found.len(), 2, "{found:?}");
    for ((lo, hi), (center, bw)) in found.iter().zip([(2420e6, 2e6), (2466e6, 1e6)]) {
        assert!((lo - (center - bw / 2.0)).abs() <= 2.0 * 6250.0, "{lo}");
        assert!((hi - (center + bw / 2.0)).abs() <= 2.0 * 6250.0, "{hi}");
    }
}

#[test]
fn quiet_scan_is_flat_and_sub_ghz_band_is_below_threshold() {
    let cfg = ScenarioConfig::default();
    let maps = run_scan(&cfg, 1).unwrap();
    for m in &maps {
        let hi = m.entries.iter().map(|e| e.energy_db).fold(f64::MIN, f64::max);
        let lo = m.entries.iter().map(|e| e.energy_db).fold(f64::MAX, f64::min);
        assert!(hi - lo < 3.0, "spread {}", hi - lo);
    }
    assert!(maps[1].entries.iter().all(|e| e.energy < cfg.protocol.threshold));
}
