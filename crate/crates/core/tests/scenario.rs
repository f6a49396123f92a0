use dsa_core::scenario::{
    emit, initial_rendezvous, run_dsa, run_dsa_point, run_static, write_rows, PuSweep, ScenarioConfig,
};

fn small() -> ScenarioConfig {
    ScenarioConfig {
        seeds: vec![1, 2, 3],
        pu_sweep: PuSweep {
            start: 2479.7e6,
            stop: 2480.3e6,
            packets_per_point: 400,
            ..PuSweep::default()
        },
        ..ScenarioConfig::default()
    }
}

#[test]
fn static_without_pu_is_perfect() {
    let mut cfg = small();
    cfg.pu.enabled = false;
    let r = run_static(&cfg).unwrap();
    assert!(r.per_seed.iter().all(|x| x.row.psr == 1.0 && x.row.prr == 1.0));
    let grid: Vec<f64> = r.summary.iter().map(|x| x.spectral_distance).collect();
    assert_eq!(grid, vec![0.0, 1e5, 2e5, 3e5]);
}

#[test]
fn dsa_without_pu_only_loses_sensing_outages() {
    let mut cfg = small();
    cfg.pu.enabled = false;
    let r = run_dsa(&cfg).unwrap();
    for run in &r.runs {
        let s = run.link.stats;
        assert_eq!(run.rerendezvous, 0);
        assert_eq!(s.psr, 1.0 - f64::from(s.dropped_sensing) / f64::from(s.sent));
    }
}

#[test]
fn sensing_time_matches_dwell_formula() {
    let cfg = small();
    let dwell = cfg.environment.frontend.tune_delay + (cfg.sensor.avg_vectors * 640) as f64 / cfg.sensor.usrp_rate;
    let initial = initial_rendezvous(&cfg, 1).unwrap();
    let chunks = 27.0 + 1.0;
    assert!((initial.sensing_time - chunks * dwell).abs() < 1e-9);
    for off in [0.0, 0.3e6] {
        let run = run_dsa_point(&cfg, 1, off, &initial).unwrap();
        assert!(run.dwells > 0);
        let want = run.dwells as f64 * dwell;
        assert!(
            (run.sensing_time - want).abs() < 1e-9 * want,
            "{} vs {want}",
            run.sensing_time
        );
        let link_time = f64::from(cfg.pu_sweep.packets_per_point) * cfg.link.inter_packet_time;
        assert!(run.sensing_time < link_time);
    }
}

#[test]
fn dsa_beats_static_near_the_carrier() {
    let cfg = small();
    let s = run_static(&cfg).unwrap();
    let d = run_dsa(&cfg).unwrap();
    for (a, b) in s.summary.iter().zip(&d.sweep.summary) {
        assert!(
            b.psr >= a.psr,
            "{}: dsa {} static {}",
            a.spectral_distance,
            b.psr,
            a.psr
        );
    }
    assert!(d.runs.iter().all(|r| r.failures == 0));
}

#[test]
fn reports_are_byte_stable() {
    let cfg = small();
    let r = run_static(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = emit(dir.path(), "a.csv", |w| write_rows(&r.summary, w)).unwrap();
    let b = emit(dir.path(), "b.csv", |w| {
        write_rows(&run_static(&cfg).unwrap().summary, w)
    })
    .unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn unwritable_output_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit(&blocker, "x.csv", |w| write_rows(&[], w)).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
