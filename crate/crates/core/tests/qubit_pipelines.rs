use rydq_core::qubit::{
    correct_drift, fit_rabi, fit_ramsey, ramsey_expected, ramsey_scan, ramsey_signal,
    synthetic_rabi, DriftReference, MeasurementChannel, RabiConfig, RamseyConfig,
};

fn rabi_grid() -> Vec<f64> {
    (0..60).map(|i| i as f64 * 0.01).collect()
}

#[test]
fn rabi_frequency_recovered_from_shot_noise() {
    let cfg = RabiConfig::default();
    let ch = MeasurementChannel::new(0.93, 0.92).unwrap();
    let t = rabi_grid();
    for seed in 0..5 {
        let y = synthetic_rabi(&cfg, &ch, &t, seed).unwrap();
        let fit = fit_rabi(&t, &y, &ch).unwrap();
        assert!((fit.omega - 5.3).abs() < 0.05, "seed {seed}: {fit:?}");
    }
}

#[test]
fn drift_correction_preserves_frequency() {
    let cfg = RabiConfig::default();
    let ch = MeasurementChannel::new(0.93, 0.92).unwrap();
    let t = rabi_grid();
    let y = synthetic_rabi(&cfg, &ch, &t, 11).unwrap();
    let reference = fit_rabi(&t, &y, &ch).unwrap();
    // Slow reference drift: observed = 0.8·p̃ + 0.03.
    let drift = |q: f64| 0.8 * q + 0.03;
    let drifted: Vec<f64> = y.iter().map(|&q| drift(q)).collect();
    let refs = DriftReference {
        up: drift(ch.apply(1.0).unwrap()),
        down: drift(ch.apply(0.0).unwrap()),
    };
    let corrected = correct_drift(&ch, &refs, &drifted).unwrap();
    let fit = fit_rabi(&t, &corrected, &ch).unwrap();
    assert!((fit.omega - reference.omega).abs() < 1e-6);
}

#[test]
fn ramsey_pipeline_recovers_dephasing_time() {
    let cfg = RamseyConfig::default();
    let taus: Vec<f64> = (0..8).map(|i| 3.0 * i as f64).collect();
    let fringes = ramsey_scan(&cfg, &taus, 150, 42).unwrap();
    let c: Vec<f64> = fringes.iter().map(|f| f.contrast).collect();
    let fit = fit_ramsey(&taus, &c).unwrap();
    assert!((fit.t2_star - 15.0).abs() < 1.5, "{fit:?}");
    assert!((fit.amplitude - 0.88).abs() < 0.03, "{fit:?}");
}

#[test]
fn ramsey_monte_carlo_matches_analytic() {
    let cfg = RamseyConfig::default();
    let n = 10_000u64;
    for (i, tau) in (0..8).map(|i| 3.0 * i as f64).enumerate() {
        for phase in [0.0, 1.0, 2.5] {
            let mc = ramsey_signal(&cfg, tau, phase, n, 500 + i as u64).unwrap();
            let p = ramsey_expected(&cfg, tau, phase);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((mc - p).abs() < 3.0 * se, "tau {tau} phase {phase}: {mc} vs {p}");
        }
    }
}
