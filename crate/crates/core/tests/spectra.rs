use std::f64::consts::PI;
use std::path::Path;

use approx::assert_relative_eq;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use towermdc::config::{bundled, RunConfig};
use towermdc::sigproc::{default_segment_len, std_dev, stddev_metrics, welch_psd, Window};
use towermdc::simulate::{initial_state, run_simulation, SimulationTrace};

#[test]
fn sinusoid_peak_and_power() {
    let (dt, w0, a) = (0.01, 1.3, 0.7);
    let x: Vec<f64> = (0..60_000)
        .map(|i| a * (w0 * i as f64 * dt).sin())
        .collect();
    let psd = welch_psd(&x, dt, default_segment_len(x.len()), 0.5, Window::Hann).unwrap();
    let (_, w_peak) = psd.peak();
    let bin = psd.omega[1] - psd.omega[0];
    assert!((w_peak - w0).abs() <= bin, "peak {w_peak}");
    assert_relative_eq!(psd.integral(), a * a / 2.0, max_relative = 0.05);
    assert!(psd.density.iter().all(|&d| d >= 0.0));
}

#[test]
fn white_noise_is_flat() {
    // Two-sided white noise of variance s2 at step dt has one-sided density
    // s2 dt / pi per rad/s.
    let (dt, sigma) = (0.05, 1.5);
    let mut rng = StdRng::seed_from_u64(7);
    let normal = Normal::new(0.0, sigma).unwrap();
    let x: Vec<f64> = (0..200_000).map(|_| normal.sample(&mut rng)).collect();
    let seg = 1024;
    let psd = welch_psd(&x, dt, seg, 0.5, Window::Hann).unwrap();
    let level = sigma * sigma * dt / PI;
    let interior = &psd.density[1..psd.density.len() - 1];
    let mean = interior.iter().sum::<f64>() / interior.len() as f64;
    assert_relative_eq!(mean, level, max_relative = 0.02);
    // Each bin averages ~390 segments (about half independent); allow 5 sigma.
    let rel_sd = 1.0 / ((psd.segments as f64) / 2.0).sqrt();
    let worst = interior
        .iter()
        .map(|d| (d / level - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(
        worst < 5.0 * rel_sd,
        "worst {worst}, bound {}",
        5.0 * rel_sd
    );
    assert_relative_eq!(psd.integral(), sigma * sigma, max_relative = 0.02);
}

fn staircase(mdc: bool) -> (SimulationTrace, RunConfig) {
    let mut cfg =
        RunConfig::parse(bundled("paper-6a-cm2-offset").unwrap(), Path::new(".")).unwrap();
    if !mdc {
        cfg.controller.mdc = None;
    }
    let sc = cfg.wind_scenario().unwrap();
    let init = initial_state(&cfg.turbine, sc.initial_wind()).unwrap();
    let tr = run_simulation(
        &cfg.turbine,
        &mut cfg.controller_set().unwrap(),
        &sc,
        0.01,
        init,
    )
    .unwrap();
    (tr, cfg)
}

#[test]
fn integrator_mdc_removes_the_1p_peak() {
    let (ctl, cfg) = staircase(true);
    let (unc, _) = staircase(false);
    let last = |tr: &SimulationTrace| -> Vec<f64> {
        tr.window(1050.0, 1250.0).iter().map(|r| r.xdot).collect()
    };
    let (a, b) = (last(&ctl), last(&unc));
    let seg = default_segment_len(a.len());
    let (pa, pb) = (
        welch_psd(&a, 0.01, seg, 0.5, Window::Hann).unwrap(),
        welch_psd(&b, 0.01, seg, 0.5, Window::Hann).unwrap(),
    );
    let w_r = cfg.turbine.equilibrium_rotor_speed(10.0).unwrap();
    let k = pa.omega.iter().position(|&w| w >= w_r).unwrap();
    // Strongest bin around the 1P line in each spectrum.
    let around = |d: &[f64]| d[k - 2..=k + 2].iter().cloned().fold(0.0, f64::max);
    let drop_db = 10.0 * (around(&pb.density) / around(&pa.density)).log10();
    assert!(drop_db > 20.0, "1P reduction {drop_db:.1} dB");

    let p = &cfg.turbine;
    let mc = stddev_metrics(&ctl, 200.0, p.g_box, p.gen_efficiency);
    let mu = stddev_metrics(&unc, 200.0, p.g_box, p.gen_efficiency);
    assert!(mc.sigma_xdot < mu.sigma_xdot);
    assert_eq!(mu.sigma_dtg_total, 0.0);
}

#[test]
fn stddev_ignores_constant_offsets() {
    let (mut tr, cfg) = staircase(true);
    let p = &cfg.turbine;
    let a = stddev_metrics(&tr, 200.0, p.g_box, p.gen_efficiency);
    for r in &mut tr.rows {
        r.xdot += 3.0;
        r.dtg += 500.0;
    }
    let b = stddev_metrics(&tr, 200.0, p.g_box, p.gen_efficiency);
    assert_relative_eq!(a.sigma_xdot, b.sigma_xdot, max_relative = 1e-9);
    assert_relative_eq!(a.sigma_dtg_total, b.sigma_dtg_total, max_relative = 1e-9);
    assert!(std_dev(&[1.0, 1.0, 1.0]) == 0.0);
}
