//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs under a plain `main` so the report is printed on every `cargo test`.
//! Criteria listed in `KNOWN_RED` are reported but do not fail the process;
//! every other failure does.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2};
use towermdc::config::{bundled, RunConfig};
use towermdc::control::{
    mdc_step, step_demod_controller, ControllerSpec, McState, MdcOptions, SchedulingTables,
};
use towermdc::freqdom::{
    bode_sweep, demod_plant_response, log_grid, modulated_controller_response, rga, BodeTarget,
};
use towermdc::sigproc::{default_segment_len, lowpass_first_order, welch_psd, Window};
use towermdc::simulate::{
    fit_1p_amplitude, initial_state, residual_1p_amplitude, run_simulation, SimulationTrace,
};
use towermdc::turbine::{tower_tf, TurbineParams};
use towermdc::Complex64;

/// Criteria that are known not to hold; see the README.
const KNOWN_RED: [u32; 1] = [7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Plant frequency response written out by hand: `s_f j w / (k - m w^2 + j d w)`.
fn g_direct(p: &TurbineParams, w: f64) -> Complex64 {
    Complex64::new(0.0, p.s_f * w) / Complex64::new(p.k - p.m * w * w, p.effective_damping() * w)
}

fn preset(name: &str) -> RunConfig {
    RunConfig::parse(bundled(name).expect("bundled preset"), Path::new(".")).expect("preset parses")
}

fn simulate(cfg: &RunConfig) -> SimulationTrace {
    let scenario = cfg.wind_scenario().unwrap();
    let mut ctl = cfg.controller_set().unwrap();
    let init = initial_state(&cfg.turbine, scenario.initial_wind()).unwrap();
    run_simulation(
        &cfg.turbine,
        &mut ctl,
        &scenario,
        cfg.scenario.as_ref().unwrap().dt,
        init,
    )
    .unwrap()
}

fn uncontrolled(mut cfg: RunConfig) -> RunConfig {
    cfg.controller.mdc = None;
    cfg
}

fn with_dt(mut cfg: RunConfig, dt: f64) -> RunConfig {
    cfg.scenario.as_mut().unwrap().dt = dt;
    cfg
}

const FINAL: (f64, f64) = (1150.0, 1250.0);

// 1. Resonance location and peak height of the synthetic plant.
fn criterion_1() -> Outcome {
    let p = TurbineParams::synthetic();
    let g = tower_tf(&p, true);
    let grid = log_grid(0.01, 10.0, 4000);
    let table = bode_sweep(&BodeTarget::Plant(g.clone()), &grid).unwrap();
    let mags = table.magnitudes(0);
    let i = (0..mags.len())
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .unwrap();
    let step = (grid[i + 1] - grid[i - 1]) / 2.0;
    let w_n = (p.k / p.m).sqrt();
    // Published value, four significant figures.
    #[allow(clippy::approx_constant)]
    let published = 0.7071;
    let located = (grid[i] - w_n).abs() <= step;

    let exact = bode_sweep(&BodeTarget::Plant(g), &[w_n]).unwrap().rows[0].mag_db[0];
    let expected = p.s_f / p.effective_damping();
    let rel = (10f64.powf(exact / 20.0) / expected - 1.0).abs();
    outcome(
        located && rel <= 1e-9 && (w_n - published).abs() < 1e-4,
        format!(
            "peak at {:.5} rad/s (w_n {:.5}, step {:.1e}); |G(j w_n)| rel err {rel:.1e}",
            grid[i], w_n, step
        ),
    )
}

// 2. Sideband peaks of G2_11 sit 6 dB below the nominal resonance peak.
fn criterion_2() -> Outcome {
    let p = TurbineParams::synthetic();
    let g = tower_tf(&p, true);
    let w_n = p.natural_frequency();
    let nominal_db = 20.0 * (p.s_f / p.effective_damping()).log10();
    let mut ok = true;
    let mut notes = Vec::new();
    for w_r in [0.5, 1.2] {
        for centre in [(w_n - w_r).abs(), w_n + w_r] {
            let step = 1e-5;
            let grid: Vec<f64> = (0..=10_000)
                .map(|i| centre - 0.05 + i as f64 * step)
                .collect();
            let t = BodeTarget::DemodPlant {
                plant: g.clone(),
                omega_r: w_r,
                psi_off: 0.0,
            };
            let mags = bode_sweep(&t, &grid).unwrap().magnitudes(0);
            let i = (0..mags.len())
                .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
                .unwrap();
            // Oracle: half the sum of the two shifted plant responses.
            let direct = 0.5 * (g_direct(&p, grid[i] - w_r) + g_direct(&p, grid[i] + w_r));
            let drop = mags[i] - nominal_db;
            // The mirror term pulls the peak slightly off |w_n -+ w_r|; accept
            // a fifth of the resonance half-power half-width d/(2m).
            let here = (drop + 6.0).abs() <= 0.1
                && (grid[i] - centre).abs() <= 0.2 * p.effective_damping() / (2.0 * p.m)
                && i > 0
                && i < mags.len() - 1
                && (20.0 * direct.norm().log10() - mags[i]).abs() < 1e-9;
            ok &= here;
            notes.push(format!("w_r={w_r}: {:.4} rad/s {drop:+.3} dB", grid[i]));
        }
    }
    outcome(ok, notes.join("; "))
}

fn lambda_oracle(m: [[Complex64; 2]; 2]) -> Complex64 {
    let g = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let inv_t = g.try_inverse().unwrap().transpose();
    g[(0, 0)] * inv_t[(0, 0)]
}

// 3. RGA with and without the optimal offset.
fn criterion_3() -> Outcome {
    let p = TurbineParams::synthetic();
    let g = tower_tf(&p, true);
    let w_n = p.natural_frequency();
    let at_wn = rga(&g, w_n, 0.0).unwrap().lambda11_abs;
    let at_05 = rga(&g, 0.5, 0.0).unwrap().lambda11_abs;
    let at_12 = rga(&g, 1.2, 0.0).unwrap().lambda11_abs;
    let mut ok = (at_wn - 1.0).abs() <= 1e-6 && at_05 < 0.05 && at_12 < 0.05;

    let mut worst_offset: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for i in 0..=140 {
        let w = 0.1 + 0.01 * i as f64;
        let psi_star = -g_direct(&p, w).arg();
        for psi in [0.0, psi_star] {
            let r = rga(&g, w, psi).unwrap();
            let l = r.lambda;
            for (k, row) in l.iter().enumerate() {
                worst_sum = worst_sum.max((row[0] + row[1] - 1.0).norm());
                worst_sum = worst_sum.max((l[0][k] + l[1][k] - 1.0).norm());
            }
            let m = demod_plant_response(&g, Complex64::new(0.0, 0.0), w, psi)
                .unwrap()
                .matrix;
            worst_oracle = worst_oracle.max((lambda_oracle(m) - l[0][0]).norm());
        }
        worst_offset = worst_offset.max((rga(&g, w, psi_star).unwrap().lambda11_abs - 1.0).abs());
    }
    ok &= worst_offset <= 1e-9 && worst_sum <= 1e-10 && worst_oracle <= 1e-9;
    outcome(
        ok,
        format!(
            "|L11| no offset: {at_wn:.9} at w_n, {at_05:.4} at 0.5, {at_12:.4} at 1.2; offset max dev {worst_offset:.1e}; sums {worst_sum:.1e}; vs inverse {worst_oracle:.1e}"
        ),
    )
}

// 4. Off-diagonal nulling with the tabulated offset.
fn criterion_4() -> Outcome {
    let p = TurbineParams::synthetic();
    let g = tower_tf(&p, true);
    let grid: Vec<f64> = (0..=140).map(|i| 0.1 + 0.01 * i as f64).collect();
    let tables = SchedulingTables::build(&g, &grid).unwrap();
    let (mut worst_ratio, mut worst_mag): (f64, f64) = (0.0, 0.0);
    for (i, &w) in grid.iter().enumerate() {
        let r = demod_plant_response(&g, Complex64::new(0.0, 0.0), w, tables.psi_star[i]).unwrap();
        worst_ratio = worst_ratio.max(r.g12().norm() / r.g11().norm());
        worst_mag = worst_mag.max((r.g11().norm() / g_direct(&p, w).norm() - 1.0).abs());
    }
    outcome(
        worst_ratio <= 1e-9 && worst_mag <= 1e-12,
        format!("max |G2_12|/|G2_11| {worst_ratio:.1e}; max | |G2_11|/|G| - 1 | {worst_mag:.1e}"),
    )
}

/// Least-squares fit of a constant plus sine/cosine pairs, accumulated as
/// normal equations so long records stay cheap.
struct HarmonicFit {
    freqs: Vec<f64>,
    ata: DMatrix<f64>,
    atb: DVector<f64>,
}

impl HarmonicFit {
    fn new(freqs: Vec<f64>) -> Self {
        let n = 1 + 2 * freqs.len();
        Self {
            freqs,
            ata: DMatrix::zeros(n, n),
            atb: DVector::zeros(n),
        }
    }

    fn push(&mut self, t: f64, y: f64) {
        let mut row = vec![1.0];
        for f in &self.freqs {
            let (s, c) = (f * t).sin_cos();
            row.push(s);
            row.push(c);
        }
        let r = DVector::from_vec(row);
        self.ata += &r * r.transpose();
        self.atb += &r * y;
    }

    /// Complex gain on the first frequency for an input `sin(w t)`:
    /// `A sin(w t + phi) = A cos(phi) sin + A sin(phi) cos`.
    fn gain(&self) -> Complex64 {
        let x = self
            .ata
            .clone()
            .cholesky()
            .expect("well-posed fit")
            .solve(&self.atb);
        Complex64::new(x[1], x[2])
    }
}

// 5. Time-domain demodulate -> LTI -> modulate chain matches the closed forms.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (w_r, dt) = (0.5, 0.002);
    let specs = [
        ControllerSpec::proportional(1.3),
        ControllerSpec::integrator(0.7),
        ControllerSpec::low_pass(1.1, 0.5),
    ];
    let probes = [0.07, 0.15, 0.3, 0.42, 0.58, 0.7, 0.85, 1.1, 1.35, 1.8];
    let (settle, span) = (30.0, 100.0);
    let (mut worst_mag, mut worst_phase, mut worst_null): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for spec in &specs {
        for psi in [0.0, FRAC_PI_4, -FRAC_PI_2] {
            let options = MdcOptions {
                use_offset: false,
                fixed_psi: psi,
                ..MdcOptions::default()
            };
            for &w in &probes {
                let mut state = McState::default();
                let n_settle = (settle / dt) as usize;
                let n = n_settle + (span / dt) as usize;
                let mut fit = HarmonicFit::new(vec![w, w_r, (w - 2.0 * w_r).abs(), w + 2.0 * w_r]);
                for i in 0..n {
                    let t = i as f64 * dt;
                    let out = mdc_step(
                        &mut state,
                        (w * t).sin(),
                        w_r,
                        w_r * t,
                        spec,
                        None,
                        dt,
                        &options,
                    );
                    if i >= n_settle {
                        fit.push(t, out.dtg);
                    }
                }
                let measured = fit.gain();
                let expected = spec.feedback_sign
                    * modulated_controller_response(spec, Complex64::new(0.0, w), w_r, psi)
                        .unwrap();
                let scale = 2.0 * spec.gain;
                if expected.norm() < 1e-9 * scale {
                    // Nulled response (cos(psi) = 0): no phase to compare.
                    worst_null = worst_null.max(measured.norm() / scale);
                    continue;
                }
                worst_mag = worst_mag.max((measured.norm() / expected.norm() - 1.0).abs());
                let dphi = (measured / expected).arg().to_degrees().abs();
                worst_phase = worst_phase.max(dphi);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_mag < 0.01 && worst_phase < 1.0 && worst_null < 0.01 && secs < 10.0,
        format!(
            "3 kinds x 3 offsets x {} probes: max mag err {:.3} %, max phase err {worst_phase:.3} deg, nulled residual {:.1e} of 2K, {secs:.1} s",
            probes.len(),
            100.0 * worst_mag,
            worst_null
        ),
    )
}

// 6. Integrator MDC with the optimal offset over the staircase.
fn criterion_6() -> Outcome {
    let cfg = preset("paper-6a-cm2-offset");
    let start = Instant::now();
    let tr = simulate(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let base = simulate(&uncontrolled(cfg.clone()));
    let ctl = residual_1p_amplitude(&tr, FINAL).unwrap();
    let unc = residual_1p_amplitude(&base, FINAL).unwrap();
    let target = cfg.turbine.a_sd / cfg.turbine.s_f;
    let ratio = ctl.xdot / unc.xdot;
    outcome(
        !tr.diverged && (ctl.dtg / 9000.0 - 1.0).abs() <= 0.02 && (target - 9000.0).abs() < 1e-9 && ratio < 0.02 && secs < 30.0,
        format!(
            "dTg 1P {:.1} N m (a_sd/s_f {target:.0}); xdot 1P {:.3e} vs uncontrolled {:.3e} ({:.2} %); {secs:.1} s",
            ctl.dtg,
            ctl.xdot,
            unc.xdot,
            100.0 * ratio
        ),
    )
}

// 7. Fixed -90 deg offset: divergence after the resonance dwell.
fn criterion_7() -> Outcome {
    let cfg = preset("paper-6a-cm2-nooffset");
    let tr = simulate(&cfg);
    let flagged = tr.diverged && tr.diverged_at.is_some_and(|t| t > 500.0);

    // Diagnosis: envelope growth and the averaged channel-loop pole at v = 10.
    let early = residual_1p_amplitude(&tr, (1000.0 + 50.0, 1100.0))
        .map(|r| r.dtg)
        .unwrap_or(f64::NAN);
    let late = residual_1p_amplitude(&tr, FINAL)
        .map(|r| r.dtg)
        .unwrap_or(f64::NAN);
    let p = &cfg.turbine;
    let w_r = p.equilibrium_rotor_speed(10.0).unwrap();
    let g = g_direct(p, w_r);
    let spec = cfg.controller.mdc.unwrap();
    let pole_re = spec.feedback_sign
        * spec.gain
        * g.norm()
        * (g.arg() + cfg.controller.options.fixed_psi).cos();
    let max_dtg = tr.rows.iter().map(|r| r.dtg.abs()).fold(0.0, f64::max);
    let threshold = 1e3 * p.tg_rated;
    let needed = (threshold / late).ln() / pole_re;
    outcome(
        flagged,
        format!(
            "diverged={} ; max |dTg| {max_dtg:.0} N m vs threshold {threshold:.2e}; 1P dTg {early:.0} -> {late:.0} N m over the last dwell; averaged loop pole Re {pole_re:+.2e} 1/s (unstable) needs ~{needed:.0} s more to reach the threshold",
            tr.diverged
        ),
    )
}

// 8. Low-pass MDC: bounded torque, partial attenuation.
fn criterion_8() -> Outcome {
    let cfg = preset("paper-6a-cm3-offset");
    let tr = simulate(&cfg);
    let lp = residual_1p_amplitude(&tr, FINAL).unwrap();
    let int = residual_1p_amplitude(&simulate(&preset("paper-6a-cm2-offset")), FINAL).unwrap();
    let unc = residual_1p_amplitude(&simulate(&uncontrolled(cfg.clone())), FINAL).unwrap();
    let peak_v10 = tr
        .window(1000.0, 1250.0)
        .iter()
        .map(|r| r.dtg.abs())
        .fold(0.0, f64::max);
    let peak_all = tr.rows.iter().map(|r| r.dtg.abs()).fold(0.0, f64::max);
    outcome(
        !tr.diverged && lp.dtg < 9000.0 && peak_v10 <= 5500.0 && int.xdot < lp.xdot && lp.xdot < unc.xdot,
        format!(
            "final dTg 1P {:.0} N m; max |dTg| at v=10 {peak_v10:.0} N m (whole run {peak_all:.0}); xdot 1P {:.3e} < {:.3e} < {:.3e}",
            lp.dtg, int.xdot, lp.xdot, unc.xdot
        ),
    )
}

// 9. Rotor speed settles at the optimal tip-speed ratio.
fn criterion_9() -> Outcome {
    let p = TurbineParams::synthetic();
    let mut ok = true;
    let mut notes = Vec::new();
    for v in [5.0, 6.25, 10.0] {
        let mut cfg = uncontrolled(preset("paper-6a-cm2-offset"));
        cfg.scenario.as_mut().unwrap().kind = towermdc::config::ScenarioKindConfig::Constant(v);
        cfg.scenario.as_mut().unwrap().duration = 300.0;
        let tr = simulate(&cfg);
        let tail = tr.window(250.0, 300.0);
        let w = tail.iter().map(|r| r.omega_r).sum::<f64>() / tail.len() as f64;
        let ideal = p.lambda_star * v / p.radius;
        let mut here = (w / ideal - 1.0).abs() <= 0.05;
        if v == 6.25 {
            here &= (w / p.natural_frequency() - 1.0).abs() <= 0.05;
        }
        ok &= here;
        notes.push(format!("v={v}: {w:.4} (ideal {ideal:.4})"));
    }
    outcome(ok, notes.join("; "))
}

// 10. Property suites.
fn criterion_10() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // Grid refinement on the staircase scenario.
    let mut worst_refine: f64 = 0.0;
    for cfg in [
        uncontrolled(preset("paper-6a-cm2-offset")),
        preset("paper-6a-cm2-offset"),
        preset("paper-6a-cm3-offset"),
    ] {
        let a = residual_1p_amplitude(&simulate(&cfg), FINAL).unwrap();
        let b = residual_1p_amplitude(&simulate(&with_dt(cfg.clone(), 0.005)), FINAL).unwrap();
        worst_refine = worst_refine.max((a.xdot / b.xdot - 1.0).abs());
        if b.dtg > 0.0 {
            worst_refine = worst_refine.max((a.dtg / b.dtg - 1.0).abs());
        }
    }
    ok &= worst_refine < 0.005;
    notes.push(format!("refine {:.2} %", 100.0 * worst_refine));

    // Parseval on a sinusoid and on a simulated velocity.
    let dt = 0.01;
    let sine: Vec<f64> = (0..100_000)
        .map(|i| 2.0 * (0.9 * i as f64 * dt).sin())
        .collect();
    let ps = welch_psd(&sine, dt, 8192, 0.5, Window::Hann).unwrap();
    let tr = simulate(&uncontrolled(preset("paper-6a-cm2-offset")));
    // Welch integrates to the variance only for stationary records, so use
    // the settled part of the last dwell.
    let xdot: Vec<f64> = tr.window(1050.0, 1250.0).iter().map(|r| r.xdot).collect();
    let px = welch_psd(
        &xdot,
        dt,
        default_segment_len(xdot.len()),
        0.5,
        Window::Hann,
    )
    .unwrap();
    let var = towermdc::sigproc::std_dev(&xdot).powi(2);
    let parseval = (ps.integral() / 2.0 - 1.0)
        .abs()
        .max((px.integral() / var - 1.0).abs());
    ok &= parseval < 0.05;
    notes.push(format!("Parseval {:.2} %", 100.0 * parseval));

    // Filter -3 dB point.
    let (wc, fdt) = (0.2, 0.01);
    let u: Vec<f64> = (0..200_000).map(|i| (wc * i as f64 * fdt).sin()).collect();
    let y = lowpass_first_order(&u, fdt, wc);
    let th: Vec<f64> = (100_000..200_000)
        .map(|i| wc * (i + 1) as f64 * fdt)
        .collect();
    let gain = fit_1p_amplitude(&th, &y[100_000..]);
    let db3 = (gain * 2f64.sqrt() - 1.0).abs();
    ok &= db3 < 0.01;
    notes.push(format!("-3 dB {:.3} %", 100.0 * db3));

    // Determinism.
    let cfg = preset("paper-6a-cm2-offset");
    let (a, b) = (simulate(&cfg), simulate(&cfg));
    let same = a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|(x, y)| {
            [x.xdot, x.omega_r, x.theta, x.dtg, x.omega_r_filtered]
                .iter()
                .zip([y.xdot, y.omega_r, y.theta, y.dtg, y.omega_r_filtered])
                .all(|(p, q)| p.to_bits() == q.to_bits())
        });
    ok &= same;
    notes.push(format!("deterministic {same}"));

    // Skew symmetry of G2 and linearity of the channel controllers.
    let p = TurbineParams::synthetic();
    let g = tower_tf(&p, true);
    let mut skew: f64 = 0.0;
    for i in 0..50 {
        let s = Complex64::new(-0.05 + 0.002 * i as f64, 0.03 * i as f64);
        let m = demod_plant_response(&g, s, 0.3 + 0.02 * i as f64, (i as f64 * 0.37).sin() * PI)
            .unwrap()
            .matrix;
        let scale = m[0][0].norm().max(m[0][1].norm());
        skew = skew.max(((m[0][0] - m[1][1]).norm() + (m[0][1] + m[1][0]).norm()) / scale);
    }
    let mut lin: f64 = 0.0;
    for spec in [
        ControllerSpec::integrator(2.0),
        ControllerSpec::low_pass(3.0, 0.4),
    ] {
        let (mut s1, mut s2, mut s3) = (McState::default(), McState::default(), McState::default());
        for i in 0..2000 {
            let t = i as f64 * 0.01;
            let u1 = ((0.3 * t).sin(), (1.1 * t).cos());
            let u2 = ((2.3 * t).cos(), t.sin() * 0.5);
            let y1 = step_demod_controller(&mut s1, u1, &spec, 0.01);
            let y2 = step_demod_controller(&mut s2, u2, &spec, 0.01);
            let y3 = step_demod_controller(
                &mut s3,
                (2.0 * u1.0 - 3.0 * u2.0, 2.0 * u1.1 - 3.0 * u2.1),
                &spec,
                0.01,
            );
            lin = lin.max(
                (y3.0 - (2.0 * y1.0 - 3.0 * y2.0)).abs() + (y3.1 - (2.0 * y1.1 - 3.0 * y2.1)).abs(),
            );
        }
    }
    ok &= skew <= 1e-12 && lin <= 1e-9;
    notes.push(format!("skew {skew:.1e}, linearity {lin:.1e}"));

    outcome(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (n, run) in criteria {
        let o = run();
        let tag = match (o.pass, KNOWN_RED.contains(&n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(n);
                "FAIL"
            }
        };
        println!("criterion {n:>2}: {tag} - {}", o.detail);
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
