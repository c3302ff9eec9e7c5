//! Fixed-step closed-loop simulation of tower, rotor and torque controllers.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{komega2_torque, modulate, MdcController, MdcOutput, DEFAULT_SPEED_CUTOFF};
use crate::sigproc::FirstOrderLowPass;
use crate::turbine::{
    periodic_load, state_derivative, ModelError, PlantState, TurbineParams, EPSILON_SPEED,
};

/// Largest accepted step, s.
pub const MAX_DT: f64 = 0.05;
/// Tower velocity treated as divergence, m/s.
pub const DIVERGENCE_XDOT: f64 = 1e3;
/// MDC torque treated as divergence, as a multiple of the rated torque.
pub const DIVERGENCE_TORQUE_FACTOR: f64 = 1e3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time step must lie in (0, {MAX_DT}] s, got {0}")]
    BadDt(f64),
    #[error("invalid wind scenario: {0}")]
    BadScenario(String),
    #[error("wind file {path} covers {covers} s but the run lasts {duration} s")]
    WindFileTooShort {
        path: PathBuf,
        covers: f64,
        duration: f64,
    },
    #[error("window [{t0}, {t1}] s is not inside the trace")]
    BadWindow { t0: f64, t1: f64 },
    #[error("rotor speed not steady over window (std {rel_std:.3e} of mean)")]
    NotSteady { rel_std: f64 },
}

/// Sampled wind speed, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindSeries {
    pub path: PathBuf,
    pub time: Vec<f64>,
    pub speed: Vec<f64>,
}

impl WindSeries {
    pub fn at(&self, t: f64) -> f64 {
        let i = self.time.partition_point(|&ti| ti <= t);
        if i == 0 {
            return self.speed[0];
        }
        if i == self.time.len() {
            return *self.speed.last().unwrap();
        }
        let (t0, t1) = (self.time[i - 1], self.time[i]);
        let w = (t - t0) / (t1 - t0);
        self.speed[i - 1] + w * (self.speed[i] - self.speed[i - 1])
    }

    pub fn end_time(&self) -> f64 {
        self.time.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindKind {
    Constant(f64),
    /// Steps of `step_dv` every `dwell_s` from `v_start`, held at `v_end`.
    Staircase {
        v_start: f64,
        v_end: f64,
        step_dv: f64,
        dwell_s: f64,
    },
    FromFile(WindSeries),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindScenario {
    pub kind: WindKind,
    pub duration: f64,
}

impl WindScenario {
    pub fn constant(v: f64, duration: f64) -> Self {
        Self {
            kind: WindKind::Constant(v),
            duration,
        }
    }

    pub fn staircase(v_start: f64, v_end: f64, step_dv: f64, dwell_s: f64, duration: f64) -> Self {
        Self {
            kind: WindKind::Staircase {
                v_start,
                v_end,
                step_dv,
                dwell_s,
            },
            duration,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::BadScenario(m.to_string()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        match &self.kind {
            WindKind::Constant(v) if !(*v > 0.0) => bad("wind speed must be positive"),
            WindKind::Staircase {
                v_start,
                v_end,
                step_dv,
                dwell_s,
            } => {
                if !(*v_start > 0.0 && *v_end > 0.0) {
                    bad("wind speeds must be positive")
                } else if !(*dwell_s > 0.0) {
                    bad("dwell must be positive")
                } else if !(step_dv.abs() > 0.0) && v_start != v_end {
                    bad("step must be nonzero")
                } else {
                    Ok(())
                }
            }
            WindKind::FromFile(series) => {
                if series.time.is_empty() || series.time.len() != series.speed.len() {
                    return bad("wind file has no samples");
                }
                if series.time.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("wind file times must increase");
                }
                if series.speed.iter().any(|v| !(*v > 0.0)) {
                    return bad("wind file speeds must be positive");
                }
                if series.time[0] > 0.0 || series.end_time() < self.duration {
                    return Err(SimError::WindFileTooShort {
                        path: series.path.clone(),
                        covers: series.end_time() - series.time[0].min(0.0),
                        duration: self.duration,
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Wind speed at time `t`.
    pub fn wind_at(&self, t: f64) -> f64 {
        match &self.kind {
            WindKind::Constant(v) => *v,
            WindKind::Staircase {
                v_start,
                v_end,
                step_dv,
                dwell_s,
            } => {
                // Small bias keeps t = n * dwell on the new level despite round-off.
                let level = (t / dwell_s + 1e-9).floor();
                let v = v_start + level * step_dv;
                if *step_dv >= 0.0 {
                    v.min(*v_end)
                } else {
                    v.max(*v_end)
                }
            }
            WindKind::FromFile(series) => series.at(t),
        }
    }

    /// Wind speed at `t = 0`.
    pub fn initial_wind(&self) -> f64 {
        self.wind_at(0.0)
    }
}

/// Torque controllers active in a run. The K-omega-squared law is always on.
#[derive(Debug, Clone, Default)]
pub struct ControllerSet {
    pub conventional: bool,
    pub mdc: Option<MdcController>,
}

/// One sample of the closed loop, taken before the step it drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub v: f64,
    pub omega_r: f64,
    pub omega_r_filtered: f64,
    pub theta: f64,
    pub x: f64,
    pub xdot: f64,
    pub f_sd: f64,
    pub tg: f64,
    pub dtg_damp: f64,
    pub dtg: f64,
    pub xdot_c: f64,
    pub xdot_s: f64,
    pub dtg_c: f64,
    pub dtg_s: f64,
    pub psi_off: f64,
    pub gamma: f64,
}

impl TraceRow {
    /// Generator torque actually applied, `Tg + dTg_damp + dTg`.
    pub fn tg_total(&self) -> f64 {
        self.tg + self.dtg_damp + self.dtg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

impl SimulationTrace {
    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    /// Rows with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> &[TraceRow] {
        let a = self.rows.partition_point(|r| r.t < t0);
        let b = self.rows.partition_point(|r| r.t <= t1);
        &self.rows[a..b.max(a)]
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Rest state of the tower at the rotor equilibrium for wind `v`.
pub fn initial_state(params: &TurbineParams, v: f64) -> Result<PlantState, ModelError> {
    Ok(PlantState {
        x: 0.0,
        xdot: 0.0,
        omega_r: params.equilibrium_rotor_speed(v)?,
        theta: 0.0,
    })
}

fn rk4_step(
    s: &PlantState,
    v: f64,
    tg_total: f64,
    dt: f64,
    params: &TurbineParams,
) -> Result<PlantState, ModelError> {
    let f = |st: &PlantState| {
        state_derivative(st, v, tg_total, periodic_load(st.theta, params), params)
    };
    let add = |a: &PlantState, k: &PlantState, h: f64| {
        let (a, k) = (a.to_array(), k.to_array());
        PlantState::from_array([
            a[0] + h * k[0],
            a[1] + h * k[1],
            a[2] + h * k[2],
            a[3] + h * k[3],
        ])
    };
    let k1 = f(s)?;
    let k2 = f(&add(s, &k1, 0.5 * dt))?;
    let k3 = f(&add(s, &k2, 0.5 * dt))?;
    let k4 = f(&add(s, &k3, dt))?;
    let (y, a, b, c, d) = (
        s.to_array(),
        k1.to_array(),
        k2.to_array(),
        k3.to_array(),
        k4.to_array(),
    );
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
    }
    Ok(PlantState::from_array(out))
}

/// Run the closed loop for `scenario.duration` with step `dt`.
///
/// Controllers sample the state at the start of each step and their torques
/// are held over the step (the MDC output modulated at the mid-step azimuth); the periodic load follows the azimuth inside the
/// RK4 stages. The run stops early, flagged diverged, once `|xdot|` or the MDC
/// torque leaves the physical range or turns non-finite.
pub fn run_simulation(
    params: &TurbineParams,
    controllers: &mut ControllerSet,
    scenario: &WindScenario,
    dt: f64,
    init: PlantState,
) -> Result<SimulationTrace, SimError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(SimError::BadDt(dt));
    }
    params.validate()?;
    scenario.validate()?;
    if !(init.omega_r > EPSILON_SPEED) {
        return Err(ModelError::RotorStalled {
            omega_r: init.omega_r,
        }
        .into());
    }
    if let Some(mdc) = controllers.mdc.as_mut() {
        mdc.reset();
    }

    let n_steps = (scenario.duration / dt).round() as usize;
    let k_conv = params.k_conv();
    let mut speed_filter = FirstOrderLowPass::new(DEFAULT_SPEED_CUTOFF, dt, init.omega_r);
    let mut state = init;
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut diverged_at = None;

    for n in 0..=n_steps {
        let t = n as f64 * dt;
        let v = scenario.wind_at(t);
        if state.omega_r <= EPSILON_SPEED {
            return Err(ModelError::RotorStalled {
                omega_r: state.omega_r,
            }
            .into());
        }
        let tg = komega2_torque(state.omega_r, params);
        let dtg_damp = if controllers.conventional {
            -k_conv * state.xdot
        } else {
            0.0
        };
        let out = match controllers.mdc.as_mut() {
            Some(mdc) => {
                let mut o = mdc.step(state.xdot, state.omega_r, state.theta, dt);
                // The command is held for the whole step; modulating at the
                // mid-step azimuth removes the half-step lag of the hold.
                o.dtg = modulate(o.dtg_c, o.dtg_s, state.theta + 0.5 * dt * state.omega_r);
                o
            }
            None => MdcOutput {
                omega_filtered: speed_filter.step(state.omega_r),
                gamma: f64::NAN,
                ..Default::default()
            },
        };
        rows.push(TraceRow {
            t,
            v,
            omega_r: state.omega_r,
            omega_r_filtered: out.omega_filtered,
            theta: state.theta,
            x: state.x,
            xdot: state.xdot,
            f_sd: periodic_load(state.theta, params),
            tg,
            dtg_damp,
            dtg: out.dtg,
            xdot_c: out.xdot_c,
            xdot_s: out.xdot_s,
            dtg_c: out.dtg_c,
            dtg_s: out.dtg_s,
            psi_off: out.psi_off,
            gamma: out.gamma,
        });

        let runaway = !state.xdot.is_finite()
            || !out.dtg.is_finite()
            || state.xdot.abs() > DIVERGENCE_XDOT
            || out.dtg.abs() > DIVERGENCE_TORQUE_FACTOR * params.tg_rated;
        if runaway {
            log::warn!("run diverged at t = {t:.2} s");
            diverged_at = Some(t);
            break;
        }
        if n == n_steps {
            break;
        }
        state = rk4_step(&state, v, tg + dtg_damp + out.dtg, dt, params)?;
    }

    Ok(SimulationTrace {
        dt,
        rows,
        diverged: diverged_at.is_some(),
        diverged_at,
    })
}

/// 1P amplitudes of tower velocity and MDC torque over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual1p {
    pub xdot: f64,
    pub dtg: f64,
}

/// Least-squares amplitude `sqrt(A^2 + B^2)` of `y ~ A cos(theta) + B sin(theta)`.
pub fn fit_1p_amplitude(theta: &[f64], y: &[f64]) -> f64 {
    let (mut cc, mut cs, mut ss, mut cy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&th, &v) in theta.iter().zip(y) {
        let (s, c) = th.sin_cos();
        cc += c * c;
        cs += c * s;
        ss += s * s;
        cy += c * v;
        sy += s * v;
    }
    let det = cc * ss - cs * cs;
    if det.abs() <= f64::EPSILON * (cc * ss).abs() || det == 0.0 {
        return f64::NAN;
    }
    let a = (ss * cy - cs * sy) / det;
    let b = (cc * sy - cs * cy) / det;
    a.hypot(b)
}

/// Maximum relative standard deviation of the filtered rotor speed accepted
/// as a steady window.
pub const STEADY_REL_STD: f64 = 0.01;

/// 1P amplitudes of `xdot` and `dTg` over `[t0, t1]`.
///
/// Steadiness is judged on the filtered rotor speed: the raw speed carries
/// the 1P torque ripple itself, which is not a change of operating point.
pub fn residual_1p_amplitude(
    trace: &SimulationTrace,
    window: (f64, f64),
) -> Result<Residual1p, SimError> {
    let (t0, t1) = window;
    let bad = SimError::BadWindow { t0, t1 };
    if !(t1 > t0) || t0 < 0.0 || t1 > trace.duration() + 0.5 * trace.dt {
        return Err(bad);
    }
    let rows = trace.window(t0, t1);
    if rows.len() < 3 {
        return Err(bad);
    }
    let speed: Vec<f64> = rows.iter().map(|r| r.omega_r_filtered).collect();
    let mean = speed.iter().sum::<f64>() / speed.len() as f64;
    let rel_std = crate::sigproc::std_dev(&speed) / mean.abs();
    if !(rel_std < STEADY_REL_STD) {
        return Err(SimError::NotSteady { rel_std });
    }
    let theta: Vec<f64> = rows.iter().map(|r| r.theta).collect();
    let xdot: Vec<f64> = rows.iter().map(|r| r.xdot).collect();
    let dtg: Vec<f64> = rows.iter().map(|r| r.dtg).collect();
    Ok(Residual1p {
        xdot: fit_1p_amplitude(&theta, &xdot),
        dtg: fit_1p_amplitude(&theta, &dtg),
    })
}
