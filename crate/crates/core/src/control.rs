//! Torque controllers: the K-omega-squared law, the conventional tower
//! damper and the modulated-demodulated (MDC) 1P load controller.
//!
//! The MDC chain demodulates the tower velocity at the rotor azimuth into a
//! quadrature/in-phase pair, runs the same LTI controller on both channels
//! and modulates the two outputs back onto the azimuth:
//!
//! ```text
//! xdot_c = 2 cos(theta - psi) xdot        dTg = cos(theta) dTg_c + sin(theta) dTg_s
//! xdot_s = 2 sin(theta - psi) xdot
//! ```
//!
//! With this carrier convention the offset that diagonalises the steady-state
//! demodulated plant is `psi* = -arg G'(j omega_r)`.

use num_complex::Complex64;
use thiserror::Error;

use crate::freqdom::unwrap_phases;
use crate::sigproc::FirstOrderLowPass;
use crate::transfer::{RationalTransferFunction, TransferError};
use crate::turbine::TurbineParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("controller gain must be finite, got {0}")]
    NonFiniteGain(f64),
    #[error("low-pass cutoff must be positive, got {0}")]
    BadCutoff(f64),
    #[error("feedback sign must be +1 or -1, got {0}")]
    BadSign(f64),
    #[error("scheduling grid must be strictly increasing and positive")]
    BadGrid,
    #[error("scheduling table columns have different lengths")]
    RaggedTable,
    #[error("scheduling table is empty")]
    EmptyTable,
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

/// Below-rated generator torque command (HSS), `K_opt / G_box * omega_r^2`,
/// saturated at the rated torque.
pub fn komega2_torque(omega_r: f64, params: &TurbineParams) -> f64 {
    (params.k_opt / params.g_box * omega_r * omega_r).min(params.tg_rated)
}

/// Conventional side-side damper, `-K_conv * xdot`.
pub fn conventional_damper(xdot: f64, k_conv: f64) -> f64 {
    -k_conv * xdot
}

/// Split `xdot` into quadrature and in-phase channels.
pub fn demodulate(xdot: f64, theta: f64, psi_off: f64) -> (f64, f64) {
    let (s, c) = (theta - psi_off).sin_cos();
    (2.0 * c * xdot, 2.0 * s * xdot)
}

/// Recombine the two channel commands onto the 1P carrier.
pub fn modulate(dtg_c: f64, dtg_s: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * dtg_c + s * dtg_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    Proportional,
    Integrator,
    FirstOrderLowPass { omega_lpf: f64 },
}

/// LTI controller used on both demodulated channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub gain: f64,
    pub feedback_sign: f64,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, gain: f64) -> Result<Self, ControlError> {
        let spec = Self {
            kind,
            gain,
            feedback_sign: -1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn proportional(k_p: f64) -> Self {
        Self::new(ControllerKind::Proportional, k_p).expect("finite gain")
    }

    pub fn integrator(k_i: f64) -> Self {
        Self::new(ControllerKind::Integrator, k_i).expect("finite gain")
    }

    pub fn low_pass(k_l: f64, omega_lpf: f64) -> Self {
        Self::new(ControllerKind::FirstOrderLowPass { omega_lpf }, k_l).expect("valid low-pass")
    }

    pub fn with_feedback_sign(mut self, sign: f64) -> Self {
        self.feedback_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !self.gain.is_finite() {
            return Err(ControlError::NonFiniteGain(self.gain));
        }
        if self.feedback_sign != 1.0 && self.feedback_sign != -1.0 {
            return Err(ControlError::BadSign(self.feedback_sign));
        }
        if let ControllerKind::FirstOrderLowPass { omega_lpf } = self.kind {
            if !(omega_lpf.is_finite() && omega_lpf > 0.0) {
                return Err(ControlError::BadCutoff(omega_lpf));
            }
        }
        Ok(())
    }

    /// Demodulated-domain response `C(s)` (feedback sign excluded).
    pub fn response(&self, s: Complex64) -> Complex64 {
        match self.kind {
            ControllerKind::Proportional => Complex64::new(self.gain, 0.0),
            ControllerKind::Integrator => self.gain / s,
            ControllerKind::FirstOrderLowPass { omega_lpf } => self.gain / (s + omega_lpf),
        }
    }
}

/// Internal state of the MDC: both channel states, the rotor-speed filter
/// and the last channel commands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct McState {
    pub channel: [f64; 2],
    pub speed_filter: Option<FirstOrderLowPass>,
    pub last_dtg: (f64, f64),
    pub clamp_warned: bool,
}

impl McState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

fn step_channels(
    state: &mut McState,
    inputs: (f64, f64),
    kind: ControllerKind,
    gain: f64,
    sign: f64,
    dt: f64,
) -> (f64, f64) {
    let u = [inputs.0, inputs.1];
    let mut y = [0.0; 2];
    for i in 0..2 {
        y[i] = match kind {
            ControllerKind::Proportional => sign * gain * u[i],
            ControllerKind::Integrator => {
                state.channel[i] += u[i] * dt;
                sign * gain * state.channel[i]
            }
            ControllerKind::FirstOrderLowPass { omega_lpf } => {
                // Exact ZOH step of 1/(s + w): x <- e x + (1 - e)/w u.
                let decay = (-omega_lpf * dt).exp();
                state.channel[i] = decay * state.channel[i] + (1.0 - decay) / omega_lpf * u[i];
                sign * gain * state.channel[i]
            }
        };
    }
    state.last_dtg = (y[0], y[1]);
    (y[0], y[1])
}

/// Advance the two identical channel controllers by `dt` and return
/// `(dTg_c, dTg_s)` including the feedback sign.
pub fn step_demod_controller(
    state: &mut McState,
    inputs: (f64, f64),
    spec: &ControllerSpec,
    dt: f64,
) -> (f64, f64) {
    assert!(dt > 0.0, "dt must be positive");
    step_channels(state, inputs, spec.kind, spec.gain, spec.feedback_sign, dt)
}

/// Look-up tables of the optimal phase offset and inverse plant gain over
/// rotor speed.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingTables {
    pub omega_r: Vec<f64>,
    /// `-arg G'(j omega_r)`, unwrapped along the grid, rad.
    pub psi_star: Vec<f64>,
    /// `1 / |G'(j omega_r)|`, (N m)/(m/s).
    pub gamma: Vec<f64>,
    /// Cutoff of the rotor-speed filter feeding the tables, rad/s.
    pub speed_cutoff: f64,
}

/// Result of a table look-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduled {
    pub psi_star: f64,
    pub gamma: f64,
    /// The query was outside the grid and was clamped to an endpoint.
    pub clamped: bool,
}

pub const DEFAULT_SPEED_CUTOFF: f64 = 0.2;

/// Uniform grid `start, start + step, ...` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Default scheduling grid: 0.01 rad/s spacing over [0.3, 1.5].
pub fn default_schedule_grid() -> Vec<f64> {
    uniform_grid(0.3, 1.5, 0.01)
}

impl SchedulingTables {
    pub fn new(
        omega_r: Vec<f64>,
        psi_star: Vec<f64>,
        gamma: Vec<f64>,
        speed_cutoff: f64,
    ) -> Result<Self, ControlError> {
        if omega_r.is_empty() {
            return Err(ControlError::EmptyTable);
        }
        if psi_star.len() != omega_r.len() || gamma.len() != omega_r.len() {
            return Err(ControlError::RaggedTable);
        }
        if omega_r[0] <= 0.0 || omega_r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ControlError::BadGrid);
        }
        if !(speed_cutoff > 0.0) {
            return Err(ControlError::BadCutoff(speed_cutoff));
        }
        Ok(Self {
            omega_r,
            psi_star,
            gamma,
            speed_cutoff,
        })
    }

    /// Tabulate `psi* = -arg G'(j w)` and `gamma = 1 / |G'(j w)|` over `grid`.
    pub fn build(g_prime: &RationalTransferFunction, grid: &[f64]) -> Result<Self, ControlError> {
        if grid.is_empty() {
            return Err(ControlError::EmptyTable);
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ControlError::BadGrid);
        }
        let mut psi = Vec::with_capacity(grid.len());
        let mut gamma = Vec::with_capacity(grid.len());
        for &w in grid {
            let g = g_prime.freq_response(w)?;
            psi.push(-g.arg());
            gamma.push(1.0 / g.norm());
        }
        unwrap_phases(&mut psi);
        Self::new(grid.to_vec(), psi, gamma, DEFAULT_SPEED_CUTOFF)
    }

    pub fn with_speed_cutoff(mut self, cutoff: f64) -> Self {
        self.speed_cutoff = cutoff;
        self
    }

    /// Linear interpolation with clamping at the grid ends.
    pub fn lookup(&self, omega_r: f64) -> Scheduled {
        let g = &self.omega_r;
        let last = g.len() - 1;
        if omega_r <= g[0] || omega_r >= g[last] || last == 0 {
            let i = if omega_r <= g[0] { 0 } else { last };
            return Scheduled {
                psi_star: self.psi_star[i],
                gamma: self.gamma[i],
                clamped: omega_r < g[0] || omega_r > g[last],
            };
        }
        let hi = g.partition_point(|&w| w <= omega_r).min(last);
        let lo = hi - 1;
        let f = (omega_r - g[lo]) / (g[hi] - g[lo]);
        Scheduled {
            psi_star: self.psi_star[lo] + f * (self.psi_star[hi] - self.psi_star[lo]),
            gamma: self.gamma[lo] + f * (self.gamma[hi] - self.gamma[lo]),
            clamped: false,
        }
    }
}

/// Phase-offset and gain scheduling switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdcOptions {
    /// Use `psi*` from the tables; otherwise `fixed_psi`.
    pub use_offset: bool,
    pub fixed_psi: f64,
    /// Replace the controller gain with `schedule_factor * gamma`.
    pub gain_schedule: bool,
    pub schedule_factor: f64,
}

impl Default for MdcOptions {
    fn default() -> Self {
        Self {
            use_offset: true,
            fixed_psi: 0.0,
            gain_schedule: false,
            schedule_factor: 0.022,
        }
    }
}

/// Per-step output of the MDC.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MdcOutput {
    pub dtg: f64,
    pub xdot_c: f64,
    pub xdot_s: f64,
    pub dtg_c: f64,
    pub dtg_s: f64,
    pub psi_off: f64,
    pub gain: f64,
    pub gamma: f64,
    pub omega_filtered: f64,
}

/// One MDC update: filter the measured rotor speed, schedule `psi` and the
/// gain, then demodulate, run the channel controllers and modulate.
///
/// Without tables the speed filter still runs; `psi` falls back to
/// `fixed_psi` and the gain to the spec gain.
#[allow(clippy::too_many_arguments)]
pub fn mdc_step(
    state: &mut McState,
    xdot: f64,
    omega_r_meas: f64,
    theta: f64,
    spec: &ControllerSpec,
    tables: Option<&SchedulingTables>,
    dt: f64,
    options: &MdcOptions,
) -> MdcOutput {
    assert!(dt > 0.0, "dt must be positive");
    let cutoff = tables.map_or(DEFAULT_SPEED_CUTOFF, |t| t.speed_cutoff);
    let filter = state
        .speed_filter
        .get_or_insert_with(|| FirstOrderLowPass::new(cutoff, dt, omega_r_meas));
    let omega_f = filter.step(omega_r_meas);

    let sched = tables.map(|t| t.lookup(omega_f));
    if let Some(s) = sched {
        if s.clamped && !state.clamp_warned {
            log::warn!("filtered rotor speed {omega_f:.4} rad/s outside scheduling grid; clamping");
            state.clamp_warned = true;
        }
    }
    let psi = match (options.use_offset, sched) {
        (true, Some(s)) => s.psi_star,
        _ => options.fixed_psi,
    };
    let gamma = sched.map_or(f64::NAN, |s| s.gamma);
    let gain = match (options.gain_schedule, sched) {
        (true, Some(s)) => options.schedule_factor * s.gamma,
        _ => spec.gain,
    };

    let (xdot_c, xdot_s) = demodulate(xdot, theta, psi);
    let (dtg_c, dtg_s) = step_channels(
        state,
        (xdot_c, xdot_s),
        spec.kind,
        gain,
        spec.feedback_sign,
        dt,
    );
    MdcOutput {
        dtg: modulate(dtg_c, dtg_s, theta),
        xdot_c,
        xdot_s,
        dtg_c,
        dtg_s,
        psi_off: psi,
        gain,
        gamma,
        omega_filtered: omega_f,
    }
}

/// MDC bundled with its configuration and state.
#[derive(Debug, Clone, PartialEq)]
pub struct MdcController {
    pub spec: ControllerSpec,
    pub tables: Option<SchedulingTables>,
    pub options: MdcOptions,
    pub state: McState,
}

impl MdcController {
    pub fn new(
        spec: ControllerSpec,
        tables: Option<SchedulingTables>,
        options: MdcOptions,
    ) -> Self {
        Self {
            spec,
            tables,
            options,
            state: McState::default(),
        }
    }

    pub fn step(&mut self, xdot: f64, omega_r_meas: f64, theta: f64, dt: f64) -> MdcOutput {
        mdc_step(
            &mut self.state,
            xdot,
            omega_r_meas,
            theta,
            &self.spec,
            self.tables.as_ref(),
            dt,
            &self.options,
        )
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }
}
