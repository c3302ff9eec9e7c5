//! Tower + rotor model of a below-rated variable-speed turbine.
//!
//! The tower side-side motion is a single mass-spring-damper mode driven by
//! the periodic rotor load and the generator reaction torque (scaled by
//! `s_f`). The rotor is a single rotational inertia with a fine-pitch power
//! coefficient curve.

use std::f64::consts::PI;

use thiserror::Error;

use crate::transfer::RationalTransferFunction;

/// Rotor speeds at or below this are treated as a stalled rotor.
pub const EPSILON_SPEED: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid turbine parameter `{name}` = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("rotor stalled (omega_r = {omega_r} rad/s)")]
    RotorStalled { omega_r: f64 },
    #[error("wind speed must be positive, got {0} m/s")]
    NonPositiveWind(f64),
    #[error("no rotor-speed equilibrium found for v = {0} m/s")]
    NoEquilibrium(f64),
}

/// Physical constants of the tower + rotor model.
///
/// Torques entering the tower and rotor equations are generator (HSS) torques;
/// `k_opt` is expressed on the rotor (LSS) side.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineParams {
    /// Tower modal mass, kg.
    pub m: f64,
    /// Tower modal damping, N s/m.
    pub d: f64,
    /// Damping added by the conventional tower damper, N s/m.
    pub d_add: f64,
    /// Tower modal stiffness, N/m.
    pub k: f64,
    /// Hub height, m.
    pub height: f64,
    /// Torque-to-force ratio, 1/m.
    pub s_f: f64,
    /// Rotor-side equivalent inertia, kg m^2.
    pub j_r: f64,
    pub g_box: f64,
    /// Rotor radius, m.
    pub radius: f64,
    pub rho_a: f64,
    pub lambda_star: f64,
    pub cp_star: f64,
    /// Optimal torque gain on the rotor side, N m / (rad/s)^2.
    pub k_opt: f64,
    pub omega_r_min: f64,
    pub omega_r_rated: f64,
    /// Periodic load amplitude, N.
    pub a_sd: f64,
    /// Periodic load phase, rad.
    pub phi_sd: f64,
    /// Rated generator torque (HSS), N m.
    pub tg_rated: f64,
    pub gen_efficiency: f64,
    /// Shape exponent `a` of `Cp(l) = Cp* r^a exp(a (1 - r))`, `r = l / l*`.
    pub cp_shape: f64,
}

/// Optimal torque gain of the K-omega-squared law from the rotor constants,
/// `K = rho pi R^5 Cp* / (2 l*^3)`.
pub fn optimal_torque_gain(rho_a: f64, radius: f64, cp_star: f64, lambda_star: f64) -> f64 {
    0.5 * rho_a * PI * radius.powi(5) * cp_star / lambda_star.powi(3)
}

impl TurbineParams {
    /// Rotor constants shared by both presets (5 MW reference rotor).
    fn with_reference_rotor(m: f64, d: f64, d_add: f64, k: f64, s_f: f64) -> Self {
        let (rho_a, radius, cp_star, lambda_star) = (1.225, 63.0, 0.458, 7.0);
        Self {
            m,
            d,
            d_add,
            k,
            height: 90.0,
            s_f,
            j_r: 4.0802e7,
            g_box: 97.0,
            radius,
            rho_a,
            lambda_star,
            cp_star,
            k_opt: optimal_torque_gain(rho_a, radius, cp_star, lambda_star),
            omega_r_min: 0.5,
            omega_r_rated: 1.2,
            a_sd: 150.0,
            phi_sd: PI / 4.0,
            tg_rated: 43_093.55,
            gen_efficiency: 0.944,
            cp_shape: 3.0,
        }
    }

    /// Synthetic soft-soft tower (`m = 3e4`, `d_eff = 3e3`, `k = 1.5e4`,
    /// `s_f = 1.5 / H`) with the reference rotor.
    pub fn synthetic() -> Self {
        Self::with_reference_rotor(3.0e4, 3.0e3, 0.0, 1.5e4, 1.5 / 90.0)
    }

    /// Scaled soft-soft tower of the reference turbine with the fitted torque
    /// gain `s_f = 1.667` and conventional damping raising `d` to 1.9125e4.
    pub fn scaled() -> Self {
        let d = 2.4588e3;
        Self::with_reference_rotor(3.62e5, d, 1.9125e4 - d, 1.7677e5, 1.667)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "synthetic" => Some(Self::synthetic()),
            "scaled" => Some(Self::scaled()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive: [(&'static str, f64); 13] = [
            ("m", self.m),
            ("k", self.k),
            ("J_r", self.j_r),
            ("G_box", self.g_box),
            ("R", self.radius),
            ("rho_a", self.rho_a),
            ("H", self.height),
            ("s_f", self.s_f),
            ("lambda_star", self.lambda_star),
            ("Cp_star", self.cp_star),
            ("K_opt", self.k_opt),
            ("Tg_rated", self.tg_rated),
            ("cp_shape", self.cp_shape),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite and > 0",
                });
            }
        }
        for (name, value) in [("d", self.d), ("d_add", self.d_add)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite and >= 0",
                });
            }
        }
        for (name, value) in [
            ("omega_r_min", self.omega_r_min),
            ("omega_r_rated", self.omega_r_rated),
            ("a_sd", self.a_sd),
            ("phi_sd", self.phi_sd),
            ("gen_efficiency", self.gen_efficiency),
        ] {
            if !value.is_finite() {
                return Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }

    /// `sqrt(k / m)`, rad/s.
    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m).sqrt()
    }

    /// True when the tower mode lies inside the rotor operating range.
    pub fn is_soft_soft(&self) -> bool {
        let wn = self.natural_frequency();
        (self.omega_r_min..=self.omega_r_rated).contains(&wn)
    }

    pub fn effective_damping(&self) -> f64 {
        self.d + self.d_add
    }

    /// Conventional damper gain `K_conv = d_add / s_f`.
    pub fn k_conv(&self) -> f64 {
        self.d_add / self.s_f
    }

    /// Fine-pitch power coefficient.
    pub fn power_coefficient(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        let r = lambda / self.lambda_star;
        let a = self.cp_shape;
        self.cp_star * r.powf(a) * (a * (1.0 - r)).exp()
    }

    /// Aerodynamic rotor torque, N m (rotor side).
    pub fn aero_torque(&self, omega_r: f64, v: f64) -> Result<f64, ModelError> {
        if omega_r <= EPSILON_SPEED {
            return Err(ModelError::RotorStalled { omega_r });
        }
        if v <= 0.0 {
            return Err(ModelError::NonPositiveWind(v));
        }
        let lambda = omega_r * self.radius / v;
        Ok(
            0.5 * self.rho_a
                * PI
                * self.radius.powi(2)
                * self.power_coefficient(lambda)
                * v.powi(3)
                / omega_r,
        )
    }

    /// Steady rotor speed under the (saturated) K-omega-squared law at wind
    /// speed `v`. Returns the highest equilibrium, which is the stable one.
    pub fn equilibrium_rotor_speed(&self, v: f64) -> Result<f64, ModelError> {
        if v <= 0.0 {
            return Err(ModelError::NonPositiveWind(v));
        }
        let net = |w: f64| -> f64 {
            let tg = (self.k_opt / self.g_box * w * w).min(self.tg_rated);
            self.aero_torque(w, v)
                .map(|ta| ta - self.g_box * tg)
                .unwrap_or(f64::NAN)
        };
        let lo_bound = EPSILON_SPEED * 1.001;
        let hi_bound = 5.0 * self.lambda_star * v / self.radius;
        let n = 2000;
        let step = (hi_bound - lo_bound) / n as f64;
        // Scan downward for the first sign change + -> -.
        let mut hi = hi_bound;
        let mut f_hi = net(hi);
        for i in (0..n).rev() {
            let lo = lo_bound + i as f64 * step;
            let f_lo = net(lo);
            if f_lo > 0.0 && f_hi <= 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if net(mid) > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                return Ok(0.5 * (a + b));
            }
            hi = lo;
            f_hi = f_lo;
        }
        Err(ModelError::NoEquilibrium(v))
    }
}

/// Instantaneous plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Tower-top displacement, m.
    pub x: f64,
    /// Tower-top velocity, m/s.
    pub xdot: f64,
    /// Rotor speed, rad/s.
    pub omega_r: f64,
    /// Rotor azimuth, rad.
    pub theta: f64,
}

impl PlantState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.xdot, self.omega_r, self.theta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            x: a[0],
            xdot: a[1],
            omega_r: a[2],
            theta: a[3],
        }
    }
}

/// Time derivative of [`PlantState`]; fields hold `(xdot, xddot, omega_r_dot, theta_dot)`.
pub type StateDerivative = PlantState;

/// Right-hand side of the tower and rotor equations for a total generator
/// torque `tg_total` (HSS) and periodic load `f_sd`.
pub fn state_derivative(
    state: &PlantState,
    v: f64,
    tg_total: f64,
    f_sd: f64,
    params: &TurbineParams,
) -> Result<StateDerivative, ModelError> {
    let ta = params.aero_torque(state.omega_r, v)?;
    let xddot =
        (-params.d * state.xdot - params.k * state.x + f_sd + params.s_f * tg_total) / params.m;
    let omega_dot = (ta - params.g_box * tg_total) / params.j_r;
    Ok(PlantState {
        x: state.xdot,
        xdot: xddot,
        omega_r: omega_dot,
        theta: state.omega_r,
    })
}

/// 1P side-side force from rotor imbalance at azimuth `theta`.
pub fn periodic_load(theta: f64, params: &TurbineParams) -> f64 {
    params.a_sd * (theta + params.phi_sd).cos()
}

/// Torque-to-velocity tower transfer function `s_f s / (m s^2 + d s + k)`.
/// With `effective_damping` set, `d` is replaced by `d + d_add`, which is
/// also the closed loop of the bare tower with the conventional damper.
pub fn tower_tf(params: &TurbineParams, effective_damping: bool) -> RationalTransferFunction {
    let d = if effective_damping {
        params.effective_damping()
    } else {
        params.d
    };
    RationalTransferFunction::new(vec![0.0, params.s_f], vec![params.k, d, params.m])
        .expect("validated params give a proper tower model")
}
