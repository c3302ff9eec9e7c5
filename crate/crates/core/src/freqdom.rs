//! Frequency-domain analysis of the MDC loop.
//!
//! Shifted plant evaluations `G(s -+ j omega_r)` build the demodulated 2x2
//! plant, and shifted controller evaluations build the equivalent SISO
//! (modulated) controller seen between `xdot` and `dTg`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::control::{ControllerKind, ControllerSpec};
use crate::transfer::{RationalTransferFunction, TransferError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("controller evaluated at its pole (s = {re} + {im}j)")]
    ControllerPole { re: f64, im: f64 },
    #[error("RGA undefined: singular steady-state matrix (|det| = {0:e})")]
    RgaUndefined(f64),
    #[error("frequency grid must be non-empty, positive and increasing")]
    BadGrid,
}

pub type Mat2 = [[Complex64; 2]; 2];

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Remove 2 pi jumps between consecutive finite entries (radians).
pub fn unwrap_phases(phases: &mut [f64]) {
    let mut prev: Option<f64> = None;
    for p in phases.iter_mut() {
        if !p.is_finite() {
            continue;
        }
        if let Some(q) = prev {
            let mut d = *p - q;
            while d > PI {
                *p -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d <= -PI {
                *p += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        prev = Some(*p);
    }
}

/// Matrix product of two 2x2 complex matrices.
pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[c(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_scale(a: &Mat2, k: Complex64) -> Mat2 {
    [[a[0][0] * k, a[0][1] * k], [a[1][0] * k, a[1][1] * k]]
}

/// Largest entry magnitude.
pub fn mat_max_abs(a: &Mat2) -> f64 {
    a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Closed-form modulated (SISO) controller `C_m(s, omega_r, psi)`, feedback
/// sign excluded:
///
/// * proportional: `2 K cos(psi)`
/// * integrator: `2 K (cos(psi) s - sin(psi) w) / (s^2 + w^2)`
/// * low-pass: `2 K (cos(psi) (s + a) - sin(psi) w) / (s^2 + 2 a s + a^2 + w^2)`
pub fn modulated_controller_response(
    spec: &ControllerSpec,
    s: Complex64,
    omega_r: f64,
    psi_off: f64,
) -> Result<Complex64, FreqError> {
    let (sn, cs) = psi_off.sin_cos();
    let k2 = 2.0 * spec.gain;
    let (num, den, scale) = match spec.kind {
        ControllerKind::Proportional => return Ok(c(k2 * cs)),
        ControllerKind::Integrator => {
            let w2 = omega_r * omega_r;
            (k2 * (cs * s - sn * omega_r), s * s + w2, s.norm_sqr() + w2)
        }
        ControllerKind::FirstOrderLowPass { omega_lpf: a } => {
            let w2 = omega_r * omega_r;
            (
                k2 * (cs * (s + a) - sn * omega_r),
                s * s + 2.0 * a * s + a * a + w2,
                s.norm_sqr() + 2.0 * a * s.norm() + a * a + w2,
            )
        }
    };
    if den.norm() <= 4.0 * f64::EPSILON * scale {
        return Err(FreqError::ControllerPole { re: s.re, im: s.im });
    }
    Ok(num / den)
}

/// Same quantity assembled from shifted demodulated-controller evaluations,
/// `e^{j psi} C(s - j w) + e^{-j psi} C(s + j w)`.
pub fn modulated_controller_from_shifts(
    spec: &ControllerSpec,
    s: Complex64,
    omega_r: f64,
    psi_off: f64,
) -> Result<Complex64, FreqError> {
    let (sm, sp) = (s - J * omega_r, s + J * omega_r);
    let pole = |z: Complex64| match spec.kind {
        ControllerKind::Proportional => false,
        ControllerKind::Integrator => z.norm() == 0.0,
        ControllerKind::FirstOrderLowPass { omega_lpf } => (z + omega_lpf).norm() == 0.0,
    };
    if pole(sm) || pole(sp) {
        return Err(FreqError::ControllerPole { re: s.re, im: s.im });
    }
    let rot = Complex64::from_polar(1.0, psi_off);
    Ok(rot * spec.response(sm) + rot.conj() * spec.response(sp))
}

/// Demodulated plant evaluated at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodPlantResponse {
    pub matrix: Mat2,
    pub s: Complex64,
    pub omega_r: f64,
    pub psi_off: f64,
}

impl DemodPlantResponse {
    pub fn g11(&self) -> Complex64 {
        self.matrix[0][0]
    }

    pub fn g12(&self) -> Complex64 {
        self.matrix[0][1]
    }
}

/// `G2(s, w, psi)` with `a = e^{-j psi} G(s - j w)`, `b = e^{j psi} G(s + j w)`:
/// `G2_11 = G2_22 = (a + b) / 2`, `G2_12 = -G2_21 = j (a - b) / 2`.
pub fn demod_plant_response(
    g: &RationalTransferFunction,
    s: Complex64,
    omega_r: f64,
    psi_off: f64,
) -> Result<DemodPlantResponse, FreqError> {
    let rot = Complex64::from_polar(1.0, -psi_off);
    let a = rot * g.eval(s - J * omega_r)?;
    let b = rot.conj() * g.eval(s + J * omega_r)?;
    let m11 = (a + b) * 0.5;
    let m12 = J * (a - b) * 0.5;
    Ok(DemodPlantResponse {
        matrix: [[m11, m12], [-m12, m11]],
        s,
        omega_r,
        psi_off,
    })
}

/// All three demodulated transfer matrices (zero offset): `G1` acts on the
/// channel inputs at `s - 2 j w`, `G2` at `s`, `G3` at `s + 2 j w`.
pub fn demod_plant_sidebands(
    g: &RationalTransferFunction,
    s: Complex64,
    omega_r: f64,
) -> Result<[Mat2; 3], FreqError> {
    let gm = g.eval(s - J * omega_r)?;
    let gp = g.eval(s + J * omega_r)?;
    let h = 0.5;
    let g1 = [[gm * h, -J * gm * h], [-J * gm * h, -gm * h]];
    let g2 = demod_plant_response(g, s, omega_r, 0.0)?.matrix;
    let g3 = [[gp * h, J * gp * h], [J * gp * h, -gp * h]];
    Ok([g1, g2, g3])
}

/// Relative gain array at one rotor speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgaPoint {
    pub omega_r: f64,
    pub psi_off: f64,
    pub lambda: Mat2,
    pub lambda11_abs: f64,
    pub lambda12_abs: f64,
}

/// `M o (M^-1)^T` for a 2x2 matrix.
pub fn rga_matrix(m: &Mat2) -> Result<Mat2, FreqError> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() < 1e-300 {
        return Err(FreqError::RgaUndefined(det.norm()));
    }
    let l11 = m[0][0] * m[1][1] / det;
    let l12 = -m[0][1] * m[1][0] / det;
    Ok([[l11, l12], [l12, l11]])
}

/// Steady-state (`s = 0`) RGA of the demodulated plant.
pub fn rga(
    g: &RationalTransferFunction,
    omega_r: f64,
    psi_off: f64,
) -> Result<RgaPoint, FreqError> {
    rga_at(g, c(0.0), omega_r, psi_off)
}

/// RGA at an arbitrary `s`.
pub fn rga_at(
    g: &RationalTransferFunction,
    s: Complex64,
    omega_r: f64,
    psi_off: f64,
) -> Result<RgaPoint, FreqError> {
    let g2 = demod_plant_response(g, s, omega_r, psi_off)?;
    let lambda = rga_matrix(&g2.matrix)?;
    Ok(RgaPoint {
        omega_r,
        psi_off,
        lambda,
        lambda11_abs: lambda[0][0].norm(),
        lambda12_abs: lambda[0][1].norm(),
    })
}

/// SISO loop `G(s) C_m(s, w, psi)` and demodulated MIMO loop `G2(s, w, psi) C(s)`.
pub fn loop_transfers(
    g: &RationalTransferFunction,
    spec: &ControllerSpec,
    omega_r: f64,
    psi_off: f64,
    s: Complex64,
) -> Result<(Complex64, Mat2), FreqError> {
    let l_m = g.eval(s)? * modulated_controller_response(spec, s, omega_r, psi_off)?;
    let cs = match spec.kind {
        ControllerKind::Integrator if s.norm() == 0.0 => {
            return Err(FreqError::ControllerPole { re: 0.0, im: 0.0 })
        }
        _ => spec.response(s),
    };
    let g2 = demod_plant_response(g, s, omega_r, psi_off)?;
    Ok((l_m, mat_scale(&g2.matrix, cs)))
}

/// What a Bode sweep evaluates.
#[derive(Debug, Clone)]
pub enum BodeTarget {
    Plant(RationalTransferFunction),
    DemodPlant {
        plant: RationalTransferFunction,
        omega_r: f64,
        psi_off: f64,
    },
    ModulatedController {
        spec: ControllerSpec,
        omega_r: f64,
        psi_off: f64,
    },
    Loop {
        plant: RationalTransferFunction,
        spec: ControllerSpec,
        omega_r: f64,
        psi_off: f64,
    },
}

impl BodeTarget {
    pub fn entries(&self) -> &'static [&'static str] {
        match self {
            BodeTarget::Plant(_) => &["G"],
            BodeTarget::DemodPlant { .. } => &["G2_11", "G2_12"],
            BodeTarget::ModulatedController { .. } => &["Cm"],
            BodeTarget::Loop { .. } => &["Lm", "L_11", "L_12"],
        }
    }

    fn evaluate(&self, omega: f64) -> Result<Vec<Complex64>, FreqError> {
        let s = Complex64::new(0.0, omega);
        Ok(match self {
            BodeTarget::Plant(g) => vec![g.eval(s)?],
            BodeTarget::DemodPlant {
                plant,
                omega_r,
                psi_off,
            } => {
                let r = demod_plant_response(plant, s, *omega_r, *psi_off)?;
                vec![r.g11(), r.g12()]
            }
            BodeTarget::ModulatedController {
                spec,
                omega_r,
                psi_off,
            } => {
                vec![modulated_controller_response(spec, s, *omega_r, *psi_off)?]
            }
            BodeTarget::Loop {
                plant,
                spec,
                omega_r,
                psi_off,
            } => {
                let (lm, l) = loop_transfers(plant, spec, *omega_r, *psi_off, s)?;
                vec![lm, l[0][0], l[0][1]]
            }
        })
    }
}

/// One Bode table row; `mag_db` / `phase_deg` are NaN on pole rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeRow {
    pub omega: f64,
    pub mag_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
    pub pole: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodeTable {
    pub entries: Vec<String>,
    pub rows: Vec<BodeRow>,
}

impl BodeTable {
    /// Column names: `omega_rad_s, <e>_mag_db, <e>_phase_deg, ..., pole`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["omega_rad_s".to_string()];
        for e in &self.entries {
            h.push(format!("{e}_mag_db"));
            h.push(format!("{e}_phase_deg"));
        }
        h.push("pole".to_string());
        h
    }

    /// Magnitudes (dB) of one entry over the grid.
    pub fn magnitudes(&self, entry: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.mag_db[entry]).collect()
    }
}

/// Logarithmically spaced grid with `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Magnitude (dB, `20 log10`) and unwrapped phase (deg) of `target` over a
/// sorted positive grid. Pole points are flagged and skipped.
pub fn bode_sweep(target: &BodeTarget, grid: &[f64]) -> Result<BodeTable, FreqError> {
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FreqError::BadGrid);
    }
    let n_e = target.entries().len();
    let mut rows: Vec<BodeRow> = grid
        .iter()
        .map(|&w| match target.evaluate(w) {
            Ok(vals) => BodeRow {
                omega: w,
                mag_db: vals.iter().map(|z| 20.0 * z.norm().log10()).collect(),
                phase_deg: vals.iter().map(|z| z.arg()).collect(),
                pole: false,
            },
            Err(_) => BodeRow {
                omega: w,
                mag_db: vec![f64::NAN; n_e],
                phase_deg: vec![f64::NAN; n_e],
                pole: true,
            },
        })
        .collect();
    for e in 0..n_e {
        let mut ph: Vec<f64> = rows.iter().map(|r| r.phase_deg[e]).collect();
        unwrap_phases(&mut ph);
        for (r, p) in rows.iter_mut().zip(ph) {
            r.phase_deg[e] = p.to_degrees();
        }
    }
    Ok(BodeTable {
        entries: target.entries().iter().map(|s| s.to_string()).collect(),
        rows,
    })
}
