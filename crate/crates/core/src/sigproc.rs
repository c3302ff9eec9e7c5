//! Filtering, spectral estimation and summary statistics.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::simulate::SimulationTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("series of length {len} is too short for segment length {segment}")]
    TooShort { len: usize, segment: usize },
    #[error("overlap fraction must lie in [0, 1), got {0}")]
    BadOverlap(f64),
    #[error("segment length must be at least 2")]
    BadSegment,
    #[error("sample interval must be positive")]
    BadDt,
}

/// Streaming first-order low-pass `1 / (s / w_c + 1)` discretised exactly
/// for a zero-order-held input.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderLowPass {
    decay: f64,
    y: f64,
}

impl FirstOrderLowPass {
    pub fn new(cutoff: f64, dt: f64, initial: f64) -> Self {
        assert!(cutoff > 0.0 && dt > 0.0, "cutoff and dt must be positive");
        Self {
            decay: (-cutoff * dt).exp(),
            y: initial,
        }
    }

    /// Advance one sample and return the new output.
    pub fn step(&mut self, u: f64) -> f64 {
        self.y = self.decay * self.y + (1.0 - self.decay) * u;
        self.y
    }

    pub fn value(&self) -> f64 {
        self.y
    }

    pub fn reset(&mut self, value: f64) {
        self.y = value;
    }
}

/// Filter a whole series, starting from rest.
pub fn lowpass_first_order(series: &[f64], dt: f64, cutoff: f64) -> Vec<f64> {
    let mut f = FirstOrderLowPass::new(cutoff, dt, 0.0);
    series.iter().map(|&u| f.step(u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

/// One-sided power spectral density on a rad/s axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdResult {
    /// Frequencies, rad/s.
    pub omega: Vec<f64>,
    /// Density, (unit)^2 s/rad; integrates over `omega` to the variance.
    pub density: Vec<f64>,
    pub segment_len: usize,
    pub overlap_frac: f64,
    pub window: Window,
    pub segments: usize,
}

impl PsdResult {
    /// Rectangle-rule integral of the density.
    pub fn integral(&self) -> f64 {
        if self.omega.len() < 2 {
            return 0.0;
        }
        let d_omega = self.omega[1] - self.omega[0];
        self.density.iter().sum::<f64>() * d_omega
    }

    /// Index and frequency of the largest density bin.
    pub fn peak(&self) -> (usize, f64) {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |best, (i, &p)| if p > best.1 { (i, p) } else { best },
            );
        (i, self.omega[i])
    }
}

/// `floor(n / 8)` rounded to the nearest power of two, at least 2 and at most `n`.
pub fn default_segment_len(n: usize) -> usize {
    let target = (n / 8).max(2) as f64;
    let p = 2f64.powf(target.log2().round()) as usize;
    let mut seg = p.max(2);
    while seg > n && seg > 2 {
        seg /= 2;
    }
    seg
}

/// Welch estimate: averaged modified periodograms of mean-removed segments.
pub fn welch_psd(
    series: &[f64],
    dt: f64,
    segment_len: usize,
    overlap_frac: f64,
    window: Window,
) -> Result<PsdResult, SignalError> {
    if !(dt > 0.0) {
        return Err(SignalError::BadDt);
    }
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(SignalError::BadOverlap(overlap_frac));
    }
    if segment_len < 2 {
        return Err(SignalError::BadSegment);
    }
    if segment_len > series.len() {
        return Err(SignalError::TooShort {
            len: series.len(),
            segment: segment_len,
        });
    }
    let n = segment_len;
    let w: Vec<f64> = match window {
        Window::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect(),
    };
    let w_energy: f64 = w.iter().map(|x| x * x).sum();
    let hop = ((n as f64) * (1.0 - overlap_frac)).round().max(1.0) as usize;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut segments = 0;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut start = 0;
    while start + n <= series.len() {
        let seg = &series[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &x), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new((x - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    // Two-sided density per rad/s is |X|^2 dt / (2 pi sum w^2); fold the
    // negative frequencies onto the positive ones.
    let scale = dt / (2.0 * PI * w_energy * segments as f64);
    let d_omega = 2.0 * PI / (n as f64 * dt);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let fold = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            p * scale * fold
        })
        .collect();
    let omega = (0..n_bins).map(|k| k as f64 * d_omega).collect();
    Ok(PsdResult {
        omega,
        density,
        segment_len: n,
        overlap_frac,
        window,
        segments,
    })
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Standard deviations of tower velocity, total additive torque and power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdDevMetrics {
    pub sigma_xdot: f64,
    pub sigma_dtg_total: f64,
    pub sigma_power: f64,
}

/// Standard deviations over `t >= skip_s`. Power is
/// `efficiency * omega_r * G_box * Tg_total`.
pub fn stddev_metrics(
    trace: &SimulationTrace,
    skip_s: f64,
    g_box: f64,
    efficiency: f64,
) -> StdDevMetrics {
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.t >= skip_s).collect();
    let xdot: Vec<f64> = rows.iter().map(|r| r.xdot).collect();
    let dtg: Vec<f64> = rows.iter().map(|r| r.dtg_damp + r.dtg).collect();
    let power: Vec<f64> = rows
        .iter()
        .map(|r| efficiency * r.omega_r * g_box * (r.tg + r.dtg_damp + r.dtg))
        .collect();
    StdDevMetrics {
        sigma_xdot: std_dev(&xdot),
        sigma_dtg_total: std_dev(&dtg),
        sigma_power: std_dev(&power),
    }
}
