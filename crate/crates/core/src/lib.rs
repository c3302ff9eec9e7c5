//! Modulated-demodulated control (MDC) of once-per-revolution side-side
//! tower loads on a variable-speed wind turbine.
//!
//! The crate is organised bottom-up:
//!
//! * [`transfer`] - real rational transfer functions in the Laplace variable.
//! * [`turbine`] - tower + rotor model, parameter presets and plant definitions.
//! * [`sigproc`] - first-order filtering, Welch PSD and statistics.
//! * [`control`] - K-omega-squared law, conventional damper and the MDC chain.
//! * [`freqdom`] - modulated controllers, demodulated MIMO plant, RGA and Bode sweeps.
//! * [`simulate`] - fixed-step RK4 closed-loop simulation producing traces.
//! * [`config`] / [`io`] - key=value run configuration and CSV files used by the CLI.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod freqdom;
pub mod io;
pub mod sigproc;
pub mod simulate;
pub mod transfer;
pub mod turbine;

pub use num_complex::Complex64;
