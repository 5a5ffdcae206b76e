//! Link-level simulation and receiver library for coded MIMO systems whose
//! transmit and receive oscillators suffer independent Wiener phase noise.
//!
//! The receiver alternates between an iterative BICM detector, which produces
//! soft symbol statistics, and an extended Kalman filter-smoother, which
//! re-estimates the phase trajectories from those statistics. Baseline
//! receivers, a grid-search MAP reference and a Monte-Carlo harness are
//! provided alongside.
//!
//! Module map:
//!
//! - [`channel`]: Rician channel draws, Wiener phase noise, received frames.
//! - [`ldpc`]: regular LDPC construction, systematic encoding, sum-product decoding.
//! - [`bicm`]: Gray QAM, bit interleaving, pilot insertion, frame assembly.
//! - [`detector`]: equalizer / demapper / decoder message passing and soft statistics.
//! - [`ekfs`]: extended Kalman filter and fixed-interval smoother on the reduced phase state.
//! - [`em`]: EM orchestration, pilot initialisation, Q function, MAP oracle, baselines.
//! - [`harness`]: scenarios, seeded Monte-Carlo runs, output files, complexity counts.

pub mod bicm;
pub mod channel;
pub mod detector;
pub mod ekfs;
pub mod em;
mod error;
pub mod harness;
pub mod ldpc;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Probability floor shared by every message-passing stage.
pub const PROB_EPS: f64 = 1e-12;
