//! EM receiver: pilot-based phase initialization, alternating detector and
//! smoother passes, the expected log-likelihood `Q`, and a grid-search MAP
//! phase estimator used as a reference for the smoother.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bicm::FrameLayout;
use crate::channel::{reduced_mixing_matrix, ChannelMatrix, ReceivedFrame, ReducedPhnTrajectory};
use crate::detector::{run_detector, DetectorConfig, DetectorOutput, FrameContext, SoftSymbolStats};
use crate::ekfs::{run_ekfs, run_ekfs_at, EkfsConfig, ProcessNoise};
use crate::error::{config_err, dim_err};
use crate::ldpc::BitBeliefs;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub em_iters: usize,
    pub detector: DetectorConfig,
    pub ekfs: EkfsConfig,
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.em_iters == 0 {
            return Err(config_err("em_iters must be at least 1"));
        }
        self.detector.validate()?;
        self.ekfs.validate()
    }
}

/// Gaussian random-walk prior on the reduced phase state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePrior {
    /// Per-oscillator σ²_Δ; infinity switches the prior off.
    pub innovation_var: f64,
    #[serde(default)]
    pub process_noise: ProcessNoise,
    /// Variance of a zero-mean anchor on the first instant; `None` is flat.
    #[serde(default)]
    pub initial_var: Option<f64>,
}

impl PhasePrior {
    pub fn new(innovation_var: f64) -> Self {
        Self { innovation_var, process_noise: ProcessNoise::Diagonal, initial_var: None }
    }

    /// The prior implied by an smoother configuration: its first prediction
    /// has variance `initial + 2σ²_Δ`.
    pub fn matching(cfg: &EkfsConfig) -> Self {
        Self {
            innovation_var: cfg.innovation_var,
            process_noise: cfg.process_noise,
            initial_var: Some(cfg.initial_var() + 2.0 * cfg.innovation_var),
        }
    }

    fn precision(&self, num_rx: usize, num_tx: usize) -> Option<DMatrix<f64>> {
        if self.innovation_var.is_infinite() {
            return None;
        }
        let q = EkfsConfig { innovation_var: self.innovation_var, process_noise: self.process_noise, initial_var: None }
            .process_noise_cov(num_rx, num_tx);
        Some(q.try_inverse().unwrap_or_else(|| DMatrix::from_element(num_rx + num_tx - 1, num_rx + num_tx - 1, f64::INFINITY)))
    }
}

/// `ln p(φ)` up to a constant.
pub fn log_prior(phi: &ReducedPhnTrajectory, prior: &PhasePrior) -> f64 {
    let Some(p) = prior.precision(phi.num_rx, phi.num_tx) else {
        return 0.0;
    };
    let mut total = 0.0;
    if let Some(v) = prior.initial_var {
        if phi.frame_len() > 0 {
            total -= phi.phi.column(0).norm_squared() / (2.0 * v);
        }
    }
    for k in 1..phi.frame_len() {
        total -= increment_cost(&p, &(phi.phi.column(k) - phi.phi.column(k - 1)));
    }
    total
}

fn increment_cost(precision: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    if d.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    0.5 * (d.transpose() * precision * d)[(0, 0)]
}

fn noise_per_rx(y: &ReceivedFrame) -> Result<Vec<f64>> {
    match y.noise_var.len() {
        1 => Ok(vec![y.noise_var[0]; y.num_rx()]),
        n if n == y.num_rx() => Ok(y.noise_var.clone()),
        n => Err(dim_err(format!("{n} noise variances for {} receive antennas", y.num_rx()))),
    }
}

fn check_dims(phi: &ReducedPhnTrajectory, y: &ReceivedFrame, h: &ChannelMatrix, len: usize) -> Result<()> {
    if phi.num_rx != h.num_rx() || phi.num_tx != h.num_tx() || y.num_rx() != h.num_rx() {
        return Err(dim_err("phase state, observations and channel disagree on antenna counts"));
    }
    if phi.frame_len() != y.frame_len() || len != y.frame_len() {
        return Err(dim_err("phase state, observations and symbols differ in length"));
    }
    Ok(())
}

/// Expected log-likelihood under the soft statistics plus `ln p(φ)`:
/// `Σ_k Σ_ℓ (2Re{y_ℓ* (Xα)_ℓ} − (XBXᴴ)_ℓℓ) / (2σ²_ℓ) + ln p(φ)`.
pub fn evaluate_q(
    phi: &ReducedPhnTrajectory,
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    soft: &SoftSymbolStats,
    prior: &PhasePrior,
) -> Result<f64> {
    check_dims(phi, y, h, soft.frame_len())?;
    let noise = noise_per_rx(y)?;
    let mut total = 0.0;
    for k in 0..y.frame_len() {
        let x = reduced_mixing_matrix(h.matrix(), phi.phi.column(k).as_slice());
        let xa = &x * soft.alpha.column(k);
        let xbx = &x * &soft.b_matrix[k] * x.adjoint();
        for l in 0..h.num_rx() {
            let yl = y.observations[(l, k)];
            total += (2.0 * (yl.conj() * xa[l]).re - xbx[(l, l)].re) / (2.0 * noise[l]);
        }
    }
    Ok(total + log_prior(phi, prior))
}

/// Known-symbol objective `−Σ_k Σ_ℓ |y_ℓ − (Xs)_ℓ|² / (2σ²_ℓ) + ln p(φ)`.
pub fn map_objective(
    phi: &ReducedPhnTrajectory,
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    symbols: &DMatrix<Complex64>,
    prior: &PhasePrior,
) -> Result<f64> {
    check_dims(phi, y, h, symbols.ncols())?;
    let noise = noise_per_rx(y)?;
    let mut total = 0.0;
    for k in 0..y.frame_len() {
        total -= residual_cost(h, phi.phi.column(k).as_slice(), &y.observations.column(k).into_owned(), &symbols.column(k).into_owned(), &noise);
    }
    Ok(total + log_prior(phi, prior))
}

fn residual_cost(h: &ChannelMatrix, phi: &[f64], y: &DVector<Complex64>, s: &DVector<Complex64>, noise: &[f64]) -> f64 {
    let e = y - reduced_mixing_matrix(h.matrix(), phi) * s;
    e.iter().zip(noise).map(|(v, n)| v.norm_sqr() / (2.0 * n)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOracleConfig {
    /// Grid spacing κ on `[−π, π)`, rad.
    pub grid_step: f64,
    /// Full coordinate-ascent cycles 𝒩.
    pub ap_cycles: usize,
}

impl Default for MapOracleConfig {
    fn default() -> Self {
        Self { grid_step: 1e-2, ap_cycles: 4 }
    }
}

/// Cyclic coordinate ascent of [`map_objective`] over a κ-grid, starting
/// from zero. Each cycle visits every component of every instant once.
pub fn map_oracle(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    symbols: &DMatrix<Complex64>,
    cfg: &MapOracleConfig,
    prior: &PhasePrior,
) -> Result<ReducedPhnTrajectory> {
    if !(cfg.grid_step > 0.0) || cfg.ap_cycles == 0 {
        return Err(config_err("grid_step must be positive and ap_cycles at least 1"));
    }
    let (nr, nt) = (h.num_rx(), h.num_tx());
    let len = y.frame_len();
    let mut phi = ReducedPhnTrajectory::zeros(nt, nr, len);
    phi.reduced_innovation_var = 2.0 * prior.innovation_var;
    check_dims(&phi, y, h, symbols.ncols())?;
    let noise = noise_per_rx(y)?;
    let precision = prior.precision(nr, nt);
    let steps = (2.0 * std::f64::consts::PI / cfg.grid_step).ceil() as usize;
    let grid: Vec<f64> = (0..steps).map(|i| -std::f64::consts::PI + i as f64 * cfg.grid_step).collect();
    let ys: Vec<DVector<Complex64>> = (0..len).map(|k| y.column(k)).collect();
    let ss: Vec<DVector<Complex64>> = (0..len).map(|k| symbols.column(k).into_owned()).collect();

    // Terms of the objective that involve instant k.
    let local = |phi: &DMatrix<f64>, k: usize| -> f64 {
        let col = phi.column(k).into_owned();
        let mut v = -residual_cost(h, col.as_slice(), &ys[k], &ss[k], &noise);
        if let Some(p) = &precision {
            if k == 0 {
                if let Some(iv) = prior.initial_var {
                    v -= col.norm_squared() / (2.0 * iv);
                }
            } else {
                v -= increment_cost(p, &(&col - phi.column(k - 1)));
            }
            if k + 1 < len {
                v -= increment_cost(p, &(phi.column(k + 1) - &col));
            }
        }
        v
    };

    for _ in 0..cfg.ap_cycles {
        for f in 0..phi.state_dim() {
            for k in 0..len {
                let mut best = (local(&phi.phi, k), phi.phi[(f, k)]);
                for &g in &grid {
                    phi.phi[(f, k)] = g;
                    let v = local(&phi.phi, k);
                    if v > best.0 {
                        best = (v, g);
                    }
                }
                phi.phi[(f, k)] = best.1;
            }
        }
    }
    Ok(phi)
}

/// Pilot-only phase estimate: smoother over the pilot instants, then
/// per-component linear interpolation, holding edge values outside.
pub fn init_pilot_phn(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    layout: &FrameLayout,
    cfg: &EkfsConfig,
) -> Result<ReducedPhnTrajectory> {
    let (nr, nt) = (h.num_rx(), h.num_tx());
    let len = layout.frame_len;
    if y.frame_len() != len {
        return Err(dim_err("observations and layout differ in length"));
    }
    let mut phi = ReducedPhnTrajectory::zeros(nt, nr, len);
    phi.reduced_innovation_var = 2.0 * cfg.innovation_var;
    if layout.pilot_instants.is_empty() {
        return Ok(phi);
    }
    let mut alpha = DMatrix::zeros(nt, len);
    for (i, &k) in layout.pilot_instants.iter().enumerate() {
        alpha.set_column(k, &layout.pilot_vectors[i]);
    }
    let soft = SoftSymbolStats { alpha, b_matrix: vec![DMatrix::zeros(nt, nt); len] };
    let traj = run_ekfs_at(y, h, &soft, &layout.pilot_instants, cfg)?;
    phi.phi = interpolate_columns(&traj.instants, &traj.smoothed_state, len);
    Ok(phi)
}

/// Linear interpolation of `values` (one column per anchor instant) onto
/// `0..len`; instants outside the anchors take the nearest edge value.
pub fn interpolate_columns(anchors: &[usize], values: &DMatrix<f64>, len: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(values.nrows(), len);
    if anchors.is_empty() {
        return out;
    }
    for k in 0..len {
        let col = match anchors.binary_search(&k) {
            Ok(i) => values.column(i).into_owned(),
            Err(0) => values.column(0).into_owned(),
            Err(i) if i == anchors.len() => values.column(i - 1).into_owned(),
            Err(i) => {
                let (k0, k1) = (anchors[i - 1], anchors[i]);
                let t = (k - k0) as f64 / (k1 - k0) as f64;
                values.column(i - 1) * (1.0 - t) + values.column(i) * t
            }
        };
        out.set_column(k, &col);
    }
    out
}

/// Snapshot after one EM iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmState {
    /// 1-based.
    pub iteration: usize,
    /// Estimate produced by this iteration's smoother pass.
    pub phi_hat: ReducedPhnTrajectory,
    /// Soft statistics from this iteration's detector pass.
    pub soft: SoftSymbolStats,
    /// `Q(φ̂ⁱ | φ̂ⁱ⁻¹)`.
    pub q_value: f64,
    /// Hard decisions of this iteration's detector pass.
    pub hard_bits: Vec<u8>,
    pub syndrome_weight: usize,
    pub mutual_info_proxy: f64,
    /// Against the transmitted bits, when supplied.
    pub bit_errors: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EmOutput {
    pub hard_bits: Vec<u8>,
    pub initial_phi: ReducedPhnTrajectory,
    pub history: Vec<EmState>,
}

fn count_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Alternates detector and smoother passes for `em_iters` iterations, starting
/// from the pilot-based estimate. `truth` enables per-iteration error counts.
pub fn run_em(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    ctx: &FrameContext<'_>,
    cfg: &EmConfig,
    truth: Option<&[u8]>,
) -> Result<EmOutput> {
    cfg.validate()?;
    let initial_phi = init_pilot_phn(y, h, ctx.layout, &cfg.ekfs)?;
    let prior = PhasePrior::matching(&cfg.ekfs);
    let mut phi = initial_phi.clone();
    let mut warm: Option<BitBeliefs> = None;
    let mut history = Vec::with_capacity(cfg.em_iters);
    for iteration in 1..=cfg.em_iters {
        let det = run_detector(y, h, &phi, ctx, &cfg.detector, warm.as_ref())?;
        let traj = run_ekfs(y, h, &det.soft, &cfg.ekfs)?;
        let next = traj.to_reduced(2.0 * cfg.ekfs.innovation_var)?;
        let q_value = evaluate_q(&next, y, h, &det.soft, &prior)?;
        let DetectorOutput { soft, hard_bits, next_priors, diagnostics, .. } = det;
        history.push(EmState {
            iteration,
            phi_hat: next.clone(),
            soft,
            q_value,
            bit_errors: truth.map(|t| count_errors(&hard_bits, t)),
            hard_bits,
            syndrome_weight: diagnostics.syndrome_weight,
            mutual_info_proxy: diagnostics.mutual_info_proxy,
        });
        phi = next;
        warm = Some(next_priors);
    }
    let hard_bits = history.last().map(|s| s.hard_bits.clone()).unwrap_or_default();
    Ok(EmOutput { hard_bits, initial_phi, history })
}

/// Pilot-only estimate followed by a single detector pass.
pub fn disjoint_receiver(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    ctx: &FrameContext<'_>,
    detector: &DetectorConfig,
    ekfs: &EkfsConfig,
) -> Result<Vec<u8>> {
    let phi = init_pilot_phn(y, h, ctx.layout, ekfs)?;
    Ok(run_detector(y, h, &phi, ctx, detector, None)?.hard_bits)
}

/// One detector pass assuming no phase rotation at all.
pub fn no_tracking_receiver(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    ctx: &FrameContext<'_>,
    detector: &DetectorConfig,
) -> Result<Vec<u8>> {
    let phi = ReducedPhnTrajectory::zeros(h.num_tx(), h.num_rx(), y.frame_len());
    Ok(run_detector(y, h, &phi, ctx, detector, None)?.hard_bits)
}

#[derive(Serialize)]
struct HistoryRecord {
    iteration: usize,
    q_value: f64,
    syndrome_weight: usize,
    mutual_info_proxy: f64,
    bit_errors: Option<usize>,
    ber: Option<f64>,
}

/// One JSON object per EM iteration.
pub fn write_history_jsonl<W: Write>(history: &[EmState], info_len: usize, mut out: W) -> Result<()> {
    for s in history {
        let rec = HistoryRecord {
            iteration: s.iteration,
            q_value: s.q_value,
            syndrome_weight: s.syndrome_weight,
            mutual_info_proxy: s.mutual_info_proxy,
            bit_errors: s.bit_errors,
            ber: s.bit_errors.map(|e| e as f64 / info_len as f64),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
