//! Soft-decision-directed extended Kalman filter and fixed-interval smoother
//! over the reduced phase state (the M-step).
//!
//! The state is kept unwrapped. Gains use the complex innovation with the
//! real-part operator applied to the state and covariance corrections.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{reduced_mixing_matrix, ChannelMatrix, ReceivedFrame, ReducedPhnTrajectory};
use crate::detector::SoftSymbolStats;
use crate::error::{config_err, dim_err};
use crate::linalg::{hermitize, solve_hermitian};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProcessNoise {
    /// `2σ²_Δ I`.
    #[default]
    Diagonal,
    /// Exact covariance of the reduced increments: receive components share
    /// the reference transmit increment, transmit components subtract it.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfsConfig {
    /// Per-oscillator innovation variance σ²_Δ, rad².
    pub innovation_var: f64,
    #[serde(default)]
    pub process_noise: ProcessNoise,
    /// Variance of the zero initial state; `None` means `2σ²_Δ`.
    #[serde(default)]
    pub initial_var: Option<f64>,
}

impl EkfsConfig {
    pub fn new(innovation_var: f64) -> Self {
        Self { innovation_var, process_noise: ProcessNoise::Diagonal, initial_var: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.innovation_var >= 0.0) || !self.innovation_var.is_finite() {
            return Err(config_err("innovation variance must be finite and non-negative"));
        }
        if let Some(v) = self.initial_var {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_err("initial variance must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn initial_var(&self) -> f64 {
        self.initial_var.unwrap_or(2.0 * self.innovation_var)
    }

    /// Per-step process noise covariance for an `N_r × N_t` system.
    pub fn process_noise_cov(&self, num_rx: usize, num_tx: usize) -> DMatrix<f64> {
        let n = num_rx + num_tx - 1;
        let s = self.innovation_var;
        match self.process_noise {
            ProcessNoise::Diagonal => DMatrix::identity(n, n) * (2.0 * s),
            ProcessNoise::Structured => DMatrix::from_fn(n, n, |i, j| {
                let rx_i = i < num_rx;
                let rx_j = j < num_rx;
                if i == j {
                    2.0 * s
                } else if rx_i == rx_j {
                    s
                } else {
                    -s
                }
            }),
        }
    }
}

/// Quantities of one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanWork {
    pub predicted_obs: DVector<Complex64>,
    pub jacobian: DMatrix<Complex64>,
    pub gain: DMatrix<Complex64>,
    pub obs_noise_cov: DMatrix<Complex64>,
    /// Innovation covariance needed regularization.
    pub regularized: bool,
}

/// Forward and smoothed estimates at the processed instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfsTrajectory {
    pub num_rx: usize,
    pub num_tx: usize,
    /// Frame instants covered, increasing.
    pub instants: Vec<usize>,
    /// `N × len(instants)` each.
    pub prior_state: DMatrix<f64>,
    pub posterior_state: DMatrix<f64>,
    pub smoothed_state: DMatrix<f64>,
    pub prior_cov: Vec<DMatrix<f64>>,
    pub posterior_cov: Vec<DMatrix<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
    /// Solves that fell back to regularization.
    pub regularized_steps: usize,
}

impl EkfsTrajectory {
    pub fn state_dim(&self) -> usize {
        self.num_rx + self.num_tx - 1
    }

    /// Smoothed states as a phase trajectory. Requires every frame instant
    /// to have been processed.
    pub fn to_reduced(&self, reduced_innovation_var: f64) -> Result<ReducedPhnTrajectory> {
        if self.instants.iter().enumerate().any(|(i, &k)| i != k) {
            return Err(dim_err("trajectory does not cover every frame instant"));
        }
        Ok(ReducedPhnTrajectory {
            phi: self.smoothed_state.clone(),
            num_rx: self.num_rx,
            num_tx: self.num_tx,
            reduced_innovation_var,
        })
    }

    /// CSV with `k`, then prior, posterior and smoothed states, then the
    /// smoothed variances.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.state_dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        for prefix in ["prior", "posterior", "smoothed", "smoothed_var"] {
            header.extend((0..n).map(|i| format!("{prefix}_{i}")));
        }
        w.write_record(&header)?;
        for (j, k) in self.instants.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            for m in [&self.prior_state, &self.posterior_state, &self.smoothed_state] {
                rec.extend((0..n).map(|i| format!("{:.9e}", m[(i, j)])));
            }
            rec.extend((0..n).map(|i| format!("{:.9e}", self.smoothed_cov[j][(i, i)])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time update: state carried over, covariance grown by `q`.
pub fn predict(state: &DVector<f64>, cov: &DMatrix<f64>, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (state.clone(), cov + q)
}

/// `z(φ) = Γ̃r H Γ̃t α`.
pub fn predicted_observation(phi: &DVector<f64>, h: &ChannelMatrix, alpha: &DVector<Complex64>) -> DVector<Complex64> {
    reduced_mixing_matrix(h.matrix(), phi.as_slice()) * alpha
}

/// `∂z/∂φ` at `phi`: `diag(j z)` for the receive components, then one column
/// per non-reference transmit antenna.
pub fn jacobian(phi: &DVector<f64>, h: &ChannelMatrix, alpha: &DVector<Complex64>) -> DMatrix<Complex64> {
    let (nr, nt) = (h.num_rx(), h.num_tx());
    let z = predicted_observation(phi, h, alpha);
    let j = Complex64::i();
    let mut out = DMatrix::zeros(nr, nr + nt - 1);
    for l in 0..nr {
        out[(l, l)] = j * z[l];
        for m in 0..nt - 1 {
            out[(l, nr + m)] =
                j * h.matrix()[(l, m)] * Complex64::cis(phi[l]) * alpha[m] * Complex64::cis(phi[nr + m]);
        }
    }
    out
}

/// Gain `K = M⁻Żᴴ(C_w + ŻM⁻Żᴴ)⁻¹` for a given prediction and Jacobian.
pub fn kalman_work(
    m_minus: &DMatrix<f64>,
    predicted_obs: DVector<Complex64>,
    jacobian: DMatrix<Complex64>,
    noise_var: &[f64],
) -> KalmanWork {
    let obs_noise_cov = DMatrix::from_diagonal(&DVector::from_iterator(
        noise_var.len(),
        noise_var.iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    let mc = m_minus.map(|v| Complex64::new(v, 0.0));
    let zm = &jacobian * &mc;
    let mut s = &obs_noise_cov + &zm * jacobian.adjoint();
    hermitize(&mut s);
    // S is Hermitian and M⁻ symmetric, so Kᴴ = S⁻¹ Ż M⁻.
    let (kh, regularized) = solve_hermitian(&s, &zm);
    KalmanWork { predicted_obs, jacobian, gain: kh.adjoint(), obs_noise_cov, regularized }
}

/// Measurement update with the real-part operator as written.
pub fn update(
    phi_minus: &DVector<f64>,
    m_minus: &DMatrix<f64>,
    y: &DVector<Complex64>,
    work: &KalmanWork,
) -> (DVector<f64>, DMatrix<f64>) {
    let innovation = y - &work.predicted_obs;
    let phi = phi_minus + (&work.gain * innovation).map(|c| c.re);
    let kz = (&work.gain * &work.jacobian).map(|c| c.re);
    let n = phi_minus.len();
    let mut m = (DMatrix::identity(n, n) - kz) * m_minus;
    hermitize(&mut m);
    (phi, m)
}

/// Observation model seen by the filter at its `idx`-th processed instant.
pub(crate) trait ObservationModel {
    fn observe(&self, idx: usize, phi: &DVector<f64>) -> (DVector<Complex64>, DMatrix<Complex64>);
}

struct SoftModel<'a> {
    h: &'a ChannelMatrix,
    alphas: Vec<DVector<Complex64>>,
}

impl ObservationModel for SoftModel<'_> {
    fn observe(&self, idx: usize, phi: &DVector<f64>) -> (DVector<Complex64>, DMatrix<Complex64>) {
        let a = &self.alphas[idx];
        (predicted_observation(phi, self.h, a), jacobian(phi, self.h, a))
    }
}

/// Forward filter then backward smoother over `instants`. Prediction from
/// instant `a` to `b` adds `(b − a)·q`; the initial state sits one step
/// before the first instant.
pub(crate) fn filter_smooth<O: ObservationModel>(
    model: &O,
    observations: &[DVector<Complex64>],
    instants: &[usize],
    noise_var: &[f64],
    q: &DMatrix<f64>,
    initial_var: f64,
    num_rx: usize,
    num_tx: usize,
) -> EkfsTrajectory {
    let n = q.nrows();
    let len = instants.len();
    let mut traj = EkfsTrajectory {
        num_rx,
        num_tx,
        instants: instants.to_vec(),
        prior_state: DMatrix::zeros(n, len),
        posterior_state: DMatrix::zeros(n, len),
        smoothed_state: DMatrix::zeros(n, len),
        prior_cov: Vec::with_capacity(len),
        posterior_cov: Vec::with_capacity(len),
        smoothed_cov: vec![DMatrix::zeros(n, n); len],
        regularized_steps: 0,
    };
    let mut state = DVector::zeros(n);
    let mut cov = DMatrix::identity(n, n) * initial_var;
    let mut prev: Option<usize> = None;
    for (idx, &k) in instants.iter().enumerate() {
        let gap = match prev {
            Some(p) => k - p,
            None => k + 1,
        };
        let (phi_minus, m_minus) = predict(&state, &cov, &(q * gap as f64));
        let (z, jac) = model.observe(idx, &phi_minus);
        let work = kalman_work(&m_minus, z, jac, noise_var);
        traj.regularized_steps += usize::from(work.regularized);
        let (phi_plus, m_plus) = update(&phi_minus, &m_minus, &observations[idx], &work);
        traj.prior_state.set_column(idx, &phi_minus);
        traj.posterior_state.set_column(idx, &phi_plus);
        traj.prior_cov.push(m_minus);
        traj.posterior_cov.push(m_plus.clone());
        state = phi_plus;
        cov = m_plus;
        prev = Some(k);
    }
    smooth(&mut traj);
    traj
}

/// Rauch–Tung–Striebel backward pass, filling the smoothed fields.
pub fn smooth(traj: &mut EkfsTrajectory) {
    let len = traj.instants.len();
    if len == 0 {
        return;
    }
    let last = len - 1;
    traj.smoothed_state.set_column(last, &traj.posterior_state.column(last).into_owned());
    traj.smoothed_cov[last] = traj.posterior_cov[last].clone();
    for k in (0..last).rev() {
        // G = M⁺(k) M⁻(k+1)⁻¹, so Gᵀ solves M⁻(k+1) Gᵀ = M⁺(k).
        let (gt, flagged) = solve_hermitian(&traj.prior_cov[k + 1], &traj.posterior_cov[k]);
        traj.regularized_steps += usize::from(flagged);
        let g = gt.transpose();
        let ds = traj.smoothed_state.column(k + 1) - traj.prior_state.column(k + 1);
        let s = traj.posterior_state.column(k) + &g * ds;
        traj.smoothed_state.set_column(k, &s);
        let dm = &traj.smoothed_cov[k + 1] - &traj.prior_cov[k + 1];
        let mut m = &traj.posterior_cov[k] + &g * dm * g.transpose();
        hermitize(&mut m);
        traj.smoothed_cov[k] = m;
    }
}

fn check_inputs(y: &ReceivedFrame, h: &ChannelMatrix, soft: &SoftSymbolStats) -> Result<()> {
    if y.num_rx() != h.num_rx() || soft.alpha.nrows() != h.num_tx() {
        return Err(dim_err("observations, soft symbols and channel disagree on antenna counts"));
    }
    if y.frame_len() != soft.frame_len() {
        return Err(dim_err("observations and soft symbols differ in length"));
    }
    Ok(())
}

fn noise_per_rx(y: &ReceivedFrame) -> Result<Vec<f64>> {
    match y.noise_var.len() {
        1 => Ok(vec![y.noise_var[0]; y.num_rx()]),
        n if n == y.num_rx() => Ok(y.noise_var.clone()),
        n => Err(dim_err(format!("{n} noise variances for {} receive antennas", y.num_rx()))),
    }
}

/// Filter and smooth over every instant of the frame.
pub fn run_ekfs(y: &ReceivedFrame, h: &ChannelMatrix, soft: &SoftSymbolStats, cfg: &EkfsConfig) -> Result<EkfsTrajectory> {
    let instants: Vec<usize> = (0..y.frame_len()).collect();
    run_ekfs_at(y, h, soft, &instants, cfg)
}

/// Filter and smooth over a strictly increasing subset of instants, e.g. the
/// pilots. Process noise accumulates over the skipped instants.
pub fn run_ekfs_at(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    soft: &SoftSymbolStats,
    instants: &[usize],
    cfg: &EkfsConfig,
) -> Result<EkfsTrajectory> {
    cfg.validate()?;
    check_inputs(y, h, soft)?;
    if instants.windows(2).any(|w| w[0] >= w[1]) || instants.last().is_some_and(|&k| k >= y.frame_len()) {
        return Err(dim_err("instants must be increasing and inside the frame"));
    }
    let noise = noise_per_rx(y)?;
    let model = SoftModel { h, alphas: instants.iter().map(|&k| soft.alpha_at(k)).collect() };
    let obs: Vec<_> = instants.iter().map(|&k| y.column(k)).collect();
    let q = cfg.process_noise_cov(h.num_rx(), h.num_tx());
    Ok(filter_smooth(&model, &obs, instants, &noise, &q, cfg.initial_var(), h.num_rx(), h.num_tx()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_rician_channel, ChannelConfig};
    use crate::linalg::min_eigenvalue;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_instance(rng: &mut impl Rng, nr: usize, nt: usize) -> (DVector<f64>, ChannelMatrix, DVector<Complex64>) {
        let phi = DVector::from_fn(nr + nt - 1, |_, _| rng.random_range(-3.0..3.0));
        let h = ChannelMatrix(DMatrix::from_fn(nr, nt, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }));
        let a = DVector::from_fn(nt, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (phi, h, a)
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = rng_from_seed(1);
        for (nr, nt) in [(1, 1), (2, 2), (3, 2), (2, 4)] {
            for _ in 0..50 {
                let (phi, h, a) = random_instance(&mut rng, nr, nt);
                let jac = jacobian(&phi, &h, &a);
                let step = 1e-6;
                for f in 0..phi.len() {
                    let mut up = phi.clone();
                    let mut dn = phi.clone();
                    up[f] += step;
                    dn[f] -= step;
                    let fd = (predicted_observation(&up, &h, &a) - predicted_observation(&dn, &h, &a)) / Complex64::new(2.0 * step, 0.0);
                    assert!((fd - jac.column(f)).norm() < 1e-6 * (1.0 + jac.column(f).norm()));
                }
            }
        }
    }

    #[test]
    fn jacobian_special_cases() {
        let mut rng = rng_from_seed(2);
        let (phi, h, _) = random_instance(&mut rng, 2, 1);
        let a = DVector::from_element(1, Complex64::new(0.3, -0.2));
        let jac = jacobian(&phi, &h, &a);
        assert_eq!(jac.ncols(), 2);
        let (phi, h, _) = random_instance(&mut rng, 2, 3);
        assert_eq!(jacobian(&phi, &h, &DVector::zeros(3)).norm(), 0.0);
    }

    #[test]
    fn predicted_observation_matches_full_factorization() {
        let mut rng = rng_from_seed(3);
        let (phi, h, a) = random_instance(&mut rng, 2, 2);
        // θr = (φ1, φ2), θt = (φ3, 0) reproduces the reduced state.
        let x = crate::channel::mixing_matrix(h.matrix(), &[phi[0], phi[1]], &[phi[2], 0.0]);
        assert!((predicted_observation(&phi, &h, &a) - x * &a).norm() < 1e-14);
        assert!((predicted_observation(&DVector::zeros(3), &h, &a) - h.matrix() * &a).norm() < 1e-14);
    }

    #[test]
    fn predict_recursion() {
        let cfg = EkfsConfig::new(1e-3);
        let q = cfg.process_noise_cov(2, 2);
        let (s, m) = predict(&DVector::zeros(3), &(DMatrix::identity(3, 3) * cfg.initial_var()), &q);
        assert_eq!(s, DVector::zeros(3));
        assert!((m - DMatrix::identity(3, 3) * 4e-3).norm() < 1e-18);
        let mut cov = DMatrix::zeros(3, 3);
        for _ in 0..5 {
            cov = predict(&DVector::zeros(3), &cov, &q).1;
        }
        assert!((cov - DMatrix::identity(3, 3) * 1e-2).norm() < 1e-15);
        let still = EkfsConfig::new(0.0).process_noise_cov(2, 2);
        assert_eq!(predict(&DVector::zeros(3), &DMatrix::identity(3, 3), &still).1, DMatrix::identity(3, 3));
    }

    #[test]
    fn structured_noise_matches_reduced_increment_covariance() {
        // φ_l = θr_l + θt_Nt, φ_{Nr+m} = θt_m − θt_Nt for a 2×3 system.
        let (nr, nt) = (2, 3);
        let t = DMatrix::from_fn(nr + nt - 1, nr + nt, |i, j| {
            if i < nr {
                f64::from(u8::from(j == i || j == nr + nt - 1))
            } else if j == i {
                1.0
            } else if j == nr + nt - 1 {
                -1.0
            } else {
                0.0
            }
        });
        let s = 0.7;
        let exact = &t * t.transpose() * s;
        let cfg = EkfsConfig { process_noise: ProcessNoise::Structured, ..EkfsConfig::new(s) };
        assert!((cfg.process_noise_cov(nr, nt) - exact).norm() < 1e-14);
    }

    #[test]
    fn scalar_update_matches_hand_derivation() {
        let h = ChannelMatrix(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let a = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let (p, sigma2) = (0.04, 0.1);
        let phi = DVector::zeros(1);
        let m = DMatrix::from_element(1, 1, p);
        let work = kalman_work(&m, predicted_observation(&phi, &h, &a), jacobian(&phi, &h, &a), &[sigma2]);
        // Ż = j, so K = −j p / (σ² + p).
        assert!((work.gain[(0, 0)] - Complex64::new(0.0, -p / (sigma2 + p))).norm() < 1e-15);
        let y = DVector::from_element(1, Complex64::new(1.1, 0.25));
        let (phi_plus, m_plus) = update(&phi, &m, &y, &work);
        assert!((phi_plus[0] - p * 0.25 / (sigma2 + p)).abs() < 1e-15);
        assert!((m_plus[(0, 0)] - p * sigma2 / (sigma2 + p)).abs() < 1e-15);
    }

    #[test]
    fn update_limits() {
        let mut rng = rng_from_seed(4);
        let (phi, h, a) = random_instance(&mut rng, 2, 2);
        let m = DMatrix::identity(3, 3) * 0.01;
        let z = predicted_observation(&phi, &h, &a);
        let work = kalman_work(&m, z.clone(), jacobian(&phi, &h, &a), &[0.1, 0.2]);
        let (p, _) = update(&phi, &m, &z, &work);
        assert!((p - &phi).norm() < 1e-15);
        let work = kalman_work(&m, z.clone(), jacobian(&phi, &h, &a), &[1e18, 1e18]);
        let y = z.map(|c| c + Complex64::new(0.5, 0.5));
        let (p, mp) = update(&phi, &m, &y, &work);
        assert!((p - &phi).norm() < 1e-15 && (mp - &m).norm() < 1e-15);
    }

    /// `z = j R φ` with real `R`: the filter reduces to a linear Kalman filter
    /// on `Im y` with noise variance σ² per receive antenna.
    struct LinearModel(Vec<DMatrix<f64>>);

    impl ObservationModel for LinearModel {
        fn observe(&self, idx: usize, phi: &DVector<f64>) -> (DVector<Complex64>, DMatrix<Complex64>) {
            let j = self.0[idx].map(|r| Complex64::new(0.0, r));
            (&j * phi.map(|v| Complex64::new(v, 0.0)), j)
        }
    }

    #[test]
    fn static_state_matches_batch_least_squares() {
        let mut rng = rng_from_seed(5);
        let (n, nr, len) = (3, 2, 20);
        let truth = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
        let rs: Vec<DMatrix<f64>> = (0..len).map(|_| DMatrix::from_fn(nr, n, |_, _| rng.random_range(-1.0..1.0))).collect();
        let noise = [0.05, 0.08];
        let obs: Vec<DVector<Complex64>> = rs
            .iter()
            .map(|r| {
                let clean = r * &truth;
                DVector::from_fn(nr, |l, _| Complex64::new(rng.random::<f64>(), clean[l] + 0.1 * rng.random::<f64>()))
            })
            .collect();
        let p0 = 0.3;
        let instants: Vec<usize> = (0..len).collect();
        let traj = filter_smooth(&LinearModel(rs.clone()), &obs, &instants, &noise, &DMatrix::zeros(n, n), p0, 2, 2);

        let w = DMatrix::from_diagonal(&DVector::from_vec(noise.iter().map(|v| 1.0 / v).collect()));
        let mut info = DMatrix::identity(n, n) / p0;
        let mut rhs = DVector::zeros(n);
        for (r, y) in rs.iter().zip(&obs) {
            info += r.transpose() * &w * r;
            rhs += r.transpose() * &w * y.map(|c| c.im);
        }
        let cov = info.clone().try_inverse().unwrap();
        let est = &cov * rhs;
        for k in 0..len {
            assert!((traj.smoothed_state.column(k) - &est).norm() < 1e-9, "k={k}");
            assert!((&traj.smoothed_cov[k] - &cov).norm() < 1e-9);
        }
    }

    fn random_run(seed: u64) -> EkfsTrajectory {
        let mut rng = rng_from_seed(seed);
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), seed).unwrap();
        let len = 30;
        let alpha = DMatrix::from_fn(2, len, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let obs = DMatrix::from_fn(2, len, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let soft = SoftSymbolStats { b_matrix: vec![DMatrix::zeros(2, 2); len], alpha };
        let y = ReceivedFrame { observations: obs, noise_var: vec![0.1], eb_n0_db: None };
        let cfg = EkfsConfig { process_noise: if seed % 2 == 0 { ProcessNoise::Diagonal } else { ProcessNoise::Structured }, ..EkfsConfig::new(1e-3) };
        run_ekfs(&y, &h, &soft, &cfg).unwrap()
    }

    #[test]
    fn covariances_stay_symmetric_psd_and_smoothing_reduces_variance() {
        for seed in 0..20 {
            let t = random_run(seed);
            let last = t.instants.len() - 1;
            assert_eq!(t.smoothed_state.column(last), t.posterior_state.column(last));
            for k in 0..t.instants.len() {
                for m in [&t.prior_cov[k], &t.posterior_cov[k], &t.smoothed_cov[k]] {
                    assert!((m - m.transpose()).norm() < 1e-15);
                    assert!(min_eigenvalue(m) >= -1e-9);
                }
                for i in 0..3 {
                    assert!(t.smoothed_cov[k][(i, i)] <= t.posterior_cov[k][(i, i)] + 1e-9);
                }
                if k > 0 {
                    let q = EkfsConfig::new(1e-3).process_noise_cov(2, 2);
                    let q = if seed % 2 == 0 { q } else { EkfsConfig { process_noise: ProcessNoise::Structured, ..EkfsConfig::new(1e-3) }.process_noise_cov(2, 2) };
                    assert_eq!(t.prior_cov[k], &t.posterior_cov[k - 1] + q);
                    assert_eq!(t.prior_state.column(k), t.posterior_state.column(k - 1));
                }
            }
        }
    }

    #[test]
    fn zero_soft_symbols_never_move_the_state() {
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), 1).unwrap();
        let soft = SoftSymbolStats { alpha: DMatrix::zeros(2, 10), b_matrix: vec![DMatrix::zeros(2, 2); 10] };
        let y = ReceivedFrame { observations: DMatrix::from_element(2, 10, Complex64::new(0.3, -0.1)), noise_var: vec![0.1], eb_n0_db: None };
        let t = run_ekfs(&y, &h, &soft, &EkfsConfig::new(1e-4)).unwrap();
        assert_eq!(t.smoothed_state.norm(), 0.0);
    }

    #[test]
    fn csv_dump_has_one_row_per_instant() {
        let t = random_run(3);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 31);
        assert!(text.starts_with("k,prior_0"));
    }
}
