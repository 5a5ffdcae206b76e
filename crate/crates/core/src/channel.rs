//! Channel realisations, oscillator phase noise and the received-signal model.
//!
//! Observations follow `y(k) = Γr(k) H Γt(k) s(k) + w(k)` where `Γr`, `Γt`
//! are diagonal phase rotations driven by independent Wiener processes, one
//! per antenna. Only `N_r + N_t − 1` phase combinations are identifiable; the
//! last transmit oscillator is taken as the reference (see [`reduce_ambiguity`]).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err};
use crate::rng::{rng_from_seed, SimRng};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub num_tx: usize,
    pub num_rx: usize,
    /// LoS-to-NLoS power ratio in dB; `-inf` gives Rayleigh fading.
    pub rician_factor_db: f64,
    /// Extra deterministic offset added to every entry.
    pub channel_mean: Complex64,
    /// Total per-entry power of the fading part.
    pub channel_var: f64,
}

impl ChannelConfig {
    pub fn rician(num_tx: usize, num_rx: usize, rician_factor_db: f64) -> Self {
        Self {
            num_tx,
            num_rx,
            rician_factor_db,
            channel_mean: Complex64::new(0.0, 0.0),
            channel_var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tx == 0 || self.num_rx == 0 {
            return Err(config_err("antenna counts must be at least 1"));
        }
        if !(self.channel_var > 0.0) || !self.channel_var.is_finite() {
            return Err(config_err("channel_var must be positive and finite"));
        }
        if self.rician_factor_db.is_nan() || self.rician_factor_db == f64::INFINITY {
            return Err(config_err("rician_factor_db must be finite or -inf"));
        }
        Ok(())
    }

    /// Returns `(los_power, nlos_power)` per entry.
    pub fn power_split(&self) -> (f64, f64) {
        let k = 10f64.powf(self.rician_factor_db / 10.0);
        let los = self.channel_var * k / (1.0 + k);
        (los, self.channel_var - los)
    }
}

/// The `N_r × N_t` complex gain matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix(pub DMatrix<Complex64>);

impl ChannelMatrix {
    pub fn num_rx(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_tx(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhnConfig {
    /// Innovation variance of every oscillator, rad².
    pub innovation_var: f64,
    pub frame_len: usize,
}

impl PhnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.innovation_var >= 0.0) || !self.innovation_var.is_finite() {
            return Err(config_err("innovation_var must be finite and non-negative"));
        }
        if self.frame_len == 0 {
            return Err(config_err("frame_len must be at least 1"));
        }
        Ok(())
    }
}

/// Per-antenna phase sample paths over one frame (columns are time instants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhnTrajectories {
    pub rx_phase: DMatrix<f64>,
    pub tx_phase: DMatrix<f64>,
    pub rx_innovations: DMatrix<f64>,
    pub tx_innovations: DMatrix<f64>,
}

impl PhnTrajectories {
    /// All-zero trajectories.
    pub fn zeros(num_tx: usize, num_rx: usize, frame_len: usize) -> Self {
        Self {
            rx_phase: DMatrix::zeros(num_rx, frame_len),
            tx_phase: DMatrix::zeros(num_tx, frame_len),
            rx_innovations: DMatrix::zeros(num_rx, frame_len),
            tx_innovations: DMatrix::zeros(num_tx, frame_len),
        }
    }

    /// Builds trajectories by integrating the given innovations from zero phase.
    pub fn from_innovations(rx_innovations: DMatrix<f64>, tx_innovations: DMatrix<f64>) -> Self {
        let integrate = |innov: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(innov.nrows(), innov.ncols());
            for i in 0..innov.nrows() {
                let mut acc = 0.0;
                for k in 0..innov.ncols() {
                    acc += innov[(i, k)];
                    out[(i, k)] = acc;
                }
            }
            out
        };
        Self {
            rx_phase: integrate(&rx_innovations),
            tx_phase: integrate(&tx_innovations),
            rx_innovations,
            tx_innovations,
        }
    }

    pub fn num_rx(&self) -> usize {
        self.rx_phase.nrows()
    }

    pub fn num_tx(&self) -> usize {
        self.tx_phase.nrows()
    }

    pub fn frame_len(&self) -> usize {
        self.rx_phase.ncols()
    }
}

/// Identifiable phase combinations, `(N_r + N_t − 1) × L_f`.
///
/// Rows `0..N_r` are receive phase plus reference transmit phase; rows
/// `N_r..` are the remaining transmit phases minus the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedPhnTrajectory {
    pub phi: DMatrix<f64>,
    pub num_rx: usize,
    pub num_tx: usize,
    /// Per-component variance of the reduced innovation (`2σ²_Δ`).
    pub reduced_innovation_var: f64,
}

impl ReducedPhnTrajectory {
    pub fn zeros(num_tx: usize, num_rx: usize, frame_len: usize) -> Self {
        Self {
            phi: DMatrix::zeros(num_rx + num_tx - 1, frame_len),
            num_rx,
            num_tx,
            reduced_innovation_var: 0.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn frame_len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.phi.column(k).into_owned()
    }
}

/// Draws one Rician channel: all-ones LoS matrix plus CN NLoS part.
pub fn generate_rician_channel(cfg: &ChannelConfig, seed: u64) -> Result<ChannelMatrix> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let (los, nlos) = cfg.power_split();
    let los_amp = los.sqrt();
    let h = DMatrix::from_fn(cfg.num_rx, cfg.num_tx, |_, _| {
        cfg.channel_mean + Complex64::new(los_amp, 0.0) + complex_gaussian(&mut rng, nlos)
    });
    Ok(ChannelMatrix(h))
}

/// Independent Wiener walks for every receive and transmit oscillator.
pub fn generate_phn(cfg: &PhnConfig, num_tx: usize, num_rx: usize, seed: u64) -> Result<PhnTrajectories> {
    cfg.validate()?;
    if num_tx == 0 || num_rx == 0 {
        return Err(config_err("antenna counts must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let sd = cfg.innovation_var.sqrt();
    let mut draw = |rows: usize| {
        DMatrix::from_fn(rows, cfg.frame_len, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
    };
    let rx = draw(num_rx);
    let tx = draw(num_tx);
    Ok(PhnTrajectories::from_innovations(rx, tx))
}

/// Maps per-oscillator phases onto the identifiable reduced state.
pub fn reduce_ambiguity(phn: &PhnTrajectories) -> ReducedPhnTrajectory {
    let (nr, nt, lf) = (phn.num_rx(), phn.num_tx(), phn.frame_len());
    let mut phi = DMatrix::zeros(nr + nt - 1, lf);
    for k in 0..lf {
        let reference = phn.tx_phase[(nt - 1, k)];
        for f in 0..nr {
            phi[(f, k)] = phn.rx_phase[(f, k)] + reference;
        }
        for m in 0..nt - 1 {
            phi[(nr + m, k)] = phn.tx_phase[(m, k)] - reference;
        }
    }
    let var = if phn.rx_innovations.is_empty() && phn.tx_innovations.is_empty() {
        0.0
    } else {
        let all: Vec<f64> = phn.rx_innovations.iter().chain(phn.tx_innovations.iter()).copied().collect();
        2.0 * all.iter().map(|d| d * d).sum::<f64>() / all.len() as f64
    };
    ReducedPhnTrajectory { phi, num_rx: nr, num_tx: nt, reduced_innovation_var: var }
}

/// `X = Γr H Γt` from per-oscillator phases at one instant.
pub fn mixing_matrix(h: &DMatrix<Complex64>, rx_phase: &[f64], tx_phase: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(h.nrows(), h.ncols(), |l, m| h[(l, m)] * Complex64::cis(rx_phase[l] + tx_phase[m]))
}

/// `X = Γ̃r H Γ̃t` from a reduced phase vector at one instant.
pub fn reduced_mixing_matrix(h: &DMatrix<Complex64>, phi: &[f64]) -> DMatrix<Complex64> {
    let nr = h.nrows();
    let nt = h.ncols();
    DMatrix::from_fn(nr, nt, |l, m| {
        let tx = if m + 1 < nt { phi[nr + m] } else { 0.0 };
        h[(l, m)] * Complex64::cis(phi[l] + tx)
    })
}

/// Noisy observations of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedFrame {
    pub observations: DMatrix<Complex64>,
    /// Complex noise variance per receive antenna.
    pub noise_var: Vec<f64>,
    pub eb_n0_db: Option<f64>,
}

impl ReceivedFrame {
    pub fn frame_len(&self) -> usize {
        self.observations.ncols()
    }

    pub fn num_rx(&self) -> usize {
        self.observations.nrows()
    }

    pub fn column(&self, k: usize) -> DVector<Complex64> {
        self.observations.column(k).into_owned()
    }
}

/// Broadcasts a scalar noise variance to every receive antenna.
pub fn uniform_noise(noise_var: f64, num_rx: usize) -> Vec<f64> {
    vec![noise_var; num_rx]
}

/// Passes `symbols` (`N_t × L_f`) through phase noise, channel and AWGN.
///
/// `noise_var` holds one complex variance per receive antenna, or a single
/// value applied to all of them.
pub fn apply_channel(
    symbols: &DMatrix<Complex64>,
    h: &ChannelMatrix,
    phn: &PhnTrajectories,
    noise_var: &[f64],
    seed: u64,
) -> Result<ReceivedFrame> {
    let (nr, nt) = (h.num_rx(), h.num_tx());
    let lf = symbols.ncols();
    if symbols.nrows() != nt {
        return Err(dim_err(format!("symbols have {} rows, channel has {} tx antennas", symbols.nrows(), nt)));
    }
    if phn.num_rx() != nr || phn.num_tx() != nt || phn.frame_len() != lf {
        return Err(dim_err("phase-noise trajectories do not match channel/frame dimensions"));
    }
    let noise = match noise_var.len() {
        1 => vec![noise_var[0]; nr],
        n if n == nr => noise_var.to_vec(),
        n => return Err(dim_err(format!("{n} noise variances for {nr} receive antennas"))),
    };
    if noise.iter().any(|v| !(*v >= 0.0)) {
        return Err(config_err("noise variance must be non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let mut y = DMatrix::zeros(nr, lf);
    let mut rx = vec![0.0; nr];
    let mut tx = vec![0.0; nt];
    for k in 0..lf {
        rx.iter_mut().enumerate().for_each(|(i, v)| *v = phn.rx_phase[(i, k)]);
        tx.iter_mut().enumerate().for_each(|(i, v)| *v = phn.tx_phase[(i, k)]);
        let x = mixing_matrix(h.matrix(), &rx, &tx);
        let clean = x * symbols.column(k);
        for l in 0..nr {
            y[(l, k)] = clean[l] + complex_gaussian(&mut rng, noise[l]);
        }
    }
    Ok(ReceivedFrame { observations: y, noise_var: noise, eb_n0_db: None })
}

/// One circular complex Gaussian draw with total variance `var`.
pub(crate) fn complex_gaussian(rng: &mut SimRng, var: f64) -> Complex64 {
    if var == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg2x2() -> ChannelConfig {
        ChannelConfig::rician(2, 2, 2.0)
    }

    #[test]
    fn rician_power_split_at_2db() {
        let (los, nlos) = cfg2x2().power_split();
        let k = 10f64.powf(0.2);
        assert!((los - k / (1.0 + k)).abs() < 1e-15);
        assert!((los - 0.613).abs() < 1e-3);
        assert!((nlos - 0.387).abs() < 1e-3);
    }

    #[test]
    fn rayleigh_limit_has_unit_power() {
        let cfg = ChannelConfig::rician(1, 1, f64::NEG_INFINITY);
        let draws = 100_000;
        let mut rng = rng_from_seed(11);
        let mean: f64 = (0..draws)
            .map(|_| {
                let h = generate_rician_channel(&cfg, rng.random()).unwrap();
                h.0[(0, 0)].norm_sqr()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn rician_entries_have_configured_mean_and_variance() {
        let cfg = cfg2x2();
        let (los, nlos) = cfg.power_split();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut var = 0.0;
        let n = 20_000;
        for s in 0..n {
            let h = generate_rician_channel(&cfg, s).unwrap();
            let e = h.0[(1, 0)];
            sum += e;
            var += (e - Complex64::new(los.sqrt(), 0.0)).norm_sqr();
        }
        assert!((sum / n as f64 - Complex64::new(los.sqrt(), 0.0)).norm() < 0.02);
        assert!((var / n as f64 - nlos).abs() < 0.02);
    }

    #[test]
    fn channel_is_deterministic_and_validated() {
        let a = generate_rician_channel(&cfg2x2(), 5).unwrap();
        let b = generate_rician_channel(&cfg2x2(), 5).unwrap();
        assert_eq!(a, b);
        assert!(generate_rician_channel(&ChannelConfig::rician(0, 2, 2.0), 1).is_err());
        let mut bad = cfg2x2();
        bad.channel_var = 0.0;
        assert!(generate_rician_channel(&bad, 1).is_err());
    }

    #[test]
    fn zero_innovation_gives_zero_phase() {
        let phn = generate_phn(&PhnConfig { innovation_var: 0.0, frame_len: 50 }, 2, 3, 1).unwrap();
        assert!(phn.rx_phase.iter().chain(phn.tx_phase.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn wiener_endpoint_variance_law() {
        let cfg = PhnConfig { innovation_var: 5e-5, frame_len: 10_000 };
        let trials = 1000;
        let ends: Vec<f64> = (0..trials)
            .map(|t| generate_phn(&cfg, 1, 1, 1000 + t).unwrap().rx_phase[(0, cfg.frame_len - 1)])
            .collect();
        let mean = ends.iter().sum::<f64>() / trials as f64;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        assert!((var - 0.5).abs() < 0.05, "endpoint variance {var}");
    }

    #[test]
    fn wiener_innovation_variance_within_three_standard_errors() {
        let s2 = 2.5e-4;
        let phn = generate_phn(&PhnConfig { innovation_var: s2, frame_len: 20_000 }, 1, 1, 3).unwrap();
        let d: Vec<f64> = phn.rx_innovations.iter().copied().collect();
        let n = d.len() as f64;
        let est = d.iter().map(|x| x * x).sum::<f64>() / n;
        // Var of the sample second moment of a Gaussian is 2σ⁴/n.
        let se = (2.0 * s2 * s2 / n).sqrt();
        assert!((est - s2).abs() < 3.0 * se, "est {est}, se {se}");
    }

    #[test]
    fn reduced_state_example() {
        let mut phn = PhnTrajectories::zeros(2, 2, 1);
        phn.rx_phase[(0, 0)] = 0.1;
        phn.rx_phase[(1, 0)] = 0.2;
        phn.tx_phase[(0, 0)] = 0.3;
        phn.tx_phase[(1, 0)] = 0.4;
        let r = reduce_ambiguity(&phn);
        let expect = [0.5, 0.6, -0.1];
        for (f, e) in expect.iter().enumerate() {
            assert!((r.phi[(f, 0)] - e).abs() < 1e-15);
        }
        let zero = reduce_ambiguity(&PhnTrajectories::zeros(2, 2, 4));
        assert!(zero.phi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noiseless_without_phase_noise_is_h_times_s() {
        let h = generate_rician_channel(&cfg2x2(), 3).unwrap();
        let s = DMatrix::from_fn(2, 5, |i, k| Complex64::new(i as f64 - 0.5, k as f64 * 0.1));
        let y = apply_channel(&s, &h, &PhnTrajectories::zeros(2, 2, 5), &[0.0], 9).unwrap();
        assert_eq!(y.observations, h.matrix() * &s);
    }

    #[test]
    fn phase_rotation_by_pi() {
        let h = ChannelMatrix(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let mut phn = PhnTrajectories::zeros(1, 1, 1);
        phn.rx_phase[(0, 0)] = 1.0;
        phn.tx_phase[(0, 0)] = std::f64::consts::PI - 1.0;
        let s = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let y = apply_channel(&s, &h, &phn, &[0.0], 0).unwrap();
        assert!((y.observations[(0, 0)] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn apply_channel_rejects_mismatched_dimensions() {
        let h = generate_rician_channel(&cfg2x2(), 3).unwrap();
        let s = DMatrix::from_element(3, 4, Complex64::new(1.0, 0.0));
        assert!(apply_channel(&s, &h, &PhnTrajectories::zeros(2, 2, 4), &[0.1], 0).is_err());
        let s = DMatrix::from_element(2, 4, Complex64::new(1.0, 0.0));
        assert!(apply_channel(&s, &h, &PhnTrajectories::zeros(2, 2, 3), &[0.1], 0).is_err());
        assert!(apply_channel(&s, &h, &PhnTrajectories::zeros(2, 2, 4), &[0.1, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn measured_noise_variance_matches() {
        let h = ChannelMatrix(DMatrix::from_element(1, 1, Complex64::new(0.0, 0.0)));
        let s = DMatrix::from_element(1, 20_000, Complex64::new(1.0, 0.0));
        let y = apply_channel(&s, &h, &PhnTrajectories::zeros(1, 1, 20_000), &[0.3], 4).unwrap();
        let p = y.observations.iter().map(|v| v.norm_sqr()).sum::<f64>() / 20_000.0;
        assert!((p - 0.3).abs() / 0.3 < 0.03);
    }

    fn random_phn(nt: usize, nr: usize, lf: usize, seed: u64) -> PhnTrajectories {
        generate_phn(&PhnConfig { innovation_var: 0.3, frame_len: lf }, nt, nr, seed).unwrap()
    }

    proptest! {
        #[test]
        fn reduced_and_full_factorisations_agree(nt in 1usize..4, nr in 1usize..4, seed in 0u64..1000) {
            let h = generate_rician_channel(&ChannelConfig::rician(nt, nr, 2.0), seed).unwrap();
            let phn = random_phn(nt, nr, 6, seed + 1);
            let red = reduce_ambiguity(&phn);
            for k in 0..6 {
                let rx: Vec<f64> = phn.rx_phase.column(k).iter().copied().collect();
                let tx: Vec<f64> = phn.tx_phase.column(k).iter().copied().collect();
                let phi: Vec<f64> = red.phi.column(k).iter().copied().collect();
                let full = mixing_matrix(h.matrix(), &rx, &tx);
                let reduced = reduced_mixing_matrix(h.matrix(), &phi);
                prop_assert!((full - reduced).norm() < 1e-12);
            }
        }

        #[test]
        fn ambiguity_shift_leaves_observations_unchanged(c in -3.0f64..3.0, seed in 0u64..1000) {
            let h = generate_rician_channel(&cfg2x2(), seed).unwrap();
            let phn = random_phn(2, 2, 5, seed);
            let mut shifted = phn.clone();
            shifted.tx_phase.iter_mut().for_each(|v| *v += c);
            shifted.rx_phase.iter_mut().for_each(|v| *v -= c);
            let s = DMatrix::from_fn(2, 5, |i, k| Complex64::cis((i + 2 * k) as f64));
            let a = apply_channel(&s, &h, &phn, &[0.0], 1).unwrap();
            let b = apply_channel(&s, &h, &shifted, &[0.0], 1).unwrap();
            prop_assert!((a.observations - b.observations).norm() < 1e-12);
            let ra = reduce_ambiguity(&phn);
            let rb = reduce_ambiguity(&shifted);
            prop_assert!((ra.phi - rb.phi).norm() < 1e-12);
        }

        #[test]
        fn energy_is_preserved_by_receive_rotation(seed in 0u64..1000) {
            let h = generate_rician_channel(&cfg2x2(), seed).unwrap();
            let phn = random_phn(2, 2, 4, seed);
            let s = DMatrix::from_fn(2, 4, |i, k| Complex64::new(i as f64 + 0.5, -(k as f64)));
            for k in 0..4 {
                let rx: Vec<f64> = phn.rx_phase.column(k).iter().copied().collect();
                let tx: Vec<f64> = phn.tx_phase.column(k).iter().copied().collect();
                let x = mixing_matrix(h.matrix(), &rx, &tx);
                let lhs = (x * s.column(k)).norm();
                let gt = DMatrix::from_diagonal(&DVector::from_iterator(2, tx.iter().map(|t| Complex64::cis(*t))));
                let rhs = (h.matrix() * gt * s.column(k)).norm();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn wiener_recursion_holds_exactly(seed in 0u64..1000) {
            let phn = random_phn(2, 3, 20, seed);
            for (phase, innov) in [(&phn.rx_phase, &phn.rx_innovations), (&phn.tx_phase, &phn.tx_innovations)] {
                for i in 0..phase.nrows() {
                    prop_assert_eq!(phase[(i, 0)], innov[(i, 0)]);
                    for k in 1..20 {
                        prop_assert!((phase[(i, k)] - phase[(i, k - 1)] - innov[(i, k)]).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
