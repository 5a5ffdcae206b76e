//! Cross-check of the smoother against the grid-search MAP estimator on
//! short known-symbol frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bicm::Constellation;
use crate::channel::{apply_channel, generate_phn, generate_rician_channel, ChannelConfig, PhnConfig};
use crate::detector::SoftSymbolStats;
use crate::ekfs::{run_ekfs, EkfsConfig};
use crate::em::{map_oracle, MapOracleConfig, PhasePrior};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementConfig {
    pub num_tx: usize,
    pub num_rx: usize,
    pub frame_len: usize,
    pub modulation_order: usize,
    /// `E_b = E_s / (R log₂M)` per transmit antenna.
    pub ebn0_db: f64,
    pub code_rate: f64,
    pub phn_var: f64,
    pub tolerance: f64,
    pub oracle: MapOracleConfig,
    pub trials: usize,
    pub seed: u64,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        Self {
            num_tx: 2,
            num_rx: 2,
            frame_len: 8,
            modulation_order: 16,
            ebn0_db: 25.0,
            code_rate: 7.0 / 8.0,
            phn_var: 5e-5,
            tolerance: 0.05,
            oracle: MapOracleConfig::default(),
            trials: 100,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub trials: usize,
    /// Trials whose every component stayed within tolerance.
    pub agreeing: usize,
    /// Largest componentwise wrapped difference per trial, rad.
    pub max_deviation: Vec<f64>,
}

impl AgreementReport {
    pub fn fraction(&self) -> f64 {
        self.agreeing as f64 / self.trials.max(1) as f64
    }
}

fn wrapped(d: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (d + pi).rem_euclid(2.0 * pi) - pi
}

pub fn map_ekfs_agreement(cfg: &AgreementConfig) -> Result<AgreementReport> {
    let cst = Constellation::square_qam(cfg.modulation_order)?;
    let noise_var = 1.0 / (cfg.code_rate * cst.bits_per_symbol() as f64 * 10f64.powf(cfg.ebn0_db / 10.0));
    let ekfs = EkfsConfig::new(cfg.phn_var);
    let prior = PhasePrior::matching(&ekfs);
    let mut max_deviation = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let seed = |s: u64| derive_seed(cfg.seed, &[t as u64, s]);
        let mut rng = rng_from_seed(seed(stream::INFO_BITS));
        let symbols = nalgebra::DMatrix::from_fn(cfg.num_tx, cfg.frame_len, |_, _| {
            cst.point(rng.random_range(0..cst.order()))
        });
        let h = generate_rician_channel(&ChannelConfig::rician(cfg.num_tx, cfg.num_rx, 2.0), seed(stream::CHANNEL))?;
        let phn = generate_phn(
            &PhnConfig { innovation_var: cfg.phn_var, frame_len: cfg.frame_len },
            cfg.num_tx,
            cfg.num_rx,
            seed(stream::PHASE_NOISE),
        )?;
        let y = apply_channel(&symbols, &h, &phn, &[noise_var], seed(stream::AWGN))?;
        let traj = run_ekfs(&y, &h, &SoftSymbolStats::from_known(&symbols), &ekfs)?;
        let map = map_oracle(&y, &h, &symbols, &cfg.oracle, &prior)?;
        let dev = traj
            .smoothed_state
            .iter()
            .zip(map.phi.iter())
            .map(|(a, b)| wrapped(a - b).abs())
            .fold(0.0, f64::max);
        max_deviation.push(dev);
    }
    let agreeing = max_deviation.iter().filter(|&&d| d <= cfg.tolerance).count();
    Ok(AgreementReport { trials: cfg.trials, agreeing, max_deviation })
}
