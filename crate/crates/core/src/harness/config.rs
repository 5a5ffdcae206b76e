use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bicm::{Constellation, FrameLayout, Interleaver, PilotBook};
use crate::channel::ChannelConfig;
use crate::detector::{DetectorConfig, FrameContext};
use crate::ekfs::{EkfsConfig, ProcessNoise};
use crate::em::EmConfig;
use crate::error::config_err;
use crate::ldpc::LdpcCode;
use crate::Result;

/// Receiver and channel combination under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// EM receiver: detector and smoother alternate.
    ProposedEm,
    /// Phase noise present, receiver assumes none.
    NoTracking,
    /// Pilot-only phase estimate, one detector pass.
    Disjoint,
    /// Channel without phase noise and a receiver that knows it; it gets the
    /// same number of detector passes as the EM receiver.
    NoPhn,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ProposedEm => "proposed_em",
            Self::NoTracking => "no_tracking",
            Self::Disjoint => "disjoint",
            Self::NoPhn => "no_phn",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed_em" => Ok(Self::ProposedEm),
            "no_tracking" => Ok(Self::NoTracking),
            "disjoint" => Ok(Self::Disjoint),
            "no_phn" => Ok(Self::NoPhn),
            other => Err(config_err(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeConfig {
    Regular { block_len: usize, var_deg: usize, check_deg: usize, seed: u64 },
    Alist { path: PathBuf },
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self::Regular { block_len: 1024, var_deg: 4, check_deg: 32, seed: 1 }
    }
}

impl CodeConfig {
    pub fn build(&self) -> Result<LdpcCode> {
        match self {
            Self::Regular { block_len, var_deg, check_deg, seed } => {
                LdpcCode::regular(*block_len, *var_deg, *check_deg, *seed)
            }
            Self::Alist { path } => LdpcCode::from_alist(&std::fs::read_to_string(path)?),
        }
    }
}

/// Everything needed to reproduce one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenarios: Vec<Scenario>,
    pub ebn0_grid_db: Vec<f64>,
    /// Per-oscillator innovation variance σ²_Δ, rad².
    pub phn_var: f64,
    pub em_iters: usize,
    pub pilot_spacing: usize,
    pub detector: DetectorConfig,
    pub process_noise: ProcessNoise,
    pub code: CodeConfig,
    pub interleaver_seed: u64,
    pub modulation_order: usize,
    pub num_tx: usize,
    pub num_rx: usize,
    pub rician_factor_db: f64,
    pub frames_per_point: usize,
    /// Keep simulating past `frames_per_point` until this many frame
    /// errors; 0 disables.
    pub min_errors: usize,
    /// Hard cap per point.
    pub max_frames: usize,
    /// Frames launched per parallel batch; fixed so results do not depend
    /// on the thread count.
    pub batch_size: usize,
    pub base_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::ProposedEm],
            ebn0_grid_db: vec![20.0],
            phn_var: 5e-5,
            em_iters: 3,
            pilot_spacing: 14,
            detector: DetectorConfig::default(),
            process_noise: ProcessNoise::Diagonal,
            code: CodeConfig::default(),
            interleaver_seed: 2,
            modulation_order: 16,
            num_tx: 2,
            num_rx: 2,
            rician_factor_db: 2.0,
            frames_per_point: 500,
            min_errors: 0,
            max_frames: 500,
            batch_size: 32,
            base_seed: 2024,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.ebn0_grid_db.is_empty() {
            return Err(config_err("scenarios and ebn0_grid_db must be nonempty"));
        }
        if self.frames_per_point == 0 || self.batch_size == 0 || self.em_iters == 0 || self.pilot_spacing == 0 {
            return Err(config_err("frames_per_point, batch_size, em_iters and pilot_spacing must be positive"));
        }
        if self.max_frames < self.frames_per_point {
            return Err(config_err("max_frames must be at least frames_per_point"));
        }
        if !(self.phn_var >= 0.0) || !self.phn_var.is_finite() {
            return Err(config_err("phn_var must be finite and non-negative"));
        }
        if self.ebn0_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(config_err("ebn0 grid values must be finite"));
        }
        self.detector.validate()?;
        self.channel().validate()
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig::rician(self.num_tx, self.num_rx, self.rician_factor_db)
    }

    pub fn ekfs(&self) -> EkfsConfig {
        EkfsConfig { innovation_var: self.phn_var, process_noise: self.process_noise, initial_var: None }
    }

    pub fn em(&self) -> EmConfig {
        EmConfig { em_iters: self.em_iters, detector: self.detector, ekfs: self.ekfs() }
    }

    /// Builds the code, interleaver, constellation and frame layout.
    pub fn build_link(&self) -> Result<Link> {
        let code = self.code.build()?;
        let constellation = Constellation::square_qam(self.modulation_order)?;
        let interleaver = Interleaver::random(code.block_len(), self.interleaver_seed);
        let pilots = PilotBook::dft(self.num_tx);
        let layout = FrameLayout::for_codeword(
            code.block_len(),
            self.num_tx,
            constellation.bits_per_symbol(),
            self.pilot_spacing,
            &pilots,
        )?;
        Ok(Link { code, interleaver, constellation, layout, pilots })
    }
}

/// Fixed transmitter/receiver structures shared by every frame of a run.
#[derive(Debug, Clone)]
pub struct Link {
    pub code: LdpcCode,
    pub interleaver: Interleaver,
    pub constellation: Constellation,
    pub layout: FrameLayout,
    pub pilots: PilotBook,
}

impl Link {
    pub fn context(&self) -> FrameContext<'_> {
        FrameContext {
            code: &self.code,
            interleaver: &self.interleaver,
            constellation: &self.constellation,
            layout: &self.layout,
        }
    }

    /// Complex noise variance for a given `E_b/N_0`. All transmitted energy,
    /// pilots and filler included, is charged to the information bits.
    pub fn noise_var(&self, ebn0_db: f64) -> f64 {
        let energy = (self.layout.num_tx * self.layout.frame_len) as f64 * self.constellation.average_energy();
        energy / (self.code.info_len() as f64 * 10f64.powf(ebn0_db / 10.0))
    }
}
