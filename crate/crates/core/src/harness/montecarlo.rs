use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Link, Scenario, ScenarioConfig};
use crate::bicm::build_frame;
use crate::channel::{apply_channel, generate_phn, generate_rician_channel, PhnConfig, ReducedPhnTrajectory};
use crate::detector::run_detector;
use crate::em::{disjoint_receiver, run_em};
use crate::ldpc::BitBeliefs;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::Result;

/// Error counts over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub bits_counted: u64,
    pub frames_counted: u64,
    pub ber: f64,
    pub fer: f64,
    /// Half-width of a normal 95% interval on the BER, from the spread of
    /// per-frame error rates (bits within a frame are not independent).
    pub ci95_ber: f64,
}

impl ErrorStats {
    pub fn from_frames(frame_bit_errors: &[u32], bits_per_frame: usize) -> Self {
        let frames = frame_bit_errors.len() as u64;
        let bits_counted = frames * bits_per_frame as u64;
        let bit_errors: u64 = frame_bit_errors.iter().map(|&e| u64::from(e)).sum();
        let frame_errors = frame_bit_errors.iter().filter(|&&e| e > 0).count() as u64;
        let ber = if bits_counted > 0 { bit_errors as f64 / bits_counted as f64 } else { 0.0 };
        let fer = if frames > 0 { frame_errors as f64 / frames as f64 } else { 0.0 };
        let ci95_ber = if frames > 1 {
            let rates: Vec<f64> = frame_bit_errors.iter().map(|&e| f64::from(e) / bits_per_frame as f64).collect();
            let var = rates.iter().map(|r| (r - ber).powi(2)).sum::<f64>() / (frames - 1) as f64;
            1.96 * (var / frames as f64).sqrt()
        } else {
            0.0
        };
        Self { bit_errors, frame_errors, bits_counted, frames_counted: frames, ber, fer, ci95_ber }
    }
}

/// Results of one (scenario, E_b/N_0) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub scenario: Scenario,
    pub ebn0_db: f64,
    pub phn_var: f64,
    pub noise_var: f64,
    /// Grid index, part of every frame's seed path.
    pub point_index: usize,
    pub seed: u64,
    /// One entry per receiver iteration; the last is the receiver output.
    pub per_iter: Vec<ErrorStats>,
    /// `frame_bit_errors[i][f]`: errors of iteration `i` on frame `f`.
    pub frame_bit_errors: Vec<Vec<u32>>,
}

impl PointResult {
    pub fn final_stats(&self) -> &ErrorStats {
        self.per_iter.last().expect("at least one iteration")
    }

    pub fn final_frame_errors(&self) -> &[u32] {
        self.frame_bit_errors.last().expect("at least one iteration")
    }
}

fn count_errors(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

/// Runs the detector `passes` times at a fixed phase estimate, warm-starting
/// each pass from the previous one. Returns hard bits after every pass.
fn fixed_phase_passes(
    y: &crate::channel::ReceivedFrame,
    h: &crate::channel::ChannelMatrix,
    phi: &ReducedPhnTrajectory,
    link: &Link,
    cfg: &ScenarioConfig,
    passes: usize,
) -> Result<Vec<Vec<u8>>> {
    let ctx = link.context();
    let mut warm: Option<BitBeliefs> = None;
    let mut out = Vec::with_capacity(passes);
    for _ in 0..passes {
        let det = run_detector(y, h, phi, &ctx, &cfg.detector, warm.as_ref())?;
        out.push(det.hard_bits);
        warm = Some(det.next_priors);
    }
    Ok(out)
}

/// Simulates frame `frame` of grid point `point`; returns errors per
/// receiver iteration. Seeds depend only on (base seed, point, frame), so
/// every scenario sees the same bits, channel, phase noise and noise.
pub fn simulate_frame(
    cfg: &ScenarioConfig,
    link: &Link,
    scenario: Scenario,
    point: usize,
    ebn0_db: f64,
    frame: usize,
) -> Result<Vec<u32>> {
    let seed = |s: u64| derive_seed(cfg.base_seed, &[point as u64, frame as u64, s]);
    let mut rng = rng_from_seed(seed(stream::INFO_BITS));
    let info: Vec<u8> = (0..link.code.info_len()).map(|_| rng.random_range(0..2u8)).collect();
    let tx = build_frame(
        &info,
        &link.code,
        &link.interleaver,
        &link.constellation,
        cfg.num_tx,
        cfg.pilot_spacing,
        &link.pilots,
        seed(stream::PADDING),
    )?;
    let h = generate_rician_channel(&cfg.channel(), seed(stream::CHANNEL))?;
    let phn_var = if scenario == Scenario::NoPhn { 0.0 } else { cfg.phn_var };
    let phn = generate_phn(
        &PhnConfig { innovation_var: phn_var, frame_len: link.layout.frame_len },
        cfg.num_tx,
        cfg.num_rx,
        seed(stream::PHASE_NOISE),
    )?;
    let mut y = apply_channel(&tx.symbols, &h, &phn, &[link.noise_var(ebn0_db)], seed(stream::AWGN))?;
    y.eb_n0_db = Some(ebn0_db);

    let ctx = link.context();
    let zero = ReducedPhnTrajectory::zeros(cfg.num_tx, cfg.num_rx, link.layout.frame_len);
    let decisions: Vec<Vec<u8>> = match scenario {
        Scenario::ProposedEm => {
            run_em(&y, &h, &ctx, &cfg.em(), None)?.history.into_iter().map(|s| s.hard_bits).collect()
        }
        Scenario::Disjoint => vec![disjoint_receiver(&y, &h, &ctx, &cfg.detector, &cfg.ekfs())?],
        Scenario::NoTracking => fixed_phase_passes(&y, &h, &zero, link, cfg, 1)?,
        Scenario::NoPhn => fixed_phase_passes(&y, &h, &zero, link, cfg, cfg.em_iters)?,
    };
    Ok(decisions.iter().map(|d| count_errors(d, &info)).collect())
}

/// Simulates one grid point until the stop rule fires: at least
/// `frames_per_point` frames and, when `min_errors > 0`, that many frame
/// errors, never exceeding `max_frames`.
pub fn run_point(cfg: &ScenarioConfig, link: &Link, scenario: Scenario, point: usize) -> Result<PointResult> {
    let ebn0_db = cfg.ebn0_grid_db[point];
    let mut per_frame: Vec<Vec<u32>> = Vec::new();
    let mut frame_errors = 0usize;
    loop {
        let done = per_frame.len();
        let enough_errors = cfg.min_errors == 0 || frame_errors >= cfg.min_errors;
        if done >= cfg.max_frames || (done >= cfg.frames_per_point && enough_errors) {
            break;
        }
        let limit = if done < cfg.frames_per_point { cfg.frames_per_point } else { cfg.max_frames };
        let batch = cfg.batch_size.min(limit - done);
        let results: Vec<Result<Vec<u32>>> = (done..done + batch)
            .into_par_iter()
            .map(|f| simulate_frame(cfg, link, scenario, point, ebn0_db, f))
            .collect();
        for r in results {
            let errs = r?;
            frame_errors += usize::from(errs.last().is_some_and(|&e| e > 0));
            per_frame.push(errs);
        }
    }
    let iters = per_frame.first().map_or(0, |v| v.len());
    let frame_bit_errors: Vec<Vec<u32>> = (0..iters).map(|i| per_frame.iter().map(|f| f[i]).collect()).collect();
    let per_iter = frame_bit_errors.iter().map(|e| ErrorStats::from_frames(e, link.code.info_len())).collect();
    Ok(PointResult {
        scenario,
        ebn0_db,
        phn_var: if scenario == Scenario::NoPhn { 0.0 } else { cfg.phn_var },
        noise_var: link.noise_var(ebn0_db),
        point_index: point,
        seed: cfg.base_seed,
        per_iter,
        frame_bit_errors,
    })
}

/// Runs every configured scenario over the E_b/N_0 grid. `on_point` sees
/// each point as soon as it completes.
pub fn run_monte_carlo(cfg: &ScenarioConfig, mut on_point: impl FnMut(&PointResult)) -> Result<Vec<PointResult>> {
    cfg.validate()?;
    let link = cfg.build_link()?;
    let mut out = Vec::new();
    for &scenario in &cfg.scenarios {
        for point in 0..cfg.ebn0_grid_db.len() {
            let r = run_point(cfg, &link, scenario, point)?;
            on_point(&r);
            out.push(r);
        }
    }
    Ok(out)
}

/// True when BER barely improves between two SNRs: `ber_low / ber_high < 3`.
/// Two zero rates count as not flattened (no floor is visible).
pub fn is_flattened(ber_low_snr: f64, ber_high_snr: f64) -> bool {
    if ber_high_snr <= 0.0 {
        return false;
    }
    ber_low_snr / ber_high_snr < 3.0
}

/// One-sided paired t statistic for `mean(a − b) > 0` over frames.
pub fn paired_t(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| f64::from(x) - f64::from(y)).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return if mean > 0.0 { f64::INFINITY } else if mean < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    }
    mean / (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_from_frames() {
        let s = ErrorStats::from_frames(&[0, 3, 0, 1], 100);
        assert_eq!((s.bit_errors, s.frame_errors, s.bits_counted, s.frames_counted), (4, 2, 400, 4));
        assert_eq!(s.ber, 0.01);
        assert_eq!(s.fer, 0.5);
        assert!(s.ci95_ber > 0.0);
        assert_eq!(ErrorStats::from_frames(&[], 10).ber, 0.0);
    }

    #[test]
    fn flattening_rule() {
        assert!(is_flattened(2e-4, 1e-4));
        assert!(!is_flattened(1e-3, 1e-4));
        assert!(!is_flattened(0.0, 0.0));
    }

    #[test]
    fn paired_t_signs() {
        assert!(paired_t(&[3, 4, 5, 3], &[1, 2, 2, 1]) > 2.0);
        assert!(paired_t(&[1, 1], &[1, 1]) == 0.0);
        assert_eq!(paired_t(&[2, 2], &[1, 1]), f64::INFINITY);
    }
}
