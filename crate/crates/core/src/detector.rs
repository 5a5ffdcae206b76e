//! Iterative soft detector (the E-step).
//!
//! Per data instant the detector scores every candidate symbol vector,
//! marginalizes to per-antenna symbol extrinsics, demaps to bits and exchanges
//! bit messages with the LDPC decoder. The final vector posteriors give the
//! soft statistics `α(k)` and `B(k)` used by the phase tracker.
//!
//! Probabilities are carried directly (no LLRs) and floored at [`PROB_EPS`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bicm::{Constellation, FrameLayout, Interleaver};
use crate::channel::{reduced_mixing_matrix, ChannelMatrix, ReceivedFrame, ReducedPhnTrajectory};
use crate::error::{config_err, dim_err};
use crate::ldpc::{BeliefRole, BitBeliefs, LdpcCode};
use crate::{Result, PROB_EPS};

/// Static description of a link shared by detector and receivers.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub code: &'a LdpcCode,
    pub interleaver: &'a Interleaver,
    pub constellation: &'a Constellation,
    pub layout: &'a FrameLayout,
}

impl FrameContext<'_> {
    fn validate(&self) -> Result<()> {
        if self.interleaver.len() != self.code.block_len() || self.layout.coded_len != self.code.block_len() {
            return Err(dim_err("interleaver, layout and code lengths differ"));
        }
        if self.layout.bits_per_symbol != self.constellation.bits_per_symbol() {
            return Err(dim_err("layout and constellation disagree on bits per symbol"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Equalizer / symbol-mapper rounds.
    pub outer_iters: usize,
    /// Demapper / decoder rounds inside each outer round.
    pub inner_iters: usize,
    /// Sum-product iterations per decoder call.
    pub decoder_iters: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { outer_iters: 1, inner_iters: 1, decoder_iters: 1 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 || self.decoder_iters == 0 {
            return Err(config_err("detector iteration counts must be at least 1"));
        }
        Ok(())
    }
}

/// Unnormalized likelihoods of every candidate vector at each data instant,
/// scaled so the best candidate at each instant scores 1.
///
/// Candidate `n` sends label `(n / M^m) % M` on antenna `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVectorLikelihoods {
    pub num_tx: usize,
    pub order: usize,
    /// Frame instants covered, in data-slot order.
    pub instants: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl SymbolVectorLikelihoods {
    pub fn num_candidates(&self) -> usize {
        self.order.pow(self.num_tx as u32)
    }

    /// Label on antenna `m` for candidate `n`.
    pub fn label(&self, n: usize, m: usize) -> usize {
        (n / self.order.pow(m as u32)) % self.order
    }

    fn label_table(&self) -> Vec<usize> {
        let nc = self.num_candidates();
        let mut t = Vec::with_capacity(nc * self.num_tx);
        for n in 0..nc {
            t.extend((0..self.num_tx).map(|m| self.label(n, m)));
        }
        t
    }
}

/// Categorical distributions over constellation labels, one per (slot, antenna).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolProbs {
    pub num_tx: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl SymbolProbs {
    pub fn uniform(num_slots: usize, num_tx: usize, order: usize) -> Self {
        Self { num_tx, order, data: vec![1.0 / order as f64; num_slots * num_tx * order] }
    }

    pub fn num_slots(&self) -> usize {
        self.data.len() / (self.num_tx * self.order)
    }

    pub fn get(&self, slot: usize, m: usize) -> &[f64] {
        let s = (slot * self.num_tx + m) * self.order;
        &self.data[s..s + self.order]
    }

    fn get_mut(&mut self, slot: usize, m: usize) -> &mut [f64] {
        let s = (slot * self.num_tx + m) * self.order;
        &mut self.data[s..s + self.order]
    }
}

/// Soft symbol statistics: posterior mean `α(k)` and second moment `B(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftSymbolStats {
    /// `N_t × L_f`.
    pub alpha: DMatrix<Complex64>,
    /// One `N_t × N_t` matrix per instant.
    pub b_matrix: Vec<DMatrix<Complex64>>,
}

impl SoftSymbolStats {
    pub fn frame_len(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha_at(&self, k: usize) -> DVector<Complex64> {
        self.alpha.column(k).into_owned()
    }

    /// Point-mass statistics for known symbols.
    pub fn from_known(symbols: &DMatrix<Complex64>) -> Self {
        let b_matrix = (0..symbols.ncols())
            .map(|k| {
                let s = symbols.column(k);
                s * s.adjoint()
            })
            .collect();
        Self { alpha: symbols.clone(), b_matrix }
    }
}

/// Messages from the last pass, kept for inspection and invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorMessages {
    pub symbol_prior: SymbolProbs,
    pub symbol_extrinsic: SymbolProbs,
    /// Channel-bit order, probability of one.
    pub bit_prior: Vec<f64>,
    pub bit_extrinsic: Vec<f64>,
    /// Code order.
    pub bit_posterior: BitBeliefs,
    pub vector_posterior: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorDiagnostics {
    pub syndrome_weight: usize,
    /// `1 − mean H₂(p)` over decoder posteriors; 1 means fully confident.
    pub mutual_info_proxy: f64,
    /// Marginals that vanished and were reset to uniform.
    pub clamp_events: usize,
}

#[derive(Debug, Clone)]
pub struct DetectorOutput {
    pub soft: SoftSymbolStats,
    /// Code-order decoder posteriors.
    pub bit_posteriors: BitBeliefs,
    pub hard_bits: Vec<u8>,
    /// Channel-order priors to seed the next call.
    pub next_priors: BitBeliefs,
    pub messages: DetectorMessages,
    pub diagnostics: DetectorDiagnostics,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Scores all `M^{N_t}` candidates at each data instant of `layout` under the
/// phase estimate `phi_hat`.
pub fn channel_likelihoods(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    phi_hat: &ReducedPhnTrajectory,
    cst: &Constellation,
    layout: &FrameLayout,
) -> Result<SymbolVectorLikelihoods> {
    let (nr, nt) = (h.num_rx(), h.num_tx());
    if y.num_rx() != nr || y.frame_len() != layout.frame_len || phi_hat.frame_len() != layout.frame_len {
        return Err(dim_err("observation, phase estimate and layout sizes differ"));
    }
    if phi_hat.num_rx != nr || phi_hat.num_tx != nt || layout.num_tx != nt {
        return Err(dim_err("phase state does not match the channel"));
    }
    let noise = expand_noise(&y.noise_var, nr)?;
    let order = cst.order();
    let mut out = SymbolVectorLikelihoods {
        num_tx: nt,
        order,
        instants: layout.data_instants.clone(),
        values: Vec::with_capacity(layout.data_instants.len()),
    };
    let nc = out.num_candidates();
    let labels = out.label_table();
    // contrib[(m * order + a) * nr + l] = X[l, m] · a-th point
    let mut contrib = vec![Complex64::new(0.0, 0.0); nt * order * nr];
    let mut metric = vec![0.0; nc];
    for &k in &layout.data_instants {
        let phi: Vec<f64> = phi_hat.phi.column(k).iter().copied().collect();
        let x = reduced_mixing_matrix(h.matrix(), &phi);
        for m in 0..nt {
            for a in 0..order {
                for l in 0..nr {
                    contrib[(m * order + a) * nr + l] = x[(l, m)] * cst.point(a);
                }
            }
        }
        let yk = y.observations.column(k);
        let mut best = f64::NEG_INFINITY;
        for n in 0..nc {
            let mut acc = 0.0;
            for l in 0..nr {
                let mut e = yk[l];
                for m in 0..nt {
                    e -= contrib[(m * order + labels[n * nt + m]) * nr + l];
                }
                acc += e.norm_sqr() / (2.0 * noise[l]);
            }
            metric[n] = -acc;
            best = best.max(-acc);
        }
        out.values.push(metric.iter().map(|&v| (v - best).exp()).collect());
    }
    Ok(out)
}

fn expand_noise(noise_var: &[f64], nr: usize) -> Result<Vec<f64>> {
    let v = match noise_var.len() {
        1 => vec![noise_var[0]; nr],
        n if n == nr => noise_var.to_vec(),
        n => return Err(dim_err(format!("{n} noise variances for {nr} receive antennas"))),
    };
    if v.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(config_err("noise variances must be positive and finite"));
    }
    Ok(v)
}

/// Normalizes in place; an all-zero or non-finite vector becomes uniform.
/// Returns whether that fallback fired.
fn normalize(p: &mut [f64]) -> bool {
    let s: f64 = p.iter().sum();
    if s > 0.0 && s.is_finite() {
        p.iter_mut().for_each(|v| *v /= s);
        false
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|v| *v = u);
        true
    }
}

/// Per-antenna symbol extrinsics: the vector likelihood marginalized over the
/// other antennas, weighted by their priors. Returns the number of clamp events.
pub fn equalizer_extrinsic(lik: &SymbolVectorLikelihoods, priors: &SymbolProbs) -> Result<(SymbolProbs, usize)> {
    let (nt, order) = (lik.num_tx, lik.order);
    if priors.num_tx != nt || priors.order != order || priors.num_slots() != lik.values.len() {
        return Err(dim_err("symbol priors do not match the likelihoods"));
    }
    let labels = lik.label_table();
    let mut out = SymbolProbs::uniform(lik.values.len(), nt, order);
    let mut clamps = 0;
    for (slot, vals) in lik.values.iter().enumerate() {
        for m in 0..nt {
            let ext = out.get_mut(slot, m);
            ext.iter_mut().for_each(|v| *v = 0.0);
            for (n, &v) in vals.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let mut w = v;
                for m2 in (0..nt).filter(|&m2| m2 != m) {
                    w *= priors.get(slot, m2)[labels[n * nt + m2]];
                }
                ext[labels[n * nt + m]] += w;
            }
            clamps += usize::from(normalize(ext));
        }
    }
    Ok((out, clamps))
}

/// Bit extrinsics (probability of one, channel-bit order) from symbol
/// extrinsics and the priors of the other bits in each label.
///
/// `bit_priors` covers every channel bit of `layout`.
pub fn demapper_extrinsic(
    symbol_ext: &SymbolProbs,
    bit_priors: &[f64],
    cst: &Constellation,
    layout: &FrameLayout,
) -> Result<Vec<f64>> {
    let (nt, order, bps) = (layout.num_tx, cst.order(), cst.bits_per_symbol());
    if bit_priors.len() != layout.channel_bits() || symbol_ext.num_slots() != layout.num_data_slots() {
        return Err(dim_err("bit priors or symbol extrinsics do not match the layout"));
    }
    let mut out = vec![0.5; bit_priors.len()];
    let mut weight = vec![0.0; order];
    for slot in 0..layout.num_data_slots() {
        for m in 0..nt {
            let ext = symbol_ext.get(slot, m);
            let base = layout.bit_index(slot, m, 0);
            let pri = &bit_priors[base..base + bps];
            for d in 0..bps {
                for (a, w) in weight.iter_mut().enumerate() {
                    *w = ext[a];
                    for (d2, &p1) in pri.iter().enumerate() {
                        if d2 != d {
                            *w *= if cst.label_bit(a, d2) == 1 { p1 } else { 1.0 - p1 };
                        }
                    }
                }
                let (mut zero, mut one) = (0.0, 0.0);
                for (a, &w) in weight.iter().enumerate() {
                    if cst.label_bit(a, d) == 1 {
                        one += w;
                    } else {
                        zero += w;
                    }
                }
                let total = zero + one;
                out[base + d] = if total > 0.0 && total.is_finite() { clamp_prob(one / total) } else { 0.5 };
            }
        }
    }
    Ok(out)
}

/// Symbol priors as normalized products of bit priors over each label.
pub fn symbol_priors_from_bits(bit_priors: &[f64], cst: &Constellation, layout: &FrameLayout) -> Result<SymbolProbs> {
    let (nt, order, bps) = (layout.num_tx, cst.order(), cst.bits_per_symbol());
    if bit_priors.len() != layout.channel_bits() {
        return Err(dim_err("bit priors do not match the layout"));
    }
    let mut out = SymbolProbs::uniform(layout.num_data_slots(), nt, order);
    for slot in 0..layout.num_data_slots() {
        for m in 0..nt {
            let base = layout.bit_index(slot, m, 0);
            let pri = &bit_priors[base..base + bps];
            let p = out.get_mut(slot, m);
            for (a, v) in p.iter_mut().enumerate() {
                *v = pri
                    .iter()
                    .enumerate()
                    .map(|(d, &p1)| if cst.label_bit(a, d) == 1 { p1 } else { 1.0 - p1 })
                    .product();
            }
            normalize(p);
        }
    }
    Ok(out)
}

/// Vector posteriors `∝ likelihood × ∏ bit priors` and the resulting soft
/// statistics; pilot instants get their known vector.
pub fn posterior_mapper(
    lik: &SymbolVectorLikelihoods,
    bit_priors: &[f64],
    cst: &Constellation,
    layout: &FrameLayout,
) -> Result<(Vec<Vec<f64>>, SoftSymbolStats)> {
    let nt = lik.num_tx;
    let sym = symbol_priors_from_bits(bit_priors, cst, layout)?;
    if sym.num_slots() != lik.values.len() {
        return Err(dim_err("likelihoods do not match the layout"));
    }
    let labels = lik.label_table();
    let mut alpha = DMatrix::zeros(nt, layout.frame_len);
    let mut b_matrix = vec![DMatrix::zeros(nt, nt); layout.frame_len];
    for (i, &k) in layout.pilot_instants.iter().enumerate() {
        let s = &layout.pilot_vectors[i];
        alpha.set_column(k, s);
        b_matrix[k] = s * s.adjoint();
    }
    let mut posteriors = Vec::with_capacity(lik.values.len());
    let mut a = DVector::zeros(nt);
    for (slot, vals) in lik.values.iter().enumerate() {
        let mut post: Vec<f64> = vals
            .iter()
            .enumerate()
            .map(|(n, &v)| (0..nt).fold(v, |w, m| w * sym.get(slot, m)[labels[n * nt + m]]))
            .collect();
        normalize(&mut post);
        let k = lik.instants[slot];
        let mut mean = DVector::zeros(nt);
        let mut second = DMatrix::zeros(nt, nt);
        for (n, &p) in post.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for m in 0..nt {
                a[m] = cst.point(labels[n * nt + m]);
            }
            mean += &a * Complex64::new(p, 0.0);
            second += (&a * a.adjoint()) * Complex64::new(p, 0.0);
        }
        alpha.set_column(k, &mean);
        b_matrix[k] = second;
        posteriors.push(post);
    }
    Ok((posteriors, SoftSymbolStats { alpha, b_matrix }))
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

/// One full detector pass: likelihoods, then the equalizer / demapper /
/// decoder loops, then the posterior mapper.
///
/// `warm_priors` are channel-order bit priors from a previous call; `None`
/// starts from uniform. Hard bits are decoder posteriors on the systematic
/// positions, ties going to zero.
pub fn run_detector(
    y: &ReceivedFrame,
    h: &ChannelMatrix,
    phi_hat: &ReducedPhnTrajectory,
    ctx: &FrameContext<'_>,
    cfg: &DetectorConfig,
    warm_priors: Option<&BitBeliefs>,
) -> Result<DetectorOutput> {
    cfg.validate()?;
    ctx.validate()?;
    let layout = ctx.layout;
    let coded = ctx.code.block_len();
    let mut bit_prior = match warm_priors {
        Some(w) if w.prob_one.len() == layout.channel_bits() => w.prob_one.clone(),
        Some(w) => return Err(dim_err(format!("{} warm priors for {} channel bits", w.prob_one.len(), layout.channel_bits()))),
        None => vec![0.5; layout.channel_bits()],
    };
    // Filler bits carry no code structure and keep a flat prior.
    bit_prior[coded..].iter_mut().for_each(|p| *p = 0.5);

    let lik = channel_likelihoods(y, h, phi_hat, ctx.constellation, layout)?;
    let mut clamp_events = 0;
    let mut last = None;
    for _ in 0..cfg.outer_iters {
        let symbol_prior = symbol_priors_from_bits(&bit_prior, ctx.constellation, layout)?;
        let (symbol_ext, clamps) = equalizer_extrinsic(&lik, &symbol_prior)?;
        clamp_events += clamps;
        for _ in 0..cfg.inner_iters {
            let bit_ext = demapper_extrinsic(&symbol_ext, &bit_prior, ctx.constellation, layout)?;
            let code_prior = ctx.interleaver.deinterleave(&bit_ext[..coded]);
            let dec = ctx
                .code
                .decode_spa_with(&BitBeliefs::new(code_prior, BeliefRole::ChannelPrior), cfg.decoder_iters, false)?;
            let fed_back = ctx.interleaver.interleave(&dec.extrinsic.prob_one);
            let used_prior = std::mem::replace(&mut bit_prior, fed_back);
            bit_prior.resize(layout.channel_bits(), 0.5);
            last = Some((symbol_prior.clone(), symbol_ext.clone(), used_prior, bit_ext, dec));
        }
    }
    let (symbol_prior, symbol_extrinsic, used_prior, bit_extrinsic, dec) = last.expect("at least one iteration");
    let (vector_posterior, soft) = posterior_mapper(&lik, &bit_prior, ctx.constellation, layout)?;

    let hard_bits = ctx.code.systematic_bits(&dec.posterior.hard_decisions());
    let mutual_info_proxy =
        1.0 - dec.posterior.prob_one.iter().map(|&p| binary_entropy(p)).sum::<f64>() / coded as f64;
    let diagnostics = DetectorDiagnostics { syndrome_weight: dec.syndrome_weight, mutual_info_proxy, clamp_events };
    Ok(DetectorOutput {
        soft,
        bit_posteriors: dec.posterior.clone(),
        hard_bits,
        next_priors: BitBeliefs::new(bit_prior.clone(), BeliefRole::Extrinsic),
        messages: DetectorMessages {
            symbol_prior,
            symbol_extrinsic,
            bit_prior: used_prior,
            bit_extrinsic,
            bit_posterior: dec.posterior,
            vector_posterior,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicm::{build_frame, PilotBook};
    use crate::channel::{apply_channel, generate_rician_channel, ChannelConfig, PhnTrajectories};
    use crate::linalg::min_eigenvalue;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_probs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }

    /// 2×2 QPSK layout with a few data slots and no pilots in range beyond k=0.
    fn small_setup(seed: u64) -> (Constellation, FrameLayout, ChannelMatrix, ReceivedFrame, ReducedPhnTrajectory) {
        let cst = Constellation::square_qam(4).unwrap();
        let layout = FrameLayout::with_frame_len(4, 12, 2, 2, 100, &PilotBook::dft(2)).unwrap();
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), seed).unwrap();
        let mut rng = rng_from_seed(seed + 1);
        let obs = DMatrix::from_fn(2, 4, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let y = ReceivedFrame { observations: obs, noise_var: vec![0.3, 0.5], eb_n0_db: None };
        let mut phi = ReducedPhnTrajectory::zeros(2, 2, 4);
        phi.phi = DMatrix::from_fn(3, 4, |_, _| rng.random::<f64>() - 0.5);
        (cst, layout, h, y, phi)
    }

    #[test]
    fn likelihoods_match_direct_density() {
        let (cst, layout, h, y, phi) = small_setup(3);
        let lik = channel_likelihoods(&y, &h, &phi, &cst, &layout).unwrap();
        assert_eq!(lik.values.len(), 3);
        for (slot, &k) in lik.instants.iter().enumerate() {
            // Direct density with its normalizing constant; ratios must agree.
            let x = reduced_mixing_matrix(h.matrix(), &phi.phi.column(k).iter().copied().collect::<Vec<_>>());
            let dens: Vec<f64> = (0..16)
                .map(|n| {
                    let s = DVector::from_vec(vec![cst.point(n % 4), cst.point(n / 4)]);
                    let e = y.column(k) - &x * s;
                    (0..2)
                        .map(|l| (-e[l].norm_sqr() / (2.0 * y.noise_var[l])).exp() / (2.0 * std::f64::consts::PI * y.noise_var[l]))
                        .product()
                })
                .collect();
            let dmax = dens.iter().cloned().fold(0.0, f64::max);
            for n in 0..16 {
                assert!((lik.values[slot][n] - dens[n] / dmax).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_observation_gives_equal_likelihoods() {
        let cst = Constellation::bpsk();
        let layout = FrameLayout::with_frame_len(2, 1, 1, 1, 100, &PilotBook::dft(1)).unwrap();
        let h = ChannelMatrix(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let y = ReceivedFrame {
            observations: DMatrix::from_element(1, 2, Complex64::new(0.0, 0.7)),
            noise_var: vec![0.2],
            eb_n0_db: None,
        };
        let lik = channel_likelihoods(&y, &h, &ReducedPhnTrajectory::zeros(1, 1, 2), &cst, &layout).unwrap();
        let (ext, _) = equalizer_extrinsic(&lik, &SymbolProbs::uniform(1, 1, 2)).unwrap();
        assert!((ext.get(0, 0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noiseless_truth_has_unit_likelihood() {
        let cst = Constellation::square_qam(16).unwrap();
        let code = LdpcCode::regular(64, 3, 6, 1).unwrap();
        let il = Interleaver::random(64, 2);
        let info = vec![1u8; code.info_len()];
        let frame = build_frame(&info, &code, &il, &cst, 2, 5, &PilotBook::dft(2), 3).unwrap();
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), 4).unwrap();
        let phn = PhnTrajectories::zeros(2, 2, frame.layout.frame_len);
        let mut y = apply_channel(&frame.symbols, &h, &phn, &[1e-3], 5).unwrap();
        y.observations = crate::channel::mixing_matrix(h.matrix(), &[0.0, 0.0], &[0.0, 0.0]) * &frame.symbols;
        let lik = channel_likelihoods(&y, &h, &ReducedPhnTrajectory::zeros(2, 2, frame.layout.frame_len), &cst, &frame.layout)
            .unwrap();
        for (slot, &k) in lik.instants.iter().enumerate() {
            let truth: usize = (0..2).map(|m| cst.hard_demap(frame.symbols[(m, k)]) * 16usize.pow(m as u32)).sum();
            assert_eq!(lik.values[slot][truth], 1.0);
        }
    }

    #[test]
    fn equalizer_matches_enumeration_and_ignores_own_prior() {
        let (cst, layout, h, y, phi) = small_setup(7);
        let lik = channel_likelihoods(&y, &h, &phi, &cst, &layout).unwrap();
        let mut rng = rng_from_seed(8);
        let mut pri = SymbolProbs::uniform(3, 2, 4);
        for slot in 0..3 {
            for m in 0..2 {
                let p = random_probs(&mut rng, 4);
                pri.get_mut(slot, m).copy_from_slice(&p);
            }
        }
        let (ext, clamps) = equalizer_extrinsic(&lik, &pri).unwrap();
        assert_eq!(clamps, 0);
        for slot in 0..3 {
            for m in 0..2 {
                let other = 1 - m;
                let mut expect = [0.0; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        let n = if m == 0 { a + 4 * b } else { b + 4 * a };
                        expect[a] += lik.values[slot][n] * pri.get(slot, other)[b];
                    }
                }
                let s: f64 = expect.iter().sum();
                for a in 0..4 {
                    assert!((ext.get(slot, m)[a] - expect[a] / s).abs() < 1e-12);
                }
                assert!((ext.get(slot, m).iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
        // Perturbing antenna 0's own prior leaves its extrinsic untouched.
        let mut pri2 = pri.clone();
        pri2.get_mut(1, 0).copy_from_slice(&[0.7, 0.1, 0.1, 0.1]);
        let (ext2, _) = equalizer_extrinsic(&lik, &pri2).unwrap();
        assert_eq!(ext.get(1, 0), ext2.get(1, 0));
    }

    #[test]
    fn point_mass_prior_slices_the_likelihood() {
        let (cst, layout, h, y, phi) = small_setup(11);
        let lik = channel_likelihoods(&y, &h, &phi, &cst, &layout).unwrap();
        let mut pri = SymbolProbs::uniform(3, 2, 4);
        pri.get_mut(0, 1).copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
        let (ext, _) = equalizer_extrinsic(&lik, &pri).unwrap();
        let slice: Vec<f64> = (0..4).map(|a| lik.values[0][a + 4 * 2]).collect();
        let s: f64 = slice.iter().sum();
        for a in 0..4 {
            assert!((ext.get(0, 0)[a] - slice[a] / s).abs() < 1e-12);
        }
    }

    #[test]
    fn demapper_matches_exhaustive_sixteen_term_sum() {
        let cst = Constellation::square_qam(16).unwrap();
        let layout = FrameLayout::with_frame_len(2, 4, 1, 4, 100, &PilotBook::dft(1)).unwrap();
        let mut rng = rng_from_seed(21);
        let mut ext = SymbolProbs::uniform(1, 1, 16);
        ext.get_mut(0, 0).copy_from_slice(&random_probs(&mut rng, 16));
        let priors: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let out = demapper_extrinsic(&ext, &priors, &cst, &layout).unwrap();
        for d in 0..4 {
            let mut w = [0.0; 2];
            for a in 0..16usize {
                let bits: Vec<u8> = (0..4).map(|i| ((a >> (3 - i)) & 1) as u8).collect();
                let mut p = ext.get(0, 0)[a];
                for (i, &b) in bits.iter().enumerate() {
                    if i != d {
                        p *= if b == 1 { priors[i] } else { 1.0 - priors[i] };
                    }
                }
                w[bits[d] as usize] += p;
            }
            assert!((out[d] - w[1] / (w[0] + w[1])).abs() < 1e-12);
        }
        // Own-bit prior has no influence.
        let mut p2 = priors.clone();
        p2[2] = 0.99;
        assert_eq!(demapper_extrinsic(&ext, &p2, &cst, &layout).unwrap()[2], out[2]);
    }

    #[test]
    fn demapper_special_cases() {
        let cst = Constellation::square_qam(4).unwrap();
        let layout = FrameLayout::with_frame_len(2, 2, 1, 2, 100, &PilotBook::dft(1)).unwrap();
        let mut ext = SymbolProbs::uniform(1, 1, 4);
        ext.get_mut(0, 0).copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        let out = demapper_extrinsic(&ext, &[0.5, 0.5], &cst, &layout).unwrap();
        // Label bit 0 is the MSB: labels 2 and 3 carry a one there.
        assert!((out[0] - 0.7).abs() < 1e-12);
        assert!((out[1] - 0.6).abs() < 1e-12);
        ext.get_mut(0, 0).copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
        let out = demapper_extrinsic(&ext, &[0.5, 0.5], &cst, &layout).unwrap();
        assert!((out[0] - (1.0 - PROB_EPS)).abs() < 1e-15 && (out[1] - PROB_EPS).abs() < 1e-15);
    }

    #[test]
    fn symbol_priors_from_bit_products() {
        let cst = Constellation::square_qam(16).unwrap();
        let layout = FrameLayout::with_frame_len(2, 4, 1, 4, 100, &PilotBook::dft(1)).unwrap();
        let p = symbol_priors_from_bits(&[0.9, 0.1, 0.5, 0.5], &cst, &layout).unwrap();
        for a in 0..16usize {
            let probs = [0.9, 0.1, 0.5, 0.5];
            let e: f64 = (0..4).map(|d| if (a >> (3 - d)) & 1 == 1 { probs[d] } else { 1.0 - probs[d] }).product();
            assert!((p.get(0, 0)[a] - e).abs() < 1e-15);
        }
        let u = symbol_priors_from_bits(&[0.5; 4], &cst, &layout).unwrap();
        assert!(u.get(0, 0).iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
        let pm = symbol_priors_from_bits(&[1.0, 0.0, 1.0, 1.0], &cst, &layout).unwrap();
        assert_eq!(pm.get(0, 0)[0b1011], 1.0);
    }

    #[test]
    fn posterior_mapper_matches_exhaustive_expectation() {
        let (cst, layout, h, y, phi) = small_setup(13);
        let lik = channel_likelihoods(&y, &h, &phi, &cst, &layout).unwrap();
        let mut rng = rng_from_seed(14);
        let priors: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let (post, soft) = posterior_mapper(&lik, &priors, &cst, &layout).unwrap();
        for (slot, &k) in lik.instants.iter().enumerate() {
            let mut w = vec![0.0; 16];
            for n in 0..16usize {
                let labels = [n % 4, n / 4];
                let mut p = lik.values[slot][n];
                for (m, &lab) in labels.iter().enumerate() {
                    for d in 0..2 {
                        let pr = priors[layout.bit_index(slot, m, d)];
                        p *= if (lab >> (1 - d)) & 1 == 1 { pr } else { 1.0 - pr };
                    }
                }
                w[n] = p;
            }
            let s: f64 = w.iter().sum();
            let mut alpha = DVector::<Complex64>::zeros(2);
            let mut b = DMatrix::<Complex64>::zeros(2, 2);
            for n in 0..16 {
                let v = DVector::from_vec(vec![cst.point(n % 4), cst.point(n / 4)]);
                let p = Complex64::new(w[n] / s, 0.0);
                assert!((post[slot][n] - w[n] / s).abs() < 1e-12);
                alpha += &v * p;
                b += &v * v.adjoint() * p;
            }
            assert!((soft.alpha_at(k) - alpha).norm() < 1e-12);
            assert!((&soft.b_matrix[k] - b).norm() < 1e-12);
            assert!(min_eigenvalue(&soft.b_matrix[k]) > -1e-10);
        }
        // Pilot instant 0 carries the known vector.
        assert_eq!(soft.alpha_at(0), layout.pilot_vectors[0]);
    }

    #[test]
    fn point_mass_and_uniform_posteriors() {
        let cst = Constellation::square_qam(16).unwrap();
        let layout = FrameLayout::with_frame_len(2, 4, 1, 4, 100, &PilotBook::dft(1)).unwrap();
        let lik = SymbolVectorLikelihoods { num_tx: 1, order: 16, instants: vec![1], values: vec![vec![1.0; 16]] };
        let (_, soft) = posterior_mapper(&lik, &[0.5; 4], &cst, &layout).unwrap();
        assert!(soft.alpha[(0, 1)].norm() < 1e-15);
        let mut vals = vec![0.0; 16];
        vals[6] = 1.0;
        let lik = SymbolVectorLikelihoods { values: vec![vals], ..lik };
        let (_, soft) = posterior_mapper(&lik, &[0.5; 4], &cst, &layout).unwrap();
        assert_eq!(soft.alpha[(0, 1)], cst.point(6));
        assert!((soft.b_matrix[1][(0, 0)].re - cst.point(6).norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn noiseless_detection_recovers_info_bits() {
        let cst = Constellation::square_qam(16).unwrap();
        let code = LdpcCode::regular(256, 4, 32, 1).unwrap();
        let il = Interleaver::random(256, 2);
        let mut rng = rng_from_seed(5);
        let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
        let frame = build_frame(&info, &code, &il, &cst, 2, 14, &PilotBook::dft(2), 3).unwrap();
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), 4).unwrap();
        let phn = PhnTrajectories::zeros(2, 2, frame.layout.frame_len);
        let mut y = apply_channel(&frame.symbols, &h, &phn, &[1e-4], 5).unwrap();
        y.observations = h.matrix() * &frame.symbols;
        let ctx = FrameContext { code: &code, interleaver: &il, constellation: &cst, layout: &frame.layout };
        let phi = ReducedPhnTrajectory::zeros(2, 2, frame.layout.frame_len);
        let out = run_detector(&y, &h, &phi, &ctx, &DetectorConfig::default(), None).unwrap();
        assert_eq!(out.hard_bits, info);
        assert_eq!(out.diagnostics.syndrome_weight, 0);
        for k in 0..frame.layout.frame_len {
            assert!((out.soft.alpha_at(k) - frame.symbols.column(k)).norm() < 1e-6);
        }
        let again = run_detector(&y, &h, &phi, &ctx, &DetectorConfig::default(), Some(&out.next_priors)).unwrap();
        assert_eq!(again.hard_bits, info);
    }

    #[test]
    fn distributions_are_normalized_through_the_loop() {
        let cst = Constellation::square_qam(16).unwrap();
        let code = LdpcCode::regular(128, 4, 32, 1).unwrap();
        let il = Interleaver::random(128, 2);
        let mut rng = rng_from_seed(9);
        let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
        let frame = build_frame(&info, &code, &il, &cst, 2, 14, &PilotBook::dft(2), 3).unwrap();
        let h = generate_rician_channel(&ChannelConfig::rician(2, 2, 2.0), 4).unwrap();
        let phn = PhnTrajectories::zeros(2, 2, frame.layout.frame_len);
        let y = apply_channel(&frame.symbols, &h, &phn, &[0.3], 5).unwrap();
        let ctx = FrameContext { code: &code, interleaver: &il, constellation: &cst, layout: &frame.layout };
        let phi = ReducedPhnTrajectory::zeros(2, 2, frame.layout.frame_len);
        let cfg = DetectorConfig { outer_iters: 2, inner_iters: 2, decoder_iters: 3 };
        let out = run_detector(&y, &h, &phi, &ctx, &cfg, None).unwrap();
        let msgs = &out.messages;
        for probs in [&msgs.symbol_prior, &msgs.symbol_extrinsic] {
            for chunk in probs.data.chunks(16) {
                assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(chunk.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
        for post in &msgs.vector_posterior {
            assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for p in msgs.bit_prior.iter().chain(&msgs.bit_extrinsic).chain(&msgs.bit_posterior.prob_one) {
            assert!((0.0..=1.0).contains(p));
        }
        for b in &out.soft.b_matrix {
            assert!((b - b.adjoint()).norm() < 1e-12);
            assert!(min_eigenvalue(b) > -1e-10);
            for m in 0..2 {
                assert!(b[(m, m)].re <= cst.max_energy() + 1e-12);
            }
        }
    }
}
