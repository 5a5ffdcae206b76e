use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Constellation, Interleaver};
use crate::error::{config_err, Error};
use crate::ldpc::LdpcCode;
use crate::rng::rng_from_seed;
use crate::Result;

/// Known pilot vectors, used cyclically over pilot instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotBook {
    pub vectors: Vec<DVector<Complex64>>,
}

impl PilotBook {
    /// Columns of the `N_t`-point DFT matrix: unit-modulus entries, mutually
    /// orthogonal, so any `N_t` consecutive pilots span the transmit space.
    pub fn dft(num_tx: usize) -> Self {
        let vectors = (0..num_tx)
            .map(|c| {
                DVector::from_fn(num_tx, |m, _| {
                    Complex64::cis(-2.0 * std::f64::consts::PI * (m * c) as f64 / num_tx as f64)
                })
            })
            .collect();
        Self { vectors }
    }
}

/// Time-slot layout of a frame, known to both ends.
///
/// Instant `k` (0-based) carries a pilot when `k % pilot_spacing == 0`.
/// Coded bits fill data instants in order, antenna by antenna, MSB first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub frame_len: usize,
    pub num_tx: usize,
    pub bits_per_symbol: usize,
    pub pilot_spacing: usize,
    pub pilot_mask: Vec<bool>,
    pub data_instants: Vec<usize>,
    pub pilot_instants: Vec<usize>,
    /// Pilot vector sent at each entry of `pilot_instants`.
    pub pilot_vectors: Vec<DVector<Complex64>>,
    /// Codeword bits carried per frame.
    pub coded_len: usize,
    /// Random filler bits appended after the interleaved codeword.
    pub padding: usize,
}

impl FrameLayout {
    /// Shortest frame whose data instants hold `coded_len` bits.
    pub fn for_codeword(
        coded_len: usize,
        num_tx: usize,
        bits_per_symbol: usize,
        pilot_spacing: usize,
        book: &PilotBook,
    ) -> Result<Self> {
        if num_tx == 0 || bits_per_symbol == 0 || pilot_spacing == 0 {
            return Err(config_err("num_tx, bits_per_symbol and pilot_spacing must be positive"));
        }
        let per_slot = num_tx * bits_per_symbol;
        let slots = coded_len.div_ceil(per_slot);
        let mut frame_len = slots;
        while frame_len - frame_len.div_ceil(pilot_spacing) < slots {
            frame_len += 1;
        }
        Self::with_frame_len(frame_len, coded_len, num_tx, bits_per_symbol, pilot_spacing, book)
    }

    pub fn with_frame_len(
        frame_len: usize,
        coded_len: usize,
        num_tx: usize,
        bits_per_symbol: usize,
        pilot_spacing: usize,
        book: &PilotBook,
    ) -> Result<Self> {
        if pilot_spacing == 0 || frame_len == 0 {
            return Err(config_err("pilot_spacing and frame_len must be positive"));
        }
        if book.vectors.is_empty() || book.vectors.iter().any(|v| v.len() != num_tx) {
            return Err(config_err("pilot book must hold vectors of length num_tx"));
        }
        let pilot_mask: Vec<bool> = (0..frame_len).map(|k| k % pilot_spacing == 0).collect();
        let data_instants: Vec<usize> = (0..frame_len).filter(|&k| !pilot_mask[k]).collect();
        let pilot_instants: Vec<usize> = (0..frame_len).filter(|&k| pilot_mask[k]).collect();
        let capacity = data_instants.len() * num_tx * bits_per_symbol;
        if capacity < coded_len {
            return Err(Error::Framing(format!("{capacity} data bit slots cannot hold {coded_len} coded bits")));
        }
        let pilot_vectors = (0..pilot_instants.len()).map(|i| book.vectors[i % book.vectors.len()].clone()).collect();
        Ok(Self {
            frame_len,
            num_tx,
            bits_per_symbol,
            pilot_spacing,
            pilot_mask,
            data_instants,
            pilot_instants,
            pilot_vectors,
            coded_len,
            padding: capacity - coded_len,
        })
    }

    pub fn num_data_slots(&self) -> usize {
        self.data_instants.len()
    }

    /// Bits carried by the data instants, codeword plus padding.
    pub fn channel_bits(&self) -> usize {
        self.coded_len + self.padding
    }

    /// Position of bit `d` on antenna `m` at data slot `t` in the channel-bit stream.
    pub fn bit_index(&self, slot: usize, antenna: usize, d: usize) -> usize {
        (slot * self.num_tx + antenna) * self.bits_per_symbol + d
    }

    /// Pilot vector at instant `k`, if it is a pilot instant.
    pub fn pilot_at(&self, k: usize) -> Option<&DVector<Complex64>> {
        if !self.pilot_mask.get(k).copied().unwrap_or(false) {
            return None;
        }
        Some(&self.pilot_vectors[k / self.pilot_spacing])
    }
}

/// One transmitted frame with everything needed to score a receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxFrame {
    pub info_bits: Vec<u8>,
    /// Codeword in code order.
    pub coded_bits: Vec<u8>,
    /// Interleaved codeword followed by padding, in mapping order.
    pub channel_bits: Vec<u8>,
    /// `N_t × L_f` transmitted symbols.
    pub symbols: DMatrix<Complex64>,
    pub layout: FrameLayout,
}

/// Encodes, interleaves, maps and inserts pilots for one codeword.
#[allow(clippy::too_many_arguments)]
pub fn build_frame(
    info_bits: &[u8],
    code: &LdpcCode,
    interleaver: &Interleaver,
    constellation: &Constellation,
    num_tx: usize,
    pilot_spacing: usize,
    pilot_book: &PilotBook,
    seed: u64,
) -> Result<TxFrame> {
    if interleaver.len() != code.block_len() {
        return Err(Error::Framing(format!(
            "interleaver length {} differs from block length {}",
            interleaver.len(),
            code.block_len()
        )));
    }
    if info_bits.len() != code.info_len() {
        return Err(Error::Framing(format!("expected {} info bits, got {}", code.info_len(), info_bits.len())));
    }
    let layout = FrameLayout::for_codeword(
        code.block_len(),
        num_tx,
        constellation.bits_per_symbol(),
        pilot_spacing,
        pilot_book,
    )?;
    let coded_bits = code.encode(info_bits)?;
    let mut channel_bits = interleaver.interleave(&coded_bits);
    let mut rng = rng_from_seed(seed);
    channel_bits.extend((0..layout.padding).map(|_| rng.random_range(0..2u8)));
    let symbols = map_symbols(&channel_bits, &layout, constellation);
    Ok(TxFrame { info_bits: info_bits.to_vec(), coded_bits, channel_bits, symbols, layout })
}

pub(crate) fn map_symbols(channel_bits: &[u8], layout: &FrameLayout, cst: &Constellation) -> DMatrix<Complex64> {
    let bps = cst.bits_per_symbol();
    let mut symbols = DMatrix::zeros(layout.num_tx, layout.frame_len);
    for (i, &k) in layout.pilot_instants.iter().enumerate() {
        symbols.set_column(k, &layout.pilot_vectors[i]);
    }
    for (slot, &k) in layout.data_instants.iter().enumerate() {
        for m in 0..layout.num_tx {
            let start = layout.bit_index(slot, m, 0);
            symbols[(m, k)] = cst.map(&channel_bits[start..start + bps]);
        }
    }
    symbols
}
