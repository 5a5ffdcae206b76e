//! Regular LDPC codes: construction, systematic encoding and flooding
//! sum-product decoding with probability-domain inputs and outputs.

mod alist;
mod construct;
mod gf2;
mod spa;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error};
use crate::Result;

pub use spa::{DecodeOutput, LLR_MAX};

/// Sparse parity-check code with a systematic encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpcCode {
    block_len: usize,
    /// Variable indices of every check.
    check_rows: Vec<Vec<usize>>,
    /// Check indices of every variable.
    var_cols: Vec<Vec<usize>>,
    /// Codeword positions carrying information bits, in info-bit order.
    info_positions: Vec<usize>,
    /// Codeword position of each parity bit, one per independent check.
    parity_positions: Vec<usize>,
    /// Row `i` gives parity bit `i` as an XOR over info bits (packed).
    generator: Vec<Vec<u64>>,
    /// True when construction had to accept a 4-cycle.
    has_four_cycles: bool,
}

impl LdpcCode {
    /// Builds a code from the variable lists of each check.
    pub fn from_check_rows(block_len: usize, check_rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut var_cols = vec![Vec::new(); block_len];
        for (c, row) in check_rows.iter().enumerate() {
            for &v in row {
                if v >= block_len {
                    return Err(dim_err(format!("check {c} references bit {v} >= {block_len}")));
                }
                if var_cols[v].contains(&c) {
                    return Err(Error::Construction(format!("duplicate edge ({c}, {v})")));
                }
                var_cols[v].push(c);
            }
        }
        let sys = gf2::systematic_form(block_len, &check_rows);
        let has_four_cycles = construct::has_four_cycle(&check_rows, &var_cols);
        Ok(Self {
            block_len,
            check_rows,
            var_cols,
            info_positions: sys.info_positions,
            parity_positions: sys.parity_positions,
            generator: sys.generator,
            has_four_cycles,
        })
    }

    /// Seeded regular construction with the given degrees, avoiding 4-cycles.
    pub fn regular(block_len: usize, var_deg: usize, check_deg: usize, seed: u64) -> Result<Self> {
        let rows = construct::regular_rows(block_len, var_deg, check_deg, seed)?;
        Self::from_check_rows(block_len, rows)
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn num_checks(&self) -> usize {
        self.check_rows.len()
    }

    pub fn info_len(&self) -> usize {
        self.info_positions.len()
    }

    /// Number of linearly independent checks.
    pub fn rank(&self) -> usize {
        self.parity_positions.len()
    }

    /// `info_len / block_len`.
    pub fn rate(&self) -> f64 {
        self.info_len() as f64 / self.block_len as f64
    }

    /// `(block_len - num_checks) / block_len`, ignoring rank deficiency.
    pub fn nominal_rate(&self) -> f64 {
        (self.block_len - self.num_checks()) as f64 / self.block_len as f64
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn check_rows(&self) -> &[Vec<usize>] {
        &self.check_rows
    }

    pub fn var_cols(&self) -> &[Vec<usize>] {
        &self.var_cols
    }

    pub fn has_four_cycles(&self) -> bool {
        self.has_four_cycles
    }

    /// `Some(d)` when every variable has degree `d`.
    pub fn var_degree(&self) -> Option<usize> {
        uniform_len(&self.var_cols)
    }

    /// `Some(d)` when every check has degree `d`.
    pub fn check_degree(&self) -> Option<usize> {
        uniform_len(&self.check_rows)
    }

    /// Systematic encoding; info bits land on [`Self::info_positions`].
    pub fn encode(&self, info_bits: &[u8]) -> Result<Vec<u8>> {
        if info_bits.len() != self.info_len() {
            return Err(dim_err(format!("expected {} info bits, got {}", self.info_len(), info_bits.len())));
        }
        let packed = gf2::pack(info_bits);
        let mut cw = vec![0u8; self.block_len];
        for (&pos, &b) in self.info_positions.iter().zip(info_bits) {
            cw[pos] = b & 1;
        }
        for (row, &pos) in self.generator.iter().zip(&self.parity_positions) {
            cw[pos] = gf2::dot(row, &packed);
        }
        Ok(cw)
    }

    /// Number of unsatisfied checks.
    pub fn syndrome_weight(&self, bits: &[u8]) -> usize {
        self.check_rows
            .iter()
            .filter(|row| row.iter().fold(0u8, |acc, &v| acc ^ (bits[v] & 1)) == 1)
            .count()
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.block_len && self.syndrome_weight(bits) == 0
    }

    /// Extracts the information bits from a codeword-ordered vector.
    pub fn systematic_bits<T: Copy>(&self, codeword: &[T]) -> Vec<T> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }

    /// Flooding sum-product decoding for `iterations` rounds.
    ///
    /// Stateless: every call starts from the supplied channel priors.
    pub fn decode_spa(&self, priors: &BitBeliefs, iterations: usize) -> Result<DecodeOutput> {
        self.decode_spa_with(priors, iterations, true)
    }

    /// As [`decode_spa`](Self::decode_spa), optionally running all rounds even
    /// after the syndrome clears.
    pub fn decode_spa_with(&self, priors: &BitBeliefs, iterations: usize, early_exit: bool) -> Result<DecodeOutput> {
        if priors.prob_one.len() != self.block_len {
            return Err(dim_err(format!("expected {} priors, got {}", self.block_len, priors.prob_one.len())));
        }
        if iterations == 0 {
            return Err(crate::error::config_err("decoder iterations must be at least 1"));
        }
        Ok(spa::decode(self, &priors.prob_one, iterations, early_exit))
    }

    pub fn to_alist(&self) -> String {
        alist::write(self)
    }

    pub fn from_alist(text: &str) -> Result<Self> {
        alist::read(text)
    }
}

fn uniform_len(lists: &[Vec<usize>]) -> Option<usize> {
    let first = lists.first()?.len();
    lists.iter().all(|l| l.len() == first).then_some(first)
}

/// What a belief vector represents in the turbo exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeliefRole {
    ChannelPrior,
    APosteriori,
    Extrinsic,
}

/// Per-bit probabilities of the value one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitBeliefs {
    pub prob_one: Vec<f64>,
    pub role: BeliefRole,
}

impl BitBeliefs {
    pub fn new(prob_one: Vec<f64>, role: BeliefRole) -> Self {
        Self { prob_one, role }
    }

    pub fn uniform(len: usize, role: BeliefRole) -> Self {
        Self { prob_one: vec![0.5; len], role }
    }

    /// Ties at 0.5 decide for zero.
    pub fn hard_decisions(&self) -> Vec<u8> {
        self.prob_one.iter().map(|&p| u8::from(p > 0.5)).collect()
    }
}
