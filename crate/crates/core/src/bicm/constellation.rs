use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::config_err;
use crate::Result;

/// Symbol alphabet indexed by bit label (MSB is bit 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

fn gray_to_index(mut g: usize) -> usize {
    let mut idx = g;
    while g > 0 {
        g >>= 1;
        idx ^= g;
    }
    idx
}

impl Constellation {
    /// Unit-energy square QAM with reflected-Gray labelling per axis.
    ///
    /// The first half of each label selects the in-phase level, the second
    /// half the quadrature level.
    pub fn square_qam(m: usize) -> Result<Self> {
        if m < 4 || !m.is_power_of_two() || !m.trailing_zeros().is_multiple_of(2) {
            return Err(config_err(format!("unsupported QAM order {m}; need a power of 4")));
        }
        let bps = m.trailing_zeros() as usize;
        let half = bps / 2;
        let side = 1usize << half;
        let scale = (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
        let level = |g: usize| (2.0 * gray_to_index(g) as f64 - (side as f64 - 1.0)) / scale;
        let points = (0..m)
            .map(|label| {
                let i_bits = label >> half;
                let q_bits = label & (side - 1);
                Complex64::new(level(i_bits), level(q_bits))
            })
            .collect();
        Ok(Self { points, bits_per_symbol: bps })
    }

    /// Antipodal alphabet `{+1, -1}`, mostly for small exhaustive tests.
    pub fn bpsk() -> Self {
        Self { points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)], bits_per_symbol: 1 }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Bit `d` of `label`, counting from the most significant.
    pub fn label_bit(&self, label: usize, d: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - d)) & 1) as u8
    }

    pub fn label_from_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn map(&self, bits: &[u8]) -> Complex64 {
        self.points[self.label_from_bits(bits)]
    }

    /// Nearest point's label.
    pub fn hard_demap(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    pub fn max_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max)
    }
}
