//! Operation counts of the grid-search MAP estimator and the smoother.
//!
//! Counts are complex multiplications and additions per EM iteration,
//! accumulated in `f64` (the MAP totals exceed `u64` at 8×8).

use serde::{Deserialize, Serialize};

use crate::error::config_err;
use crate::Result;

/// Which reading of the soft-decision cost terms to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityMode {
    /// Closed-form counts, term by term.
    #[default]
    Printed,
    /// Alternative reading of the soft-decision terms: the equalizer costs
    /// `M^{N_t−1}` multiplications per candidate (not `N_t·M^{N_t−1}`) and
    /// the likelihood term drops its `+3`.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityParams {
    /// Alternating-projection cycles 𝒩.
    pub ap_cycles: f64,
    /// Grid step κ, rad.
    pub grid_step: f64,
    pub frame_len: f64,
    pub outer_iters: f64,
    pub inner_iters: f64,
    pub decoder_iters: f64,
    /// Variable-node degree.
    pub n_var: f64,
    /// Check-node degree.
    pub n_check: f64,
    pub order: f64,
    pub num_tx: f64,
    pub num_rx: f64,
    #[serde(default)]
    pub mode: ComplexityMode,
}

impl ComplexityParams {
    /// Full-size reference parameters for an `n × n` system.
    pub fn reference(antennas: usize) -> Self {
        Self {
            ap_cycles: 4.0,
            grid_step: 1e-3,
            frame_len: 8176.0,
            outer_iters: 1.0,
            inner_iters: 1.0,
            decoder_iters: 1.0,
            n_var: 4.0,
            n_check: 32.0,
            order: 16.0,
            num_tx: antennas as f64,
            num_rx: antennas as f64,
            mode: ComplexityMode::Printed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.ap_cycles,
            self.grid_step,
            self.frame_len,
            self.outer_iters,
            self.inner_iters,
            self.decoder_iters,
            self.n_var,
            self.n_check,
            self.order,
            self.num_tx,
            self.num_rx,
        ];
        if all.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(config_err("complexity parameters must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub params: ComplexityParams,
    pub c_alpha_mult: f64,
    pub c_alpha_add: f64,
    pub c_map_mult: f64,
    pub c_map_add: f64,
    pub c_ekfs_mult: f64,
    pub c_ekfs_add: f64,
    pub c_map: f64,
    pub c_ekfs: f64,
}

/// Cost of forming one soft decision `α(k)`: (multiplications, additions).
pub fn complexity_alpha(p: &ComplexityParams) -> (f64, f64) {
    let (nt, nr, m) = (p.num_tx, p.num_rx, p.order);
    let bits = m.log2();
    let cand = m.powf(nt);
    let rest = m.powf(nt - 1.0);
    let (eq_mult, lik_extra) = match p.mode {
        ComplexityMode::Printed => (nt * rest, 3.0),
        ComplexityMode::Tabulated => (rest, 0.0),
    };
    let mult = nt * cand
        + cand
            * (nr * nt + nr + lik_extra
                + nt * bits
                + 2.0
                + p.outer_iters * (eq_mult + nt + p.inner_iters * (m / 2.0 * bits + p.decoder_iters * p.n_var)));
    let add = nt * (cand - 1.0)
        + cand
            * (nr * nt + nr - 1.0
                + p.outer_iters * (rest - 1.0 + p.inner_iters * (m / 2.0 - 1.0 + p.decoder_iters * (2.0 * p.n_check - 1.0))));
    (mult, add)
}

/// Grid-search MAP cost with alternating projection.
pub fn complexity_map(p: &ComplexityParams) -> Result<(f64, f64)> {
    p.validate()?;
    let (nt, nr, lf) = (p.num_tx, p.num_rx, p.frame_len);
    let (am, aa) = complexity_alpha(p);
    let outer = p.ap_cycles * (nr + nt) * lf * (2.0 * std::f64::consts::PI / p.grid_step);
    let mult = outer
        * (1.0
            + lf * ((nr * nt + nr * nr * nt) + (2.0 * nr * nt + nr * nr * nt) + (nr * nr * nt + nr * nt * nt) + am));
    let add = outer
        * (2.0
            + lf * ((nr * nr * (nt - 1.0) + nr)
                + (nr * nr * (nt - 1.0) + nr * nt)
                + nr * nt * (nr + nt - 2.0)
                + aa));
    Ok((mult, add))
}

/// Smoother cost over a frame, including the soft decisions it consumes.
pub fn complexity_ekfs(p: &ComplexityParams) -> Result<(f64, f64)> {
    p.validate()?;
    let (nt, nr, lf) = (p.num_tx, p.num_rx, p.frame_len);
    let n = nr + nt - 1.0;
    let (am, aa) = complexity_alpha(p);
    let mult = lf
        * ((2.0 * n * n * nr + 2.0 * nr * nr * n + nr.powi(3))
            + (nr + 5.0 * nr * (nt - 1.0))
            + n * (nr + 1.0)
            + n * (n * nr + n * n + 1.0)
            + (nr * nr * nt + nr * nt * nt + nr * nt)
            + am
            + (n * n + n.powi(3))
            + 2.0 * n.powi(3));
    let add = lf
        * (n
            + (n * nr * (2.0 * n + nr - 3.0) + nr * nr * n + nr.powi(3))
            + nr * (n + 1.0)
            + n * n * (n + nr - 1.0)
            + (nr * nt * (nr + nt - 1.0) - nr)
            + aa
            + n * (n * n + 1.0)
            + n * n * (2.0 * n + 1.0));
    Ok((mult, add))
}

pub fn complexity_report(p: &ComplexityParams) -> Result<ComplexityReport> {
    let (c_alpha_mult, c_alpha_add) = complexity_alpha(p);
    let (c_map_mult, c_map_add) = complexity_map(p)?;
    let (c_ekfs_mult, c_ekfs_add) = complexity_ekfs(p)?;
    Ok(ComplexityReport {
        params: *p,
        c_alpha_mult,
        c_alpha_add,
        c_map_mult,
        c_map_add,
        c_ekfs_mult,
        c_ekfs_add,
        c_map: c_map_mult + c_map_add,
        c_ekfs: c_ekfs_mult + c_ekfs_add,
    })
}
