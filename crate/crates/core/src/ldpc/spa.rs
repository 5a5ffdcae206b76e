//! Flooding belief propagation. Messages are LLRs `ln(P0/P1)` internally;
//! callers see probabilities of one.

use super::{BeliefRole, BitBeliefs, LdpcCode};
use crate::PROB_EPS;

/// Magnitude bound matching the probability floor.
pub const LLR_MAX: f64 = 27.631_021_115_871_04; // ln((1-1e-12)/1e-12)

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub posterior: BitBeliefs,
    /// Decoder extrinsic, i.e. the a-priori input for the demapper.
    pub extrinsic: BitBeliefs,
    pub syndrome_ok: bool,
    pub syndrome_weight: usize,
    pub iterations_run: usize,
}

pub(crate) fn prob_to_llr(p_one: f64) -> f64 {
    // Both sides floored separately so 1.0 maps exactly to -LLR_MAX.
    let p = p_one.clamp(PROB_EPS, 1.0);
    let q = (1.0 - p_one).clamp(PROB_EPS, 1.0);
    (q.ln() - p.ln()).clamp(-LLR_MAX, LLR_MAX)
}

pub(crate) fn llr_to_prob(llr: f64) -> f64 {
    // 1 / (1 + e^L), written to stay finite for large |L|
    if llr >= 0.0 {
        let e = (-llr).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + llr.exp())
    }
}

fn check_message(product: f64) -> f64 {
    let t = product.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    (2.0 * t.atanh()).clamp(-LLR_MAX, LLR_MAX)
}

pub(super) fn decode(code: &LdpcCode, prior_prob: &[f64], iterations: usize, early_exit: bool) -> DecodeOutput {
    let n = code.block_len();
    let prior: Vec<f64> = prior_prob.iter().map(|&p| prob_to_llr(p)).collect();

    // Edge storage in check-major order; var_edges maps each variable to its edge ids.
    let rows = code.check_rows();
    let mut edge_var = Vec::new();
    let mut row_start = Vec::with_capacity(rows.len() + 1);
    for row in rows {
        row_start.push(edge_var.len());
        edge_var.extend_from_slice(row);
    }
    row_start.push(edge_var.len());
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &v) in edge_var.iter().enumerate() {
        var_edges[v].push(e);
    }

    let mut v2c: Vec<f64> = edge_var.iter().map(|&v| prior[v]).collect();
    let mut c2v = vec![0.0; edge_var.len()];
    let mut post = prior.clone();
    let mut tanh_buf = Vec::new();
    let mut suffix = Vec::new();
    let mut iterations_run = 0;
    let mut hard = vec![0u8; n];

    for _ in 0..iterations {
        iterations_run += 1;
        for c in 0..rows.len() {
            let (s, e) = (row_start[c], row_start[c + 1]);
            tanh_buf.clear();
            tanh_buf.extend(v2c[s..e].iter().map(|l| (0.5 * l).tanh()));
            // Exclusive products via prefix/suffix so zero messages are safe.
            suffix.clear();
            suffix.resize(tanh_buf.len() + 1, 1.0);
            for i in (0..tanh_buf.len()).rev() {
                suffix[i] = suffix[i + 1] * tanh_buf[i];
            }
            let mut prefix = 1.0;
            for (i, t) in tanh_buf.iter().enumerate() {
                c2v[s + i] = check_message(prefix * suffix[i + 1]);
                prefix *= t;
            }
        }
        for v in 0..n {
            let total: f64 = var_edges[v].iter().map(|&e| c2v[e]).sum();
            post[v] = prior[v] + total;
            for &e in &var_edges[v] {
                v2c[e] = post[v] - c2v[e];
            }
            hard[v] = u8::from(post[v] < 0.0);
        }
        if early_exit && code.syndrome_weight(&hard) == 0 {
            break;
        }
    }

    let extrinsic: Vec<f64> = (0..n).map(|v| post[v] - prior[v]).collect();
    let syndrome_weight = code.syndrome_weight(&hard);
    DecodeOutput {
        posterior: BitBeliefs::new(post.iter().map(|&l| llr_to_prob(l)).collect(), BeliefRole::APosteriori),
        extrinsic: BitBeliefs::new(extrinsic.iter().map(|&l| llr_to_prob(l)).collect(), BeliefRole::Extrinsic),
        syndrome_ok: syndrome_weight == 0,
        syndrome_weight,
        iterations_run,
    }
}
