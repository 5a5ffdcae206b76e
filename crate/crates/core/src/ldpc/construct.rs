//! Progressive edge placement for regular Tanner graphs.
//!
//! Variables are visited in a seeded random order; each edge goes to the
//! least-filled check that would not close a 4-cycle. When no such check
//! exists the edge closes one anyway and a later swap pass tries to break it.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::Result;

const ATTEMPTS: u64 = 8;
const REPAIR_ROUNDS: usize = 200_000;

pub(super) fn regular_rows(n: usize, dv: usize, dc: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if dv == 0 || dc < 2 || n == 0 {
        return Err(Error::Construction(format!("degenerate profile n={n} dv={dv} dc={dc}")));
    }
    if (n * dv) % dc != 0 {
        return Err(Error::Construction(format!("n*dv = {} not divisible by dc = {dc}", n * dv)));
    }
    let m = n * dv / dc;
    if dc > n || dv > m {
        return Err(Error::Construction(format!("dc={dc} exceeds n={n} or dv={dv} exceeds checks={m}")));
    }

    // Every variable needs C(dv,2) check pairs of its own for girth 6.
    let girth_six_possible = n * dv * (dv - 1) <= m * (m - 1);
    let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
    for attempt in 0..ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(seed, &[attempt]));
        let Some(mut rows) = place_edges(n, m, dv, dc, &mut rng) else {
            continue;
        };
        if !girth_six_possible {
            return Ok(rows);
        }
        let cycles = repair_four_cycles(n, &mut rows, &mut rng);
        if cycles == 0 {
            return Ok(rows);
        }
        if best.as_ref().is_none_or(|(c, _)| cycles < *c) {
            best = Some((cycles, rows));
        }
    }
    best.map(|(_, rows)| rows)
        .ok_or_else(|| Error::Construction(format!("could not place edges for n={n} dv={dv} dc={dc}")))
}

fn place_edges(n: usize, m: usize, dv: usize, dc: usize, rng: &mut SimRng) -> Option<Vec<Vec<usize>>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(dc); m];
    let mut cols: Vec<Vec<usize>> = vec![Vec::with_capacity(dv); n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut stamp = vec![usize::MAX; m];

    for (step, &v) in order.iter().enumerate() {
        for _ in 0..dv {
            // Mark checks that already share a variable with one of v's checks.
            let tag = step;
            for &c in &cols[v] {
                stamp[c] = tag;
                for &u in &rows[c] {
                    for &c2 in &cols[u] {
                        stamp[c2] = tag;
                    }
                }
            }
            let pick = |allow_blocked: bool, rng: &mut SimRng| {
                let mut best_fill = usize::MAX;
                let mut cands: Vec<usize> = Vec::new();
                for c in 0..m {
                    let fill = rows[c].len();
                    if fill >= dc || cols[v].contains(&c) {
                        continue;
                    }
                    if !allow_blocked && stamp[c] == tag {
                        continue;
                    }
                    if fill < best_fill {
                        best_fill = fill;
                        cands.clear();
                    }
                    if fill == best_fill {
                        cands.push(c);
                    }
                }
                (!cands.is_empty()).then(|| cands[rng.random_range(0..cands.len())])
            };
            let c = pick(false, rng).or_else(|| pick(true, rng))?;
            rows[c].push(v);
            cols[v].push(c);
        }
    }
    rows.iter_mut().for_each(|r| r.sort_unstable());
    Some(rows)
}

fn columns(n: usize, rows: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut cols = vec![Vec::new(); n];
    for (c, r) in rows.iter().enumerate() {
        r.iter().for_each(|&v| cols[v].push(c));
    }
    cols
}

/// Pairs of checks sharing more than one variable, counted per check pair.
fn four_cycle_pairs(rows: &[Vec<usize>], cols: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let m = rows.len();
    let mut count = vec![0u32; m];
    let mut out = Vec::new();
    for c in 0..m {
        let mut touched = Vec::new();
        for &v in &rows[c] {
            for &c2 in &cols[v] {
                if c2 > c {
                    if count[c2] == 0 {
                        touched.push(c2);
                    }
                    count[c2] += 1;
                }
            }
        }
        for c2 in touched {
            if count[c2] > 1 {
                out.push((c, c2));
            }
            count[c2] = 0;
        }
    }
    out
}

pub(super) fn has_four_cycle(rows: &[Vec<usize>], cols: &[Vec<usize>]) -> bool {
    !four_cycle_pairs(rows, cols).is_empty()
}

/// Degree-preserving edge swaps that break 4-cycles. Returns the number of
/// offending check pairs left.
fn repair_four_cycles(n: usize, rows: &mut [Vec<usize>], rng: &mut SimRng) -> usize {
    let m = rows.len();
    let mut cols = columns(n, rows);
    let mut bad = four_cycle_pairs(rows, &cols);
    let mut rounds = 0;
    while !bad.is_empty() && rounds < REPAIR_ROUNDS {
        let (c1, c2) = bad[rng.random_range(0..bad.len())];
        // A variable in both checks; move its c1 edge elsewhere.
        let shared: Vec<usize> = rows[c1].iter().copied().filter(|v| rows[c2].contains(v)).collect();
        let v = shared[rng.random_range(0..shared.len())];
        for _ in 0..64 {
            rounds += 1;
            let c3 = rng.random_range(0..m);
            if c3 == c1 || cols[v].contains(&c3) {
                continue;
            }
            let u = rows[c3][rng.random_range(0..rows[c3].len())];
            if cols[u].contains(&c1) {
                continue;
            }
            let before = local_conflicts(rows, &cols, &[c1, c3]);
            swap_edge(rows, &mut cols, v, c1, c3);
            swap_edge(rows, &mut cols, u, c3, c1);
            if local_conflicts(rows, &cols, &[c1, c3]) < before {
                break;
            }
            swap_edge(rows, &mut cols, u, c1, c3);
            swap_edge(rows, &mut cols, v, c3, c1);
        }
        bad = four_cycle_pairs(rows, &cols);
    }
    rows.iter_mut().for_each(|r| r.sort_unstable());
    bad.len()
}

fn swap_edge(rows: &mut [Vec<usize>], cols: &mut [Vec<usize>], v: usize, from: usize, to: usize) {
    rows[from].retain(|&x| x != v);
    rows[to].push(v);
    let slot = cols[v].iter().position(|&c| c == from).expect("edge present");
    cols[v][slot] = to;
}

fn local_conflicts(rows: &[Vec<usize>], cols: &[Vec<usize>], checks: &[usize]) -> usize {
    let mut total = 0;
    for &c in checks {
        let mut count = std::collections::HashMap::new();
        for &v in &rows[c] {
            for &c2 in &cols[v] {
                if c2 != c {
                    *count.entry(c2).or_insert(0usize) += 1;
                }
            }
        }
        total += count.values().filter(|&&k| k > 1).map(|k| k - 1).sum::<usize>();
    }
    total
}
