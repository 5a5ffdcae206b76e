//! Dense GF(2) elimination used to derive a systematic encoder.

pub(super) struct Systematic {
    pub info_positions: Vec<usize>,
    pub parity_positions: Vec<usize>,
    pub generator: Vec<Vec<u64>>,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn get(row: &[u64], i: usize) -> bool {
    row[i / 64] >> (i % 64) & 1 == 1
}

pub(super) fn pack(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; words(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            out[i / 64] |= 1 << (i % 64);
        }
    }
    out
}

pub(super) fn dot(a: &[u64], b: &[u64]) -> u8 {
    (a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum::<u32>() & 1) as u8
}

/// Reduced row echelon form of `H`; pivot columns become parity positions.
pub(super) fn systematic_form(n: usize, check_rows: &[Vec<usize>]) -> Systematic {
    let w = words(n);
    let mut rows: Vec<Vec<u64>> = check_rows
        .iter()
        .map(|r| {
            let mut v = vec![0u64; w];
            for &c in r {
                v[c / 64] ^= 1 << (c % 64);
            }
            v
        })
        .collect();

    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        if rank == rows.len() {
            break;
        }
        let Some(p) = (rank..rows.len()).find(|&r| get(&rows[r], col)) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && get(row, col) {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        pivots.push(col);
        rank += 1;
    }

    let mut is_pivot = vec![false; n];
    pivots.iter().for_each(|&c| is_pivot[c] = true);
    let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let generator = rows[..rank]
        .iter()
        .map(|row| {
            let bits: Vec<u8> = info_positions.iter().map(|&c| u8::from(get(row, c))).collect();
            pack(&bits)
        })
        .collect();
    Systematic { info_positions, parity_positions: pivots, generator }
}
