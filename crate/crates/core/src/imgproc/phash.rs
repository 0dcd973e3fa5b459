//! DCT perceptual hash.
//!
//! The image is area-resized to 32x32, transformed with an orthonormal 2-D
//! DCT-II, and the first 65 coefficients in zigzag order are taken. The DC
//! term is dropped and each of the remaining 64 becomes one bit: set iff the
//! coefficient exceeds the median of the 64. Dropping DC makes the hash blind
//! to uniform brightness shifts.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

const SIDE: usize = 32;
const HASH_BITS: usize = 64;

/// A 64-bit perceptual fingerprint; bit `i` is the `i`-th AC coefficient in zigzag order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn distance(&self, other: &PerceptualHash) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Number of differing bits between two equal-length bitstrings packed into words.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len() * 64, b.len() * 64));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

// cos((2x+1) u pi / 2N) scaled by the orthonormal factor, indexed [u][x].
fn dct_basis() -> &'static [[f64; SIDE]; SIDE] {
    static BASIS: OnceLock<[[f64; SIDE]; SIDE]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; SIDE]; SIDE];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / SIDE as f64).sqrt()
            } else {
                (2.0 / SIDE as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * x + 1) as f64 * u as f64 * PI / (2 * SIDE) as f64).cos();
            }
        }
        m
    })
}

/// `(row, col)` frequency pairs in zigzag order, `count` of them.
pub(crate) fn zigzag(count: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut s = 0;
    while out.len() < count {
        let diag: Vec<(usize, usize)> = (0..=s).map(|r| (r, s - r)).collect();
        // Odd diagonals run top-right to bottom-left, even ones the reverse.
        if s % 2 == 1 {
            out.extend(diag);
        } else {
            out.extend(diag.into_iter().rev());
        }
        s += 1;
    }
    out.truncate(count);
    out
}

fn low_frequency_coefficients(g: &GrayImage) -> Vec<f64> {
    let small = g.resize(SIDE, SIDE);
    let basis = dct_basis();
    let order = zigzag(HASH_BITS + 1);
    let max_u = order.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0);

    // Column transform restricted to the needed horizontal frequencies.
    // rows_dct[y][v] = sum_x px(x, y) * basis[v][x]
    let mut rows_dct = vec![[0.0; SIDE]; SIDE];
    for (y, out) in rows_dct.iter_mut().enumerate() {
        let row = small.row(y);
        for v in 0..=max_u {
            out[v] = row.iter().zip(&basis[v]).map(|(p, b)| p * b).sum();
        }
    }
    order
        .iter()
        .map(|&(u, v)| (0..SIDE).map(|y| basis[u][y] * rows_dct[y][v]).sum())
        .collect()
}

pub fn phash(g: &GrayImage) -> PerceptualHash {
    let coeffs = low_frequency_coefficients(g);
    let ac = &coeffs[1..];
    let mut sorted = ac.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[HASH_BITS / 2 - 1] + sorted[HASH_BITS / 2]) / 2.0;
    let bits = ac
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &c)| if c > median { acc | 1 << i } else { acc });
    PerceptualHash(bits)
}
