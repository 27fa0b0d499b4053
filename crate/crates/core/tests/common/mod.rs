//! Independent reference computations for the integration tests.
//!
//! Nothing here goes through the crate's linear algebra: normal equations
//! are formed explicitly and solved by Gaussian elimination with partial
//! pivoting.
#![allow(dead_code, clippy::needless_range_loop)]

use daisy_mimo::rng::{derive_seed, random_bits};
use daisy_mimo::signal_model::{modulate, transmit, ChannelMatrix, Constellation, ReceivedVector};
use daisy_mimo::C64;

pub type Mat = Vec<Vec<C64>>;

pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Solves `A X = B` for square `A`.
pub fn solve(mut a: Mat, mut b: Mat) -> Mat {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.norm() > 1e-300, "singular system");
        for row in (col + 1)..n {
            let f = a[row][col] / p;
            if f == zero() {
                continue;
            }
            for j in col..n {
                let v = a[col][j];
                a[row][j] -= f * v;
            }
            for j in 0..b[row].len() {
                let v = b[col][j];
                b[row][j] -= f * v;
            }
        }
    }
    let rhs = b[0].len();
    let mut x = vec![vec![zero(); rhs]; n];
    for row in (0..n).rev() {
        for j in 0..rhs {
            let mut acc = b[row][j];
            for k in (row + 1)..n {
                acc -= a[row][k] * x[k][j];
            }
            x[row][j] = acc / a[row][row];
        }
    }
    x
}

/// `HᴴH + ridge · I`.
pub fn gramian(h: &ChannelMatrix, ridge: f64) -> Mat {
    let k = h.k_users();
    let mut g = vec![vec![zero(); k]; k];
    for n in 0..h.m_antennas() {
        for i in 0..k {
            for j in 0..k {
                g[i][j] += h.get(n, i).conj() * h.get(n, j);
            }
        }
    }
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += ridge;
    }
    g
}

/// `Hᴴ y` as a column.
pub fn h_adj_y(h: &ChannelMatrix, y: &[C64]) -> Mat {
    (0..h.k_users())
        .map(|j| vec![(0..h.m_antennas()).map(|n| h.get(n, j).conj() * y[n]).sum()])
        .collect()
}

pub fn identity(k: usize) -> Mat {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { C64::new(1.0, 0.0) } else { zero() })
                .collect()
        })
        .collect()
}

/// `(ridge·I + HᴴH)⁻¹ Hᴴ y`.
pub fn regularized_ls(h: &ChannelMatrix, y: &[C64], ridge: f64) -> Vec<C64> {
    solve(gramian(h, ridge), h_adj_y(h, y))
        .into_iter()
        .map(|r| r[0])
        .collect()
}

/// `(I + HᴴH)⁻¹`.
pub fn ridge_inverse(h: &ChannelMatrix) -> Mat {
    solve(gramian(h, 1.0), identity(h.k_users()))
}

pub fn rel_err(got: &[C64], want: &[C64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

pub fn flatten(m: &Mat) -> Vec<C64> {
    m.iter().flatten().copied().collect()
}

/// `res` independent 16QAM resource elements through `h`.
pub fn re_batch(
    h: &ChannelMatrix,
    res: usize,
    snr_db: f64,
    seed: u64,
) -> (Vec<Vec<C64>>, Vec<ReceivedVector>) {
    let c = Constellation::new(16).unwrap();
    let k = h.k_users();
    (0..res as u64)
        .map(|r| {
            let bits = random_bits(4 * k, derive_seed(seed, &[r, 0]));
            let s = modulate(&bits, &c, k).unwrap();
            let y = transmit(h, &s, snr_db, derive_seed(seed, &[r, 1])).unwrap();
            (s.symbols, y)
        })
        .unzip()
}
