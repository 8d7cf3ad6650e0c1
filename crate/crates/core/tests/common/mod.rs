//! Oracles shared by the integration tests. They avoid the library's
//! enumeration, permanent and factorial code so that agreement is evidence.

#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// `(Σ_D Π w^d, number of tables)` by an odometer over every matrix with
/// `d_ij ≤ min(r_i, c_j)`.
pub fn brute_total(rows: &[u64], cols: &[u64], w: &[Vec<f64>]) -> (f64, u64) {
    let (m, n) = (rows.len(), cols.len());
    let caps: Vec<u64> = (0..m * n).map(|k| rows[k / n].min(cols[k % n])).collect();
    let mut d = vec![0u64; m * n];
    let mut total = 0.0;
    let mut count = 0;
    loop {
        let ok_rows = (0..m).all(|i| (0..n).map(|j| d[i * n + j]).sum::<u64>() == rows[i]);
        let ok_cols = (0..n).all(|j| (0..m).map(|i| d[i * n + j]).sum::<u64>() == cols[j]);
        if ok_rows && ok_cols {
            count += 1;
            let mut t = 1.0;
            for i in 0..m {
                for j in 0..n {
                    let e = d[i * n + j];
                    if e > 0 {
                        t *= w[i][j].powi(e as i32);
                    }
                }
            }
            total += t;
        }
        let mut k = 0;
        while k < m * n {
            d[k] += 1;
            if d[k] <= caps[k] {
                break;
            }
            d[k] = 0;
            k += 1;
        }
        if k == m * n {
            return (total, count);
        }
    }
}

/// Permanent by summing over all permutations (Heap's algorithm).
pub fn permanent_by_permutations(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut p: Vec<usize> = (0..n).collect();
    let term = |p: &[usize]| (0..n).map(|i| a[i][p[i]]).product::<f64>();
    let mut sum = term(&p);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            sum += term(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    sum
}

pub fn big_factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `α(R, C)` with exact integers, rounded once at the end.
pub fn big_alpha(rows: &[u64], cols: &[u64]) -> f64 {
    let n: u64 = rows.iter().sum();
    let side = |ms: &[u64]| -> (BigUint, BigUint) {
        ms.iter().fold((BigUint::one(), BigUint::one()), |(num, den), &t| {
            (num * big_factorial(t), den * BigUint::from(t).pow(t as u32))
        })
    };
    let (rn, rd) = side(rows);
    let (cn, cd) = side(cols);
    let (num, den) = if &rn * &cd <= &cn * &rd { (rn, rd) } else { (cn, cd) };
    let num = num * BigUint::from(n).pow(n as u32);
    let den = den * big_factorial(n);
    // 64 fractional bits before the single rounding
    let q: BigUint = (num << 64usize) / den;
    q.to_f64().unwrap() / 2f64.powi(64)
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..cols).map(|_| self.range(lo, hi)).collect()).collect()
    }

    /// `n` positive parts summing to `total`.
    pub fn composition(&mut self, total: u64, n: usize) -> Vec<u64> {
        let mut parts = vec![1u64; n];
        for _ in 0..total - n as u64 {
            parts[self.below(n as u64) as usize] += 1;
        }
        parts
    }
}
