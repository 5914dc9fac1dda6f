//! Complex banded matrices with an LU factorization using partial pivoting,
//! laid out like LAPACK's `gbtrf`: row `r` stores columns
//! `r − kl ..= r + kl + ku` so that pivoting fill fits in place.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    rows: Vec<Vec<C64>>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, rows: vec![vec![ZERO; 2 * kl + ku + 1]; n] }
    }

    fn slot(&self, r: usize, c: usize) -> usize {
        c + self.kl - r
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        if c + self.kl < r || c > r + self.kl + self.ku {
            return ZERO;
        }
        self.rows[r][self.slot(r, c)]
    }

    /// `A[r][c] += v`; panics outside the declared band.
    pub fn add(&mut self, r: usize, c: usize, v: C64) {
        assert!(c + self.kl >= r && c <= r + self.ku, "entry ({r},{c}) outside band kl={}, ku={}", self.kl, self.ku);
        let s = self.slot(r, c);
        self.rows[r][s] += v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.rows[r][self.slot(r, c)] * x[c]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0; n];
        let mut mult = vec![vec![ZERO; kl]; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm();
            for r in k + 1..=last {
                let v = self.get(r, k).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular);
            }
            piv[k] = p;
            let reach = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=reach {
                    let (sk, sp) = (self.slot(k, c), self.slot(p, c));
                    let t = self.rows[k][sk];
                    self.rows[k][sk] = self.rows[p][sp];
                    self.rows[p][sp] = t;
                }
            }
            let pivot = self.rows[k][self.slot(k, k)];
            for r in k + 1..=last {
                let sr = self.slot(r, k);
                let l = self.rows[r][sr] / pivot;
                self.rows[r][sr] = ZERO;
                mult[k][r - k - 1] = l;
                if l == ZERO {
                    continue;
                }
                for c in k + 1..=reach {
                    let v = self.rows[k][self.slot(k, c)];
                    let s = self.slot(r, c);
                    self.rows[r][s] -= l * v;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, upper: self, mult, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    upper: BandedMatrix,
    mult: Vec<Vec<C64>>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for (i, l) in self.mult[k].iter().enumerate() {
                let r = k + 1 + i;
                if r >= n {
                    break;
                }
                b[r] -= l * bk;
            }
        }
        for k in (0..n).rev() {
            let reach = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            for c in k + 1..=reach {
                s -= self.upper.get(k, c) * b[c];
            }
            b[k] = s / self.upper.get(k, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_against_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, kl, ku) = (40, 3, 2);
        let mut a = BandedMatrix::new(n, kl, ku);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // zero diagonal on every third row forces pivoting
                if r == c && r % 3 == 0 {
                    continue;
                }
                a.add(r, c, C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            }
        }
        let x: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0 - i as f64 * 0.1)).collect();
        let mut b = a.matvec(&x);
        a.factor().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).norm() < 1e-9, "{u} vs {v}");
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = BandedMatrix::new(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular)));
    }
}
