//! Symmetric banded storage and its Cholesky factorization.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Symmetric `n x n` matrix with half-bandwidth `bw`, lower band stored row by row.
///
/// Entry `(i, j)` with `i >= j` and `i - j <= bw` lives at `data[i * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        m.data.iter_mut().for_each(|v| *v = 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        if k > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + k]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        assert!(k <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        self.data[i * (self.bw + 1) + k] += v;
    }

    /// Same matrix stored with a wider band.
    pub fn widened(&self, bw: usize) -> Self {
        let mut out = Self::zeros(self.n, bw.max(self.bw));
        for i in 0..self.n {
            for k in 0..=self.bw.min(i) {
                out.data[i * (out.bw + 1) + k] = self.data[i * (self.bw + 1) + k];
            }
        }
        out
    }

    /// `self + c * other`, band is the wider of the two.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self> {
        check_len(self.n, other.n)?;
        let mut out = self.widened(other.bw);
        for i in 0..other.n {
            for k in 0..=other.bw.min(i) {
                out.data[i * (out.bw + 1) + k] += c * other.data[i * (other.bw + 1) + k];
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Largest `|a_ij|` over entries with `|i - j| > band`.
    pub fn max_outside(&self, band: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in (band + 1)..=self.bw.min(i) {
                worst = worst.max(self.data[i * (self.bw + 1) + k].abs());
            }
        }
        worst
    }

    /// Lower-triangular Cholesky factor `A = L L^T`, same band.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.data[i * w + (i - j)];
                let k0 = j.saturating_sub(bw).max(j0);
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Banded lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + 1 + self.bw).min(self.n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, bw: usize) -> SymBanded {
        let mut a = SymBanded::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 2.0 * bw as f64 + 1.0);
            for k in 1..=bw.min(i) {
                a.add(i, i - k, -1.0 / k as f64);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_against_dense() {
        for &(n, bw) in &[(1, 0), (5, 1), (12, 3), (30, 10)] {
            let a = spd(n, bw);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut x = b.clone();
            a.cholesky().unwrap().solve_in_place(&mut x);
            let ax = a.mul_vec(&x).unwrap();
            for (u, v) in ax.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
            let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
            for (u, v) in x.iter().zip(dense.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = SymBanded::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn add_scaled_widens() {
        let a = SymBanded::identity(4);
        let b = spd(4, 2);
        let c = a.add_scaled(0.5, &b).unwrap();
        assert_eq!(c.bandwidth(), 2);
        assert_eq!(c.get(0, 0), 1.0 + 0.5 * 5.0);
        assert_eq!(c.get(0, 2), 0.5 * -0.5);
        assert_eq!(c.get(3, 0), 0.0);
    }
}
