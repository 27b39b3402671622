//! Comparison smoothers: penalized Fourier and B-spline regression, and
//! Nadaraya-Watson smoothing with a Gaussian kernel.
//!
//! All three act on curves sampled at `t_i = i / d`, `i = 1..=d`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Default number of basis functions for either basis.
pub const DEFAULT_N_BASIS: usize = 25;
/// Cubic splines.
pub const BSPLINE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Fourier,
    BSpline,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Fourier => "fourier",
            BasisKind::BSpline => "bspline",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" => Ok(BasisKind::BSpline),
            other => Err(Error::InvalidParameter(format!("unknown basis {other:?}"))),
        }
    }
}

fn grid(d: usize) -> Vec<f64> {
    (1..=d).map(|i| i as f64 / d as f64).collect()
}

/// Fourier design on `t = i/d`: column 0 is constant, then `cos(2 pi k t)`,
/// `sin(2 pi k t)` for `k = 1, 2, ...`.
pub fn fourier_design(d: usize, n_basis: usize) -> DMatrix<f64> {
    let t = grid(d);
    DMatrix::from_fn(d, n_basis, |i, j| {
        if j == 0 {
            return 1.0;
        }
        let k = j.div_ceil(2);
        let arg = 2.0 * PI * k as f64 * t[i];
        if j % 2 == 1 {
            arg.cos()
        } else {
            arg.sin()
        }
    })
}

/// Exact `int_0^1 phi_j^{(m)} phi_k^{(m)}` for the Fourier design; diagonal.
pub fn fourier_penalty(n_basis: usize, order: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_basis, n_basis, |i, j| {
        if i != j {
            0.0
        } else if i == 0 {
            if order == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let k = i.div_ceil(2);
            0.5 * (2.0 * PI * k as f64).powi(2 * order as i32)
        }
    })
}

/// Clamped cubic B-spline basis with equispaced breakpoints on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    order: usize,
    n_basis: usize,
    lo: f64,
    hi: f64,
}

impl BSplineBasis {
    pub fn new(n_basis: usize, order: usize, lo: f64, hi: f64) -> Result<Self> {
        if n_basis < order {
            return Err(Error::InvalidParameter(format!(
                "need at least {order} B-spline functions, got {n_basis}"
            )));
        }
        if !(hi > lo) {
            return Err(Error::InvalidParameter("empty B-spline domain".into()));
        }
        let spans = n_basis - order + 1;
        let mut knots = vec![lo; order];
        for i in 1..spans {
            knots.push(lo + (hi - lo) * i as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(hi, order));
        Ok(Self {
            knots,
            order,
            n_basis,
            lo,
            hi,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Distinct breakpoints `lo = b_0 < ... < b_s = hi`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[self.order - 1..self.knots.len() - self.order + 1]
    }

    /// Values of all basis functions' `deriv`-th derivative at `x`.
    pub fn eval(&self, x: f64, deriv: usize) -> Vec<f64> {
        let t = &self.knots;
        let k = self.order;
        if deriv >= k {
            return vec![0.0; self.n_basis];
        }
        let q0 = k - deriv;
        let x = x.clamp(self.lo, self.hi);

        // Order-1 indicators; the right end belongs to the last nonempty span.
        let m = t.len() - 1;
        let mut vals = vec![0.0; m];
        let span = if x >= self.hi {
            (0..m).rev().find(|&i| t[i] < t[i + 1]).expect("nonempty domain")
        } else {
            (0..m).find(|&i| t[i] <= x && x < t[i + 1]).expect("x inside domain")
        };
        vals[span] = 1.0;

        for q in 2..=q0 {
            let n = t.len() - q;
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut v = 0.0;
                let d1 = t[i + q - 1] - t[i];
                if d1 > 0.0 {
                    v += (x - t[i]) / d1 * vals[i];
                }
                let d2 = t[i + q] - t[i + 1];
                if d2 > 0.0 {
                    v += (t[i + q] - x) / d2 * vals[i + 1];
                }
                next[i] = v;
            }
            vals = next;
        }
        // Raise the order back to k, differentiating once per step.
        for q in (q0 + 1)..=k {
            let n = t.len() - q;
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut v = 0.0;
                let d1 = t[i + q - 1] - t[i];
                if d1 > 0.0 {
                    v += vals[i] / d1;
                }
                let d2 = t[i + q] - t[i + 1];
                if d2 > 0.0 {
                    v -= vals[i + 1] / d2;
                }
                next[i] = (q - 1) as f64 * v;
            }
            vals = next;
        }
        vals
    }

    pub fn design(&self, points: &[f64]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(points.len(), self.n_basis);
        for (i, &x) in points.iter().enumerate() {
            for (j, v) in self.eval(x, 0).into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        b
    }

    /// `int phi_i^{(m)} phi_j^{(m)}` by 7-point Gauss-Legendre on each span.
    pub fn penalty(&self, deriv: usize) -> DMatrix<f64> {
        let mut omega = DMatrix::zeros(self.n_basis, self.n_basis);
        for w in self.breakpoints().windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, weight) in GAUSS_LEGENDRE_7 {
                let vals = self.eval(mid + half * node, deriv);
                for i in 0..self.n_basis {
                    if vals[i] == 0.0 {
                        continue;
                    }
                    for j in i..self.n_basis {
                        omega[(i, j)] += half * weight * vals[i] * vals[j];
                    }
                }
            }
        }
        omega.fill_lower_triangle_with_upper_triangle();
        omega
    }
}

const GAUSS_LEGENDRE_7: [(f64, f64); 7] = [
    (0.0, 0.417_959_183_673_469_4),
    (-0.405_845_151_377_397_2, 0.381_830_050_505_118_9),
    (0.405_845_151_377_397_2, 0.381_830_050_505_118_9),
    (-0.741_531_185_599_394_4, 0.279_705_391_489_276_7),
    (0.741_531_185_599_394_4, 0.279_705_391_489_276_7),
    (-0.949_107_912_342_758_5, 0.129_484_966_168_869_7),
    (0.949_107_912_342_758_5, 0.129_484_966_168_869_7),
];

/// Penalized basis regression `B (B^T B + alpha Omega)^{-1} B^T`, stored as its
/// `d x d` hat matrix.
#[derive(Debug, Clone)]
pub struct BasisSmoother {
    kind: BasisKind,
    n_basis: usize,
    penalty_order: usize,
    alpha: f64,
    design: DMatrix<f64>,
    penalty: DMatrix<f64>,
    hat: DMatrix<f64>,
}

impl BasisSmoother {
    pub fn new(kind: BasisKind, n_basis: usize, penalty_order: usize, alpha: f64, d: usize) -> Result<Self> {
        let (design, penalty) = basis_matrices(kind, n_basis, penalty_order, d)?;
        Self::from_matrices(kind, penalty_order, alpha, design, penalty)
    }

    /// Reuses a design and roughness matrix, e.g. across an alpha grid.
    pub fn from_matrices(
        kind: BasisKind,
        penalty_order: usize,
        alpha: f64,
        design: DMatrix<f64>,
        penalty: DMatrix<f64>,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        let n_basis = design.ncols();
        let system = design.transpose() * &design + &penalty * alpha;
        let scale = system.diagonal().amax().max(1.0);
        let chol = nalgebra::Cholesky::new(system.clone())
            .filter(|c| c.l_dirty().diagonal().iter().all(|v| *v > 1e-7 * scale.sqrt()))
            .ok_or_else(|| {
                Error::Singular(format!(
                    "{kind} basis with {n_basis} functions is rank deficient at alpha = {alpha}"
                ))
            })?;
        let coef_map = chol.solve(&design.transpose());
        let hat = &design * coef_map;
        Ok(Self {
            kind,
            n_basis,
            penalty_order,
            alpha,
            design,
            penalty,
            hat,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn penalty_order(&self) -> usize {
        self.penalty_order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn hat(&self) -> &DMatrix<f64> {
        &self.hat
    }

    pub fn effective_df(&self) -> f64 {
        self.hat.trace()
    }

    pub fn apply(&self, curve: &[f64]) -> Result<Vec<f64>> {
        check_len(self.hat.nrows(), curve.len())?;
        Ok((&self.hat * DVector::from_column_slice(curve)).data.into())
    }
}

/// Design and roughness matrices for a basis on the grid `i/d`.
pub fn basis_matrices(
    kind: BasisKind,
    n_basis: usize,
    penalty_order: usize,
    d: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_basis == 0 || d == 0 {
        return Err(Error::InvalidParameter("basis needs d >= 1 and n_basis >= 1".into()));
    }
    Ok(match kind {
        BasisKind::Fourier => (fourier_design(d, n_basis), fourier_penalty(n_basis, penalty_order)),
        BasisKind::BSpline => {
            let t = grid(d);
            let basis = BSplineBasis::new(n_basis, BSPLINE_ORDER, t[0], t[d - 1])?;
            (basis.design(&t), basis.penalty(penalty_order))
        }
    })
}

/// Fits one curve with a penalized basis.
pub fn fit_basis(kind: BasisKind, n_basis: usize, penalty_order: usize, alpha: f64, curve: &[f64]) -> Result<Vec<f64>> {
    BasisSmoother::new(kind, n_basis, penalty_order, alpha, curve.len())?.apply(curve)
}

/// Nadaraya-Watson weights `exp(-(t - s)^2 / (2 h^2 d^2))` on integer
/// positions, each row rescaled to sum to one.
#[derive(Debug, Clone)]
pub struct KernelSmoother {
    bandwidth: f64,
    weights: DMatrix<f64>,
}

impl KernelSmoother {
    pub fn new(d: usize, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        let scale = 2.0 * bandwidth * bandwidth * (d as f64) * (d as f64);
        let mut weights = DMatrix::from_fn(d, d, |t, s| {
            let diff = t as f64 - s as f64;
            (-diff * diff / scale).exp()
        });
        for mut row in weights.row_iter_mut() {
            let total: f64 = row.sum();
            row /= total;
        }
        Ok(Self { bandwidth, weights })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn apply(&self, curve: &[f64]) -> Result<Vec<f64>> {
        check_len(self.weights.nrows(), curve.len())?;
        Ok((&self.weights * DVector::from_column_slice(curve)).data.into())
    }
}

/// Smooths one curve with a Gaussian kernel.
pub fn kernel_smooth(curve: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    KernelSmoother::new(curve.len(), bandwidth)?.apply(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::sinusoid;
    use crate::stats::mse;

    fn wiggle(d: usize) -> Vec<f64> {
        (0..d).map(|i| ((i * i) as f64 * 0.37).sin() + 0.1 * i as f64).collect()
    }

    #[test]
    fn saturated_fourier_interpolates() {
        for d in [21, 30] {
            let x = wiggle(d);
            let fit = fit_basis(BasisKind::Fourier, d, 2, 0.0, &x).unwrap();
            assert!(x.iter().zip(&fit).all(|(a, b)| (a - b).abs() < 1e-8), "d={d}");
        }
    }

    #[test]
    fn constants_are_preserved() {
        let c = vec![0.8; 60];
        for kind in [BasisKind::Fourier, BasisKind::BSpline] {
            let fit = fit_basis(kind, 25, 2, 10.0, &c).unwrap();
            assert!(fit.iter().all(|v| (v - 0.8).abs() < 1e-10), "{kind}");
        }
        for h in [1e-3, 0.05, 10.0] {
            let fit = kernel_smooth(&c, h).unwrap();
            assert!(fit.iter().all(|v| (v - 0.8).abs() < 1e-12));
        }
    }

    #[test]
    fn fourier_recovers_pure_harmonic() {
        let d = 100;
        let f = sinusoid(d);
        for alpha in [1e-8, 1e-6, 1e-5] {
            let fit = fit_basis(BasisKind::Fourier, 13, 2, alpha, &f).unwrap();
            assert!(mse(&fit, &f) < 1e-3, "alpha={alpha}");
        }
    }

    #[test]
    fn rank_deficient_unpenalized_fit() {
        let x = wiggle(10);
        assert!(matches!(
            fit_basis(BasisKind::BSpline, 25, 2, 0.0, &x),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn kernel_limits() {
        let x = wiggle(40);
        let tiny = kernel_smooth(&x, 0.1 / 40.0 / 10.0).unwrap();
        assert!(x.iter().zip(&tiny).all(|(a, b)| (a - b).abs() < 1e-12));
        let wide = kernel_smooth(&x, 1e6).unwrap();
        let m = crate::stats::mean(&x);
        assert!(wide.iter().all(|v| (v - m).abs() < 1e-9));
    }

    #[test]
    fn kernel_rows_are_stochastic() {
        let k = KernelSmoother::new(50, 0.05).unwrap();
        for row in k.weights().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v >= 0.0));
        }
        // Interior rows far from the boundary are symmetric.
        let w = k.weights();
        assert!((w[(25, 23)] - w[(25, 27)]).abs() < 1e-15);
    }

    #[test]
    fn bspline_partition_of_unity_and_derivatives() {
        let b = BSplineBasis::new(12, 4, 0.0, 1.0).unwrap();
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let v = b.eval(x, 0);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(b.eval(x, 1).iter().sum::<f64>().abs() < 1e-10);
        }
        // Central difference check of the second derivative.
        let h = 1e-4;
        let x = 0.41;
        let (p, m, c) = (b.eval(x + h, 0), b.eval(x - h, 0), b.eval(x, 0));
        let d2 = b.eval(x, 2);
        for i in 0..12 {
            let fd = (p[i] - 2.0 * c[i] + m[i]) / (h * h);
            assert!(
                (fd - d2[i]).abs() < 1e-3 * (1.0 + d2[i].abs()),
                "{i}: {fd} vs {}",
                d2[i]
            );
        }
    }

    #[test]
    fn bspline_penalty_annihilates_lines() {
        let b = BSplineBasis::new(15, 4, 0.0, 1.0).unwrap();
        let omega = b.penalty(2);
        // Greville abscissae give the coefficients of the identity function.
        let t = &b.knots;
        let line = DVector::from_fn(15, |i, _| (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0);
        let ones = DVector::from_element(15, 1.0);
        assert!((&omega * &line).amax() < 1e-9);
        assert!((&omega * &ones).amax() < 1e-9);
        assert!((&omega - omega.transpose()).amax() < 1e-12);
    }

    #[test]
    fn effective_df_decreases_in_alpha() {
        let mut last = f64::INFINITY;
        for alpha in [1e-6, 1e-4, 1e-2, 1.0] {
            let s = BasisSmoother::new(BasisKind::BSpline, 25, 2, alpha, 80).unwrap();
            assert!(s.effective_df() < last);
            last = s.effective_df();
        }
    }
}
