//! Banded roughness penalties `P = D^T D` built from stencils, their convex
//! blends, and multi-order aggregates.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::banded::SymBanded;
use crate::error::{check_len, Error, Result};
use crate::stencils::{Stencil, StencilFamily};

/// Symmetric positive semi-definite banded penalty matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    band: SymBanded,
}

impl PenaltyMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            band: SymBanded::zeros(dim, 0),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            band: SymBanded::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.band.dim()
    }

    pub fn band_half_width(&self) -> usize {
        self.band.bandwidth()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band.get(i, j)
    }

    pub fn banded(&self) -> &SymBanded {
        &self.band
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.band.mul_vec(x)
    }

    /// `x^T P x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let px = self.mul_vec(x)?;
        Ok(px.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            band: self.band.scaled(c),
        }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self> {
        Ok(Self {
            band: self.band.add_scaled(c, &other.band)?,
        })
    }

    pub fn is_zero(&self) -> bool {
        (0..self.dim()).all(|i| (i.saturating_sub(self.band_half_width())..=i).all(|j| self.get(i, j) == 0.0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.band.to_dense()
    }

    /// Ascending eigenvalues from a dense symmetric eigensolver.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dense())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// How multi-order penalties are combined into a smoother.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One order, one blended penalty.
    Single,
    /// Orders applied one after another, highest first.
    Sequential,
    /// One solve against the weighted sum over orders.
    Simultaneous,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "sequential" => Ok(Mode::Sequential),
            "simultaneous" => Ok(Mode::Simultaneous),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Sequential => "sequential",
            Mode::Simultaneous => "simultaneous",
        })
    }
}

/// Orders, blend weight and per-order strengths of a penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    orders: Vec<usize>,
    eta: f64,
    alphas: Vec<f64>,
    mode: Mode,
}

impl PenaltySpec {
    pub fn new(orders: Vec<usize>, eta: f64, alphas: Vec<f64>, mode: Mode) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Empty("order list"));
        }
        check_len(orders.len(), alphas.len())?;
        check_eta(eta)?;
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {a}")));
        }
        if mode == Mode::Single && orders.len() != 1 {
            return Err(Error::InvalidParameter("single mode takes exactly one order".into()));
        }
        if orders.contains(&0) {
            return Err(Error::InvalidParameter("penalty orders start at 1".into()));
        }
        Ok(Self {
            orders,
            eta,
            alphas,
            mode,
        })
    }

    /// Single-order spec.
    pub fn single(order: usize, eta: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![order], eta, vec![alpha], Mode::Single)
    }

    /// Orders `max_order, ..., 1` sharing one alpha list (given highest first).
    pub fn descending(max_order: usize, eta: f64, alphas: Vec<f64>, mode: Mode) -> Result<Self> {
        Self::new((1..=max_order).rev().collect(), eta, alphas, mode)
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// `(order, alpha)` pairs sorted by decreasing order.
    pub fn descending_steps(&self) -> Vec<(usize, f64)> {
        let mut steps: Vec<(usize, f64)> = self.orders.iter().copied().zip(self.alphas.iter().copied()).collect();
        steps.sort_by(|a, b| b.0.cmp(&a.0));
        steps
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")))
    }
}

/// `D^T D` where `D` has one row per fully supported location.
pub fn penalty_from_stencil(stencil: &Stencil, dim: usize) -> Result<PenaltyMatrix> {
    let rows = stencil.output_len(dim)?;
    let w = stencil.weights();
    let mut band = SymBanded::zeros(dim, 2 * stencil.half_width());
    for start in 0..rows {
        for (a, wa) in w.iter().enumerate() {
            if *wa == 0.0 {
                continue;
            }
            for (b, wb) in w.iter().enumerate().take(a + 1) {
                if *wb != 0.0 {
                    band.add(start + a, start + b, wa * wb);
                }
            }
        }
    }
    Ok(PenaltyMatrix { band })
}

/// `(1 - eta) * standard + eta * calibrated`.
pub fn blend(standard: &PenaltyMatrix, calibrated: &PenaltyMatrix, eta: f64) -> Result<PenaltyMatrix> {
    check_len(standard.dim(), calibrated.dim())?;
    check_eta(eta)?;
    if eta == 0.0 {
        return Ok(standard.clone());
    }
    if eta == 1.0 {
        return Ok(calibrated.clone());
    }
    standard.scaled(1.0 - eta).add_scaled(eta, calibrated)
}

pub(crate) fn find_order(list: &[Stencil], order: usize) -> Result<&Stencil> {
    list.iter()
        .find(|s| s.order() == order)
        .ok_or(Error::MissingOrder(order))
}

/// Blended order-`order` penalty from the binomial and decorrelated stencils.
pub fn order_penalty(
    family: &StencilFamily,
    binomials: &[Stencil],
    order: usize,
    eta: f64,
    dim: usize,
) -> Result<PenaltyMatrix> {
    check_eta(eta)?;
    let calibrated = family.get(order)?;
    let standard = find_order(binomials, order)?;
    let p_cal = if eta > 0.0 {
        Some(penalty_from_stencil(calibrated, dim)?)
    } else {
        None
    };
    let p_std = if eta < 1.0 {
        Some(penalty_from_stencil(standard, dim)?)
    } else {
        None
    };
    match (p_std, p_cal) {
        (Some(s), Some(c)) => blend(&s, &c, eta),
        (Some(s), None) => Ok(s),
        (None, Some(c)) => Ok(c),
        (None, None) => unreachable!("eta is in [0, 1]"),
    }
}

/// `sum_r alpha_r {(1 - eta) D_r^T D_r + eta Dbar_r^T Dbar_r}`.
pub fn aggregate(
    family: &StencilFamily,
    binomials: &[Stencil],
    spec: &PenaltySpec,
    dim: usize,
) -> Result<PenaltyMatrix> {
    if spec.mode() == Mode::Sequential {
        return Err(Error::InvalidParameter(
            "aggregate penalties are for simultaneous or single mode".into(),
        ));
    }
    let mut total = PenaltyMatrix::zeros(dim);
    for (&r, &alpha) in spec.orders().iter().zip(spec.alphas()) {
        let p = order_penalty(family, binomials, r, spec.eta(), dim)?;
        total = total.add_scaled(alpha, &p)?;
    }
    Ok(total)
}
