//! Linear smoothers `S = (I + alpha P)^{-1}` and the multi-order schemes built on them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::banded::{BandCholesky, SymBanded};
use crate::error::{check_len, Error, Result};
use crate::penalty::{aggregate, order_penalty, Mode, PenaltyMatrix, PenaltySpec};
use crate::stencils::{Stencil, StencilFamily};

/// Dimensions below this use a dense Cholesky factorization.
pub const DENSE_BELOW: usize = 64;

#[derive(Debug, Clone)]
enum Factor {
    Identity,
    Banded(BandCholesky),
    Dense(Cholesky<f64, Dyn>),
}

/// Factorized `(I + alpha P)^{-1}` with its trace.
#[derive(Debug, Clone)]
pub struct Smoother {
    dim: usize,
    alpha: f64,
    factor: Factor,
    trace: f64,
}

impl Smoother {
    /// Factorizes `I + alpha P` once and computes `tr S` exactly.
    pub fn new(penalty: &PenaltyMatrix, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        let dim = penalty.dim();
        if alpha == 0.0 || penalty.is_zero() {
            return Ok(Self {
                dim,
                alpha,
                factor: Factor::Identity,
                trace: dim as f64,
            });
        }
        let system = SymBanded::identity(dim).add_scaled(alpha, penalty.banded())?;
        let (factor, trace) = if dim < DENSE_BELOW {
            let dense = system.to_dense();
            let chol =
                Cholesky::new(dense).ok_or_else(|| Error::Singular("dense Cholesky of I + alpha P failed".into()))?;
            let trace = chol.inverse().trace();
            (Factor::Dense(chol), trace)
        } else {
            let chol = system.cholesky()?;
            let mut trace = 0.0;
            let mut col = vec![0.0; dim];
            for i in 0..dim {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[i] = 1.0;
                chol.solve_in_place(&mut col);
                trace += col[i];
            }
            (Factor::Banded(chol), trace)
        };
        Ok(Self {
            dim,
            alpha,
            factor,
            trace,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `tr S`, the effective degrees of freedom.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.factor, Factor::Identity)
    }

    /// Solves `(I + alpha P) f = curve`.
    pub fn apply(&self, curve: &[f64]) -> Result<Vec<f64>> {
        let mut out = curve.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, buf: &mut [f64]) -> Result<()> {
        check_len(self.dim, buf.len())?;
        match &self.factor {
            Factor::Identity => {}
            Factor::Banded(chol) => chol.solve_in_place(buf),
            Factor::Dense(chol) => {
                let x = chol.solve(&DVector::from_column_slice(buf));
                buf.copy_from_slice(x.as_slice());
            }
        }
        Ok(())
    }

    /// `S` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut col = vec![0.0; self.dim];
        for j in 0..self.dim {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.apply_in_place(&mut col).expect("length matches");
            m.set_column(j, &DVector::from_column_slice(&col));
        }
        m
    }
}

/// Output of the sequential scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutput {
    /// Final estimate `f_1`.
    pub estimate: Vec<f64>,
    /// `(order, f_order)` for every step, highest order first.
    pub steps: Vec<(usize, Vec<f64>)>,
}

/// `f_r = (I + alpha_r P_eta^{(r)})^{-1} f_{r+1}` from the highest order down.
pub fn smooth_sequential(
    curve: &[f64],
    spec: &PenaltySpec,
    family: &StencilFamily,
    binomials: &[Stencil],
) -> Result<SequentialOutput> {
    if spec.mode() == Mode::Simultaneous {
        return Err(Error::InvalidParameter(
            "sequential smoothing needs a sequential or single spec".into(),
        ));
    }
    let dim = curve.len();
    let mut current = curve.to_vec();
    let mut steps = Vec::with_capacity(spec.orders().len());
    for (order, alpha) in spec.descending_steps() {
        let p = order_penalty(family, binomials, order, spec.eta(), dim)?;
        Smoother::new(&p, alpha)?.apply_in_place(&mut current)?;
        steps.push((order, current.clone()));
    }
    Ok(SequentialOutput {
        estimate: current,
        steps,
    })
}

/// One solve against the aggregate penalty `sum_r alpha_r P_eta^{(r)}`.
pub fn smooth_simultaneous(
    curve: &[f64],
    spec: &PenaltySpec,
    family: &StencilFamily,
    binomials: &[Stencil],
) -> Result<Vec<f64>> {
    if spec.mode() == Mode::Sequential {
        return Err(Error::InvalidParameter(
            "simultaneous smoothing needs a simultaneous or single spec".into(),
        ));
    }
    let p = aggregate(family, binomials, spec, curve.len())?;
    Smoother::new(&p, 1.0)?.apply(curve)
}

/// Dispatches on the spec's mode.
pub fn smooth(curve: &[f64], spec: &PenaltySpec, family: &StencilFamily, binomials: &[Stencil]) -> Result<Vec<f64>> {
    match spec.mode() {
        Mode::Sequential => Ok(smooth_sequential(curve, spec, family, binomials)?.estimate),
        Mode::Single | Mode::Simultaneous => smooth_simultaneous(curve, spec, family, binomials),
    }
}
