//! Per-curve tuning: GCV over a grid, oracle selection against a known truth,
//! and a data-driven default for the blend weight.

use crate::error::{check_len, Error, Result};
use crate::penalty::{order_penalty, Mode, PenaltyMatrix, PenaltySpec};
use crate::smoother::Smoother;
use crate::stats;
use crate::stencils::{Stencil, StencilFamily};

/// `count` log-spaced points from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && count >= 1) {
        return Err(Error::InvalidParameter(format!(
            "log grid needs 0 < min <= max and count >= 1, got ({min}, {max}, {count})"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Forty log-spaced points over `[1e-4, 1e4]`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 40).expect("static grid is valid")
}

/// `||(I - S) x||^2 / (d - tr S)^2`.
pub fn gcv_score(curve: &[f64], smoother: &Smoother) -> Result<f64> {
    check_len(smoother.dim(), curve.len())?;
    let d = curve.len() as f64;
    let denom = d - smoother.trace();
    if smoother.is_identity() || denom <= 1e-12 * d {
        return Err(Error::DegenerateDenominator);
    }
    let fitted = smoother.apply(curve)?;
    let resid: f64 = curve.iter().zip(&fitted).map(|(x, f)| (x - f) * (x - f)).sum();
    Ok(resid / (denom * denom))
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub alpha_hat: f64,
    pub score: f64,
    /// Every evaluated `(alpha, score)` in grid order.
    pub grid: Vec<(f64, f64)>,
    /// `tr S` at `alpha_hat`.
    pub effective_df: f64,
}

/// Index of the minimum score; near-ties go to the smallest alpha.
///
/// Scores within `1e-12 * (||x||^2 / d^2)` of the minimum count as ties so that
/// curves in the penalty null space, whose scores are zero up to rounding,
/// resolve to the lightest smoothing.
fn argmin_with_ties(scores: &[(f64, f64)], curve: &[f64]) -> usize {
    let d = curve.len() as f64;
    let min = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (stats::sum_sq(curve) / (d * d) + min);
    let mut best: Option<usize> = None;
    for (i, (alpha, score)) in scores.iter().enumerate() {
        if *score <= min + tol {
            match best {
                Some(b) if scores[b].0 <= *alpha => {}
                _ => best = Some(i),
            }
        }
    }
    best.expect("nonempty grid")
}

/// GCV over prebuilt smoothers (one per grid point).
pub fn select_with_smoothers(curve: &[f64], smoothers: &[Smoother]) -> Result<(usize, SelectionResult)> {
    if smoothers.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    let grid = smoothers
        .iter()
        .map(|s| Ok((s.alpha(), gcv_score(curve, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let i = argmin_with_ties(&grid, curve);
    let result = SelectionResult {
        alpha_hat: grid[i].0,
        score: grid[i].1,
        effective_df: smoothers[i].trace(),
        grid,
    };
    Ok((i, result))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    if let Some(a) = grid.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidParameter(format!("grid values must be > 0, got {a}")));
    }
    Ok(())
}

/// Builds one smoother per grid value.
pub fn smoothers_for_grid(penalty: &PenaltyMatrix, grid: &[f64]) -> Result<Vec<Smoother>> {
    check_grid(grid)?;
    grid.iter().map(|&a| Smoother::new(penalty, a)).collect()
}

/// Minimizes GCV over `grid` for `S = (I + alpha P)^{-1}`.
pub fn select_alpha(curve: &[f64], penalty: &PenaltyMatrix, grid: &[f64]) -> Result<SelectionResult> {
    check_len(penalty.dim(), curve.len())?;
    let smoothers = smoothers_for_grid(penalty, grid)?;
    Ok(select_with_smoothers(curve, &smoothers)?.1)
}

/// Result of step-wise GCV in the sequential scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialSelection {
    /// `(order, selection)` highest order first.
    pub steps: Vec<(usize, SelectionResult)>,
    pub estimate: Vec<f64>,
}

/// GCV at each step of the sequential scheme, conditioning on the previous output.
///
/// `grids[i]` belongs to `spec.orders()[i]`; the alphas stored in `spec` are ignored.
pub fn select_sequential(
    curve: &[f64],
    spec: &PenaltySpec,
    grids: &[Vec<f64>],
    family: &StencilFamily,
    binomials: &[Stencil],
) -> Result<SequentialSelection> {
    check_len(spec.orders().len(), grids.len())?;
    let mut order_grid: Vec<(usize, &Vec<f64>)> = spec.orders().iter().copied().zip(grids).collect();
    order_grid.sort_by(|a, b| b.0.cmp(&a.0));
    let mut current = curve.to_vec();
    let mut steps = Vec::with_capacity(order_grid.len());
    for (order, grid) in order_grid {
        let p = order_penalty(family, binomials, order, spec.eta(), curve.len())?;
        let smoothers = smoothers_for_grid(&p, grid)?;
        let (i, result) = select_with_smoothers(&current, &smoothers)?;
        smoothers[i].apply_in_place(&mut current)?;
        steps.push((order, result));
    }
    Ok(SequentialSelection {
        steps,
        estimate: current,
    })
}

/// Joint GCV choice of per-order alphas for the aggregate penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SimultaneousSelection {
    pub alphas: Vec<f64>,
    pub score: f64,
    pub effective_df: f64,
    pub evaluations: usize,
}

/// Full Cartesian search for up to two orders, otherwise two sweeps of
/// coordinate descent started from the middle of every grid.
pub fn select_simultaneous(
    curve: &[f64],
    orders: &[usize],
    eta: f64,
    grids: &[Vec<f64>],
    family: &StencilFamily,
    binomials: &[Stencil],
) -> Result<SimultaneousSelection> {
    check_len(orders.len(), grids.len())?;
    for g in grids {
        check_grid(g)?;
    }
    let dim = curve.len();
    let penalties = orders
        .iter()
        .map(|&r| order_penalty(family, binomials, r, eta, dim))
        .collect::<Result<Vec<_>>>()?;
    let mut evaluations = 0;
    let mut score_at = |idx: &[usize]| -> Result<(f64, f64)> {
        evaluations += 1;
        let mut total = PenaltyMatrix::zeros(dim);
        for ((p, g), &i) in penalties.iter().zip(grids).zip(idx) {
            total = total.add_scaled(g[i], p)?;
        }
        let s = Smoother::new(&total, 1.0)?;
        Ok((gcv_score(curve, &s)?, s.trace()))
    };

    let mut best_idx: Vec<usize>;
    let mut best: (f64, f64);
    if orders.len() <= 2 {
        best_idx = vec![0; orders.len()];
        best = score_at(&best_idx)?;
        let mut idx = vec![0; orders.len()];
        loop {
            // Odometer over the Cartesian grid, first index fastest.
            let mut k = 0;
            loop {
                if k == idx.len() {
                    break;
                }
                idx[k] += 1;
                if idx[k] < grids[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
            let s = score_at(&idx)?;
            if s.0 < best.0 {
                best = s;
                best_idx = idx.clone();
            }
        }
    } else {
        best_idx = grids.iter().map(|g| g.len() / 2).collect();
        best = score_at(&best_idx)?;
        for _sweep in 0..2 {
            for k in 0..orders.len() {
                let mut idx = best_idx.clone();
                for i in 0..grids[k].len() {
                    if i == best_idx[k] {
                        continue;
                    }
                    idx[k] = i;
                    let s = score_at(&idx)?;
                    if s.0 < best.0 {
                        best = s;
                        best_idx = idx.clone();
                    }
                }
            }
        }
    }
    Ok(SimultaneousSelection {
        alphas: best_idx.iter().zip(grids).map(|(&i, g)| g[i]).collect(),
        score: best.0,
        effective_df: best.1,
        evaluations,
    })
}

/// Simultaneous selection driven by a spec (its alphas are ignored).
pub fn select_simultaneous_spec(
    curve: &[f64],
    spec: &PenaltySpec,
    grids: &[Vec<f64>],
    family: &StencilFamily,
    binomials: &[Stencil],
) -> Result<SimultaneousSelection> {
    if spec.mode() == Mode::Sequential {
        return Err(Error::InvalidParameter("expected a simultaneous spec".into()));
    }
    select_simultaneous(curve, spec.orders(), spec.eta(), grids, family, binomials)
}

/// Best candidate by mean squared error against a known truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub index: usize,
    pub mse: f64,
    pub estimate: Vec<f64>,
}

/// Exhaustive oracle search; the first candidate wins ties.
pub fn oracle_select<C, F>(curve: &[f64], truth: &[f64], candidates: &[C], mut fit: F) -> Result<OracleChoice>
where
    F: FnMut(&C, &[f64]) -> Result<Vec<f64>>,
{
    check_len(curve.len(), truth.len())?;
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let mut best: Option<OracleChoice> = None;
    for (index, c) in candidates.iter().enumerate() {
        let estimate = fit(c, curve)?;
        check_len(truth.len(), estimate.len())?;
        let mse = stats::mse(&estimate, truth);
        if best.as_ref().is_none_or(|b| mse < b.mse) {
            best = Some(OracleChoice { index, mse, estimate });
        }
    }
    Ok(best.expect("nonempty candidates"))
}

/// Blend weight suggested by serial dependence.
///
/// With `rho` the lag-1 autocorrelation of the first differences, returns
/// `clamp(-2 rho, 0, 1)`: white noise (`rho = -1/2`) maps to 1, a random walk
/// or smooth trend (`rho >= 0`) to 0. A curve whose differences do not vary
/// returns 1.
pub fn eta_heuristic(curve: &[f64]) -> Result<f64> {
    if curve.len() < 3 {
        return Err(Error::CurveTooShort {
            len: curve.len(),
            min: 3,
        });
    }
    let diffs: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(match stats::lag1_autocorrelation(&diffs) {
        None => 1.0,
        Some(rho) => (-2.0 * rho).clamp(0.0, 1.0),
    })
}
