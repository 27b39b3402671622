//! Difference stencils: the decorrelated family and classical binomial differences.
//!
//! A stencil of half-width `L` stores `2L + 1` weights for offsets `-L..=L`.
//! Applying it to a curve is a valid (interior-only) correlation: output index
//! `t` sees `x[t - L ..= t + L]`, so a length-`d` curve yields `d - 2L` values.
//!
//! The decorrelated family is built so that, under white noise, every member
//! has unit variance and members of different orders are uncorrelated at a
//! common location. Because white noise has identity covariance, both facts
//! reduce to statements about the weight vectors: unit norm and pairwise
//! orthogonality after zero padding.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest order for which the decorrelated stencil is unique.
pub const MAX_ORDER: usize = 4;

/// Half-widths of the canonical decorrelated stencils, indexed by order.
pub const CANONICAL_HALF_WIDTHS: [usize; MAX_ORDER + 1] = [0, 1, 2, 3, 5];

// Unnormalized canonical rows, offsets -L..=L.
const CANONICAL_ROWS: [&[f64]; MAX_ORDER + 1] = [
    &[1.0],
    &[1.0, 0.0, -1.0],
    &[1.0, -1.0, 0.0, -1.0, 1.0],
    &[2.0, -3.0, 0.0, 0.0, 0.0, 3.0, -2.0],
    &[7.0, -16.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.0, -16.0, 7.0],
];

const NULL_SPACE_RTOL: f64 = 1e-9;
const SNAP_TOL: f64 = 1e-13;

/// Signed weight vector of a difference operator, unit norm, first nonzero weight positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    order: usize,
    half_width: usize,
    weights: Vec<f64>,
}

impl Stencil {
    /// Builds a stencil from raw weights over offsets `-L..=L`, normalizing to
    /// unit norm and flipping the sign so the leftmost nonzero weight is positive.
    pub fn new(order: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "stencil needs an odd number of weights, got {}",
                weights.len()
            )));
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidParameter("stencil weights have zero norm".into()));
        }
        let half_width = weights.len() / 2;
        // Already-normalized input (e.g. parsed text) is kept bit-for-bit.
        let scale = if (norm - 1.0).abs() < 1e-14 { 1.0 } else { norm };
        let mut weights: Vec<f64> = weights.into_iter().map(|w| w / scale).collect();
        if let Some(first) = weights.iter().find(|w| **w != 0.0) {
            if *first < 0.0 {
                weights.iter_mut().for_each(|w| *w = -*w);
            }
        }
        Ok(Self {
            order,
            half_width,
            weights,
        })
    }

    /// The centred unit impulse (order 0).
    pub fn impulse(half_width: usize) -> Self {
        let mut weights = vec![0.0; 2 * half_width + 1];
        weights[half_width] = 1.0;
        Self {
            order: 0,
            half_width,
            weights,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Weights for offsets `-L..=L`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at `offset`, zero outside the support.
    pub fn weight(&self, offset: isize) -> f64 {
        let l = self.half_width as isize;
        if offset < -l || offset > l {
            0.0
        } else {
            self.weights[(offset + l) as usize]
        }
    }

    /// Iterator over `(offset, weight)` pairs.
    pub fn taps(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let l = self.half_width as isize;
        self.weights.iter().enumerate().map(move |(j, &w)| (j as isize - l, w))
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// `sum_l w_l * l^k`.
    pub fn moment(&self, k: u32) -> f64 {
        self.taps().map(|(l, w)| w * (l as f64).powi(k as i32)).sum()
    }

    /// Whether `w_l = (-1)^r w_{-l}` holds to `tol`.
    pub fn has_parity(&self, tol: f64) -> bool {
        let sign = if self.order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let l = self.half_width as isize;
        (0..=l).all(|o| (self.weight(o) - sign * self.weight(-o)).abs() <= tol)
    }

    /// Output length for a curve of length `d`.
    pub fn output_len(&self, d: usize) -> Result<usize> {
        let min = 2 * self.half_width + 1;
        if d < min {
            Err(Error::CurveTooShort { len: d, min })
        } else {
            Ok(d - 2 * self.half_width)
        }
    }

    /// Interior-only convolution; output `t` is centred at curve index `t + L`.
    pub fn apply(&self, curve: &[f64]) -> Result<Vec<f64>> {
        let n_out = self.output_len(curve.len())?;
        Ok((0..n_out)
            .map(|t| {
                curve[t..t + self.weights.len()]
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, w)| x * w)
                    .sum()
            })
            .collect())
    }
}

/// Zero-padded inner product of two centred stencils. Under white noise this
/// is the covariance of the two outputs at a common location.
pub fn cross_covariance(a: &Stencil, b: &Stencil) -> f64 {
    let l = a.half_width.min(b.half_width) as isize;
    (-l..=l).map(|o| a.weight(o) * b.weight(o)).sum()
}

impl fmt::Display for Stencil {
    /// `order L w_{-L} ... w_{L}`, weights with 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.order, self.half_width)?;
        for w in &self.weights {
            write!(f, " {}", crate::report::fmt_f64(*w))?;
        }
        Ok(())
    }
}

impl FromStr for Stencil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParameter(format!("stencil line: {msg}"));
        let mut fields = s.split_whitespace();
        let order: usize = fields
            .next()
            .ok_or_else(|| bad("missing order".into()))?
            .parse()
            .map_err(|e| bad(format!("order: {e}")))?;
        let half_width: usize = fields
            .next()
            .ok_or_else(|| bad("missing half-width".into()))?
            .parse()
            .map_err(|e| bad(format!("half-width: {e}")))?;
        let weights = fields
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("weight {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if weights.len() != 2 * half_width + 1 {
            return Err(bad(format!(
                "expected {} weights for half-width {half_width}, got {}",
                2 * half_width + 1,
                weights.len()
            )));
        }
        Stencil::new(order, weights)
    }
}

/// Decorrelated stencils for orders `0..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilFamily {
    members: Vec<Stencil>,
}

impl StencilFamily {
    /// Wraps stencils that must have orders `0, 1, 2, ...` in sequence.
    pub fn from_members(members: Vec<Stencil>) -> Result<Self> {
        for (r, s) in members.iter().enumerate() {
            if s.order != r {
                return Err(Error::MissingOrder(r));
            }
        }
        Ok(Self { members })
    }

    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    /// Highest order present, `None` for an empty family.
    pub fn max_order(&self) -> Option<usize> {
        self.members.len().checked_sub(1)
    }

    pub fn members(&self) -> &[Stencil] {
        &self.members
    }

    pub fn get(&self, order: usize) -> Result<&Stencil> {
        self.members.get(order).ok_or(Error::MissingOrder(order))
    }

    pub fn push(&mut self, stencil: Stencil) -> Result<()> {
        if stencil.order != self.members.len() {
            return Err(Error::MissingOrder(self.members.len()));
        }
        self.members.push(stencil);
        Ok(())
    }

    /// Largest absolute cross-order inner product.
    pub fn max_cross_covariance(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                worst = worst.max(cross_covariance(a, b).abs());
            }
        }
        worst
    }
}

/// The five tabulated decorrelated stencils, truncated to `max_order`.
pub fn canonical_family(max_order: usize) -> Result<StencilFamily> {
    if max_order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(max_order));
    }
    let members = CANONICAL_ROWS[..=max_order]
        .iter()
        .enumerate()
        .map(|(r, row)| Stencil::new(r, row.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    StencilFamily::from_members(members)
}

/// Solves for the order-`order` decorrelated stencil at a fixed half-width.
///
/// Constraints: parity, zero-padded orthogonality to every lower member,
/// zero sum and vanishing moments `k < order`. A solution space of dimension
/// above one is narrowed by forcing the largest possible run of central zeros.
pub fn solve_stencil(order: usize, half_width: usize, lower: &StencilFamily) -> Result<Stencil> {
    if order == 0 {
        return Ok(Stencil::impulse(half_width));
    }
    for r in 0..order {
        lower.get(r)?;
    }

    let base = constraint_rows(order, half_width, lower);
    let null = null_space(&base, 2 * half_width + 1);
    if null.is_empty() {
        return Err(Error::InfeasibleWidth { order, half_width });
    }
    if null.len() == 1 {
        return finish(order, null.into_iter().next().unwrap());
    }

    // Force w_l = 0 for |l| < m, growing m while a solution survives.
    let mut best = null;
    for m in 1..=half_width {
        let mut rows = base.clone();
        for l in -(m as isize - 1)..=(m as isize - 1) {
            rows.push(unit_row(half_width, l));
        }
        let candidate = null_space(&rows, 2 * half_width + 1);
        if candidate.is_empty() {
            break;
        }
        best = candidate;
    }
    if best.len() == 1 {
        finish(order, best.into_iter().next().unwrap())
    } else {
        Err(Error::NonUnique {
            order,
            half_width,
            dim: best.len(),
        })
    }
}

/// Like [`solve_stencil`] but widens the support until a solution exists,
/// up to `max_half_width`.
pub fn solve_stencil_auto(
    order: usize,
    min_half_width: usize,
    max_half_width: usize,
    lower: &StencilFamily,
) -> Result<Stencil> {
    let mut last = Error::InfeasibleWidth {
        order,
        half_width: min_half_width,
    };
    for l in min_half_width..=max_half_width {
        match solve_stencil(order, l, lower) {
            Err(e @ Error::InfeasibleWidth { .. }) => last = e,
            other => return other,
        }
    }
    Err(last)
}

/// Builds the decorrelated family by successive solves at the canonical widths.
pub fn solved_family(max_order: usize) -> Result<StencilFamily> {
    if max_order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(max_order));
    }
    let mut family = StencilFamily::empty();
    for r in 0..=max_order {
        let s = solve_stencil(r, CANONICAL_HALF_WIDTHS[r], &family)?;
        family.push(s)?;
    }
    Ok(family)
}

/// Classical difference with alternating binomial weights `(-1)^k C(r, k)`.
///
/// Odd orders are asymmetric: the `r + 1` taps start at offset `-ceil(r/2)`
/// and the window is padded to half-width `ceil(r/2)`.
pub fn binomial_stencil(order: usize) -> Stencil {
    if order == 0 {
        return Stencil::impulse(0);
    }
    let half_width = order.div_ceil(2);
    let mut weights = vec![0.0; 2 * half_width + 1];
    let mut c = 1.0;
    for k in 0..=order {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        weights[k] = sign * c;
        c = c * (order - k) as f64 / (k + 1) as f64;
    }
    Stencil::new(order, weights).expect("binomial weights are nonzero")
}

/// Binomial stencils for orders `0..=max_order`, indexed by order.
pub fn binomial_family(max_order: usize) -> Vec<Stencil> {
    (0..=max_order).map(binomial_stencil).collect()
}

fn finish(order: usize, raw: Vec<f64>) -> Result<Stencil> {
    let scale = raw.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let snapped = raw
        .into_iter()
        .map(|w| if w.abs() <= SNAP_TOL * scale { 0.0 } else { w })
        .collect();
    Stencil::new(order, snapped)
}

fn unit_row(half_width: usize, offset: isize) -> Vec<f64> {
    let mut row = vec![0.0; 2 * half_width + 1];
    row[(offset + half_width as isize) as usize] = 1.0;
    row
}

fn constraint_rows(order: usize, half_width: usize, lower: &StencilFamily) -> Vec<Vec<f64>> {
    let n = 2 * half_width + 1;
    let l = half_width as isize;
    let idx = |o: isize| (o + l) as usize;
    let mut rows = Vec::new();

    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    for o in 1..=l {
        let mut row = vec![0.0; n];
        row[idx(o)] = 1.0;
        row[idx(-o)] = -sign;
        rows.push(row);
    }
    if order % 2 == 1 {
        rows.push(unit_row(half_width, 0));
    }

    for s in &lower.members()[..order] {
        rows.push((-l..=l).map(|o| s.weight(o)).collect());
    }

    // k = 0 is the zero-sum condition.
    for k in 0..order {
        rows.push((-l..=l).map(|o| (o as f64).powi(k as i32)).collect());
    }
    rows
}

/// Orthonormal basis of `{w : A w = 0}` from a full SVD.
fn null_space(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    // Pad to at least n rows so the SVD returns a full right basis.
    let m = rows.len().max(n);
    let mut a = DMatrix::<f64>::zeros(m, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let tol = NULL_SPACE_RTOL * smax;
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| smax == 0.0 || **s <= tol)
        .map(|(i, _)| v_t.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(raw: &[f64]) -> Vec<f64> {
        let n = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        raw.iter().map(|w| w / n).collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn canonical_order_one() {
        let fam = canonical_family(1).unwrap();
        let s = fam.get(1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(s.weights(), &[h, 0.0, -h], 1e-15);
    }

    #[test]
    fn canonical_order_four() {
        let fam = canonical_family(4).unwrap();
        let expect = normalized(&[7., -16., 9., 0., 0., 0., 0., 0., 9., -16., 7.]);
        assert_close(fam.get(4).unwrap().weights(), &expect, 1e-15);
        assert_eq!(fam.get(4).unwrap().half_width(), 5);
    }

    #[test]
    fn canonical_order_zero_is_impulse() {
        let fam = canonical_family(0).unwrap();
        assert_eq!(fam.members().len(), 1);
        assert_eq!(fam.get(0).unwrap().weights(), &[1.0]);
    }

    #[test]
    fn canonical_rejects_order_five() {
        assert_eq!(canonical_family(5), Err(Error::UnsupportedOrder(5)));
    }

    #[test]
    fn solve_order_two_and_three() {
        let fam = canonical_family(2).unwrap();
        let s2 = solve_stencil(2, 2, &canonical_family(1).unwrap()).unwrap();
        assert_close(s2.weights(), &normalized(&[1., -1., 0., -1., 1.]), 1e-12);
        let s3 = solve_stencil(3, 3, &fam).unwrap();
        assert_close(s3.weights(), &normalized(&[2., -3., 0., 0., 0., 3., -2.]), 1e-12);
    }

    #[test]
    fn solve_order_one_at_zero_width_is_infeasible() {
        let fam = canonical_family(0).unwrap();
        assert_eq!(
            solve_stencil(1, 0, &fam),
            Err(Error::InfeasibleWidth {
                order: 1,
                half_width: 0
            })
        );
    }

    #[test]
    fn solve_needs_lower_orders() {
        let fam = canonical_family(1).unwrap();
        assert_eq!(solve_stencil(3, 3, &fam), Err(Error::MissingOrder(2)));
    }

    #[test]
    fn auto_width_finds_first_feasible() {
        let fam = canonical_family(0).unwrap();
        let s = solve_stencil_auto(1, 0, 4, &fam).unwrap();
        assert_eq!(s.half_width(), 1);
    }

    #[test]
    fn solved_family_matches_table() {
        let solved = solved_family(4).unwrap();
        let table = canonical_family(4).unwrap();
        for (a, b) in solved.members().iter().zip(table.members()) {
            assert_eq!(a.half_width(), b.half_width());
            assert_close(a.weights(), b.weights(), 1e-10);
        }
    }

    #[test]
    fn binomial_rows() {
        let s2 = binomial_stencil(2);
        assert_close(s2.weights(), &normalized(&[1., -2., 1.]), 1e-15);
        let s1 = binomial_stencil(1);
        assert_eq!(s1.half_width(), 1);
        assert_close(s1.weights(), &normalized(&[1., -1., 0.]), 1e-15);
        // sqrt(1 + 9 + 9 + 1) = sqrt(20)
        let s3 = binomial_stencil(3);
        let r20 = 20f64.sqrt();
        assert_close(s3.weights(), &[1. / r20, -3. / r20, 3. / r20, -1. / r20, 0.], 1e-15);
        assert_eq!(binomial_stencil(0).weights(), &[1.0]);
    }

    #[test]
    fn apply_examples() {
        let fam = canonical_family(2).unwrap();
        let constant = vec![3.5; 9];
        let out = fam.get(1).unwrap().apply(&constant).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|v| v.abs() < 1e-15));

        let ramp: Vec<f64> = (1..=12).map(|t| t as f64).collect();
        let out = fam.get(2).unwrap().apply(&ramp).unwrap();
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|v| v.abs() < 1e-12));

        let x = vec![0.3, -1.0, 2.0];
        assert_eq!(fam.get(0).unwrap().apply(&x).unwrap(), x);
    }

    #[test]
    fn apply_short_curve() {
        let fam = canonical_family(4).unwrap();
        assert_eq!(
            fam.get(4).unwrap().apply(&[0.0; 10]),
            Err(Error::CurveTooShort { len: 10, min: 11 })
        );
    }

    #[test]
    fn cross_covariance_examples() {
        let fam = canonical_family(4).unwrap();
        assert!(cross_covariance(fam.get(1).unwrap(), fam.get(2).unwrap()).abs() < 1e-15);
        assert!(cross_covariance(fam.get(2).unwrap(), fam.get(4).unwrap()).abs() < 1e-15);
        assert!((cross_covariance(fam.get(2).unwrap(), fam.get(2).unwrap()) - 1.0).abs() < 1e-15);
        assert!(fam.max_cross_covariance() <= 1e-12);
    }

    #[test]
    fn canonical_invariants() {
        let fam = canonical_family(4).unwrap();
        for s in fam.members() {
            let r = s.order();
            assert!((s.norm() - 1.0).abs() <= 1e-12);
            assert!(s.has_parity(1e-15));
            for k in 0..r as u32 {
                assert!(s.moment(k).abs() <= 1e-10, "order {r} moment {k}");
            }
            assert!(s.moment(r as u32).abs() > 1e-3, "order {r} must detect degree {r}");
            let first = s.weights().iter().find(|w| **w != 0.0).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn text_round_trip() {
        let fam = canonical_family(4).unwrap();
        for s in fam.members() {
            let line = s.to_string();
            let back: Stencil = line.parse().unwrap();
            assert_eq!(&back, s);
        }
        assert!("2 1 1.0 2.0".parse::<Stencil>().is_err());
    }
}
