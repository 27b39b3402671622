//! Curve and noise generators used by the simulation studies.
//!
//! All generators are pure functions of their parameters and seed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::rng;

/// `n` curves sampled on a common grid of `d` points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBatch {
    n: usize,
    d: usize,
    values: Vec<f64>,
    truth: Option<Vec<f64>>,
    seed: u64,
}

impl CurveBatch {
    pub fn from_rows(rows: Vec<Vec<f64>>, truth: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("curve batch"));
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(n * d);
        for row in rows {
            crate::error::check_len(d, row.len())?;
            values.extend(row);
        }
        if let Some(t) = &truth {
            crate::error::check_len(d, t.len())?;
        }
        Ok(Self {
            n,
            d,
            values,
            truth,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.d)
    }

    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }
}

/// Marginal law of the innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    StudentT,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 3] = [NoiseFamily::Gaussian, NoiseFamily::Laplace, NoiseFamily::StudentT];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::StudentT => "student_t",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "laplace" => Ok(NoiseFamily::Laplace),
            "student_t" | "t" => Ok(NoiseFamily::StudentT),
            other => Err(Error::InvalidParameter(format!("unknown noise family {other:?}"))),
        }
    }
}

/// Default Student-t degrees of freedom.
pub const DEFAULT_DOF: f64 = 5.0;

/// Mixture of white and cumulative noise, scaled by `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub dof: f64,
    pub mix_white: f64,
    pub mix_cumulative: f64,
    pub sigma: f64,
}

impl NoiseSpec {
    /// i.i.d. noise with standard deviation `sigma`.
    pub fn white(family: NoiseFamily, sigma: f64) -> Self {
        Self {
            family,
            dof: DEFAULT_DOF,
            mix_white: 1.0,
            mix_cumulative: 0.0,
            sigma,
        }
    }

    /// `0.7` white plus `0.3` cumulative.
    pub fn mixed(family: NoiseFamily, sigma: f64) -> Self {
        Self {
            mix_white: 0.7,
            mix_cumulative: 0.3,
            ..Self::white(family, sigma)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.mix_white < 0.0 || self.mix_cumulative < 0.0 {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        if ((self.mix_white + self.mix_cumulative) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("mixture weights must sum to 1".into()));
        }
        if self.family == NoiseFamily::StudentT && !(self.dof > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "Student-t needs dof > 2 for finite variance, got {}",
                self.dof
            )));
        }
        Ok(())
    }
}

/// Unit-variance innovation sampler.
struct Innovations {
    family: NoiseFamily,
    t: Option<StudentT<f64>>,
    t_scale: f64,
}

impl Innovations {
    fn new(family: NoiseFamily, dof: f64) -> Result<Self> {
        let (t, t_scale) = if family == NoiseFamily::StudentT {
            let dist = StudentT::new(dof).map_err(|e| Error::InvalidParameter(format!("Student-t: {e}")))?;
            (Some(dist), ((dof - 2.0) / dof).sqrt())
        } else {
            (None, 1.0)
        };
        Ok(Self { family, t, t_scale })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::Laplace => {
                // Inverse CDF with scale b = 1/sqrt(2), variance 2 b^2 = 1.
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -std::f64::consts::FRAC_1_SQRT_2 * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseFamily::StudentT => self.t_scale * self.t.as_ref().unwrap().sample(rng),
        }
    }
}

/// `sigma * (w0 e0_t + w1 e1_t) / sqrt(w0^2 + w1^2)` with `e0` white and
/// `e1_t = d^{-1/2} sum_{s <= t} xi_s`; unit variance at `t = d`.
pub fn noise(d: usize, spec: &NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.sigma == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let innov = Innovations::new(spec.family, spec.dof)?;
    let mut rng = rng::stream(seed, &[rng::STREAM_NOISE]);
    let scale = spec.sigma / (spec.mix_white.powi(2) + spec.mix_cumulative.powi(2)).sqrt();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut walk = 0.0;
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        let white = innov.sample(&mut rng);
        let xi = innov.sample(&mut rng);
        walk += xi;
        out.push(scale * (spec.mix_white * white + spec.mix_cumulative * walk * inv_sqrt_d));
    }
    Ok(out)
}

/// `sin(6 pi t / d)` for `t = 1..=d`.
pub fn sinusoid(d: usize) -> Vec<f64> {
    (1..=d).map(|t| (6.0 * PI * t as f64 / d as f64).sin()).collect()
}

/// Moving-average width used by [`irregular_curve`].
pub fn irregular_window(d: usize) -> usize {
    ((d as f64 / 20.0).round() as usize).max(3)
}

/// Softplus of moving-averaged white noise.
///
/// The centred window of [`irregular_window`] points reflects at the edges
/// (`x[-1] = x[1]`).
pub fn irregular_curve(d: usize, seed: u64) -> Result<Vec<f64>> {
    if d < 8 {
        return Err(Error::CurveTooShort { len: d, min: 8 });
    }
    let mut rng = rng::stream(seed, &[rng::STREAM_TRUTH]);
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let w = irregular_window(d) as isize;
    let lo = -(w - 1) / 2;
    let hi = lo + w - 1;
    let last = d as isize - 1;
    let reflect = |i: isize| -> usize {
        let mut i = i;
        // Loop handles windows wider than the curve.
        loop {
            if i < 0 {
                i = -i;
            } else if i > last {
                i = 2 * last - i;
            } else {
                return i as usize;
            }
        }
    };
    Ok((0..d as isize)
        .map(|t| {
            let m = (lo..=hi).map(|o| z[reflect(t + o)]).sum::<f64>() / w as f64;
            softplus(m)
        })
        .collect())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gaussian-process batch parameters on the grid `t = (1..=d) / d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    pub n: usize,
    pub d: usize,
    pub lengthscale: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
}

impl GpParams {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            lengthscale: 0.1,
            amplitude: 1.0,
            noise_sd: 0.2,
        }
    }
}

/// Jitter added to the kernel diagonal before factorization.
pub const GP_JITTER: f64 = 1e-8;

/// Lower Cholesky factor of the squared-exponential kernel on the unit grid.
pub fn se_kernel_factor(d: usize, lengthscale: f64, amplitude: f64) -> Result<DMatrix<f64>> {
    if !(lengthscale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lengthscale must be > 0, got {lengthscale}"
        )));
    }
    let amp2 = amplitude * amplitude;
    let k = DMatrix::from_fn(d, d, |i, j| {
        let dt = (i as f64 - j as f64) / d as f64;
        let v = amp2 * (-dt * dt / (2.0 * lengthscale * lengthscale)).exp();
        if i == j {
            v + GP_JITTER
        } else {
            v
        }
    });
    Cholesky::new(k)
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Singular("squared-exponential kernel is not positive definite".into()))
}

/// `n` paths: `sin(6 pi t) + GP(0, SE) + N(0, noise_sd^2)`.
///
/// Row `i` draws from the stream `[STREAM_GP, i]`; `truth` is the mean function.
pub fn gp_batch(params: &GpParams, seed: u64) -> Result<CurveBatch> {
    let GpParams { n, d, .. } = *params;
    if n == 0 || d < 2 {
        return Err(Error::InvalidParameter(format!(
            "gp batch needs n >= 1 and d >= 2, got n={n}, d={d}"
        )));
    }
    if !(params.noise_sd >= 0.0) {
        return Err(Error::InvalidParameter("noise_sd must be >= 0".into()));
    }
    let mean: Vec<f64> = (1..=d).map(|t| (6.0 * PI * t as f64 / d as f64).sin()).collect();
    let factor = if params.amplitude == 0.0 {
        None
    } else {
        Some(se_kernel_factor(d, params.lengthscale, params.amplitude)?)
    };
    let rows = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, &[rng::STREAM_GP, i as u64]);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d)
                .map(|t| {
                    let gp = factor.as_ref().map_or(0.0, |l| (0..=t).map(|k| l[(t, k)] * z[k]).sum());
                    mean[t] + gp + params.noise_sd * e[t]
                })
                .collect()
        })
        .collect();
    CurveBatch::from_rows(rows, Some(mean), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_values() {
        let f = sinusoid(100);
        assert!(f[99].abs() < 1e-12);
        assert!(f.iter().map(|v| v.abs()).fold(0.0, f64::max) >= 0.99);
        let g = sinusoid(25);
        assert_eq!(g.len(), 25);
        assert!(g.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn irregular_is_positive_and_deterministic() {
        let a = irregular_curve(100, 11).unwrap();
        let b = irregular_curve(100, 11).unwrap();
        let c = irregular_curve(100, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| *v > 0.0));
        assert!(irregular_curve(7, 1).is_err());
        assert_eq!(irregular_window(100), 5);
        assert_eq!(irregular_window(25), 3);
    }

    #[test]
    fn zero_sigma_noise() {
        let spec = NoiseSpec::mixed(NoiseFamily::Laplace, 0.0);
        assert_eq!(noise(10, &spec, 3).unwrap(), vec![0.0; 10]);
    }

    #[test]
    fn noise_spec_validation() {
        let mut spec = NoiseSpec::white(NoiseFamily::StudentT, 1.0);
        spec.dof = 2.0;
        assert!(noise(10, &spec, 3).is_err());
        let mut spec = NoiseSpec::white(NoiseFamily::Gaussian, 1.0);
        spec.mix_cumulative = 0.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn gp_shape_and_determinism() {
        let p = GpParams::new(10, 100);
        let a = gp_batch(&p, 5).unwrap();
        let b = gp_batch(&p, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.d()), (10, 100));
        assert_eq!(a.truth().unwrap().len(), 100);
    }

    #[test]
    fn degenerate_gp_equals_mean() {
        let p = GpParams {
            amplitude: 0.0,
            noise_sd: 0.0,
            lengthscale: 1e6,
            ..GpParams::new(4, 30)
        };
        let b = gp_batch(&p, 1).unwrap();
        for row in b.rows() {
            assert_eq!(row, b.truth().unwrap());
        }
    }

    #[test]
    fn batch_rejects_ragged_rows() {
        assert!(CurveBatch::from_rows(vec![vec![1.0, 2.0], vec![1.0]], None, 0).is_err());
        assert!(CurveBatch::from_rows(vec![], None, 0).is_err());
    }
}
