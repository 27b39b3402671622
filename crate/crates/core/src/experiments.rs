//! Simulation studies: oracle-tuned method comparisons on two curve families,
//! an empirical convergence rate, the white-noise energy decomposition of the
//! decorrelated stencils and an exact linearity check of the contrast statistic.
//!
//! Replications run on a dedicated rayon pool. Each replication draws from its
//! own seed stream and results are reduced in replication order, so reports do
//! not depend on the thread count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::baselines::{basis_matrices, BasisKind, BasisSmoother, KernelSmoother, DEFAULT_N_BASIS};
use crate::datagen::{self, GpParams, NoiseFamily, NoiseSpec, DEFAULT_DOF};
use crate::error::{Error, Result};
use crate::penalty::{order_penalty, PenaltyMatrix};
use crate::report::{fmt_f64, Cell, ConvergenceRow, EnergyRow, ExperimentReport, PlotSeries, SlopeFit};
use crate::rng;
use crate::selection::{default_alpha_grid, log_grid, select_with_smoothers};
use crate::smoother::Smoother;
use crate::stats;
use crate::stencils::{binomial_family, canonical_family, Stencil, StencilFamily};

/// Runs `f` on a pool with `threads` workers (0 means all cores).
fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn penalty_stencils() -> Result<(StencilFamily, Vec<Stencil>)> {
    Ok((canonical_family(4)?, binomial_family(4)))
}

fn fmt_list<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_grid(xs: &[f64]) -> String {
    match xs {
        [] => String::new(),
        [only] => fmt_f64(*only),
        [first, .., last] => format!("{},{},{}", fmt_f64(*first), fmt_f64(*last), xs.len()),
    }
}

/// Methods compared in the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Decorrelated-penalty smoothing of orders 4 down to 1, one alpha per order.
    Sequential,
    /// Single second-order penalty with tuned alpha and blend weight.
    Convex,
    Fourier,
    BSpline,
    Kernel,
    /// [`Method::Convex`] at a fixed blend weight with alpha chosen by GCV.
    ConvexGcv,
}

impl Method {
    pub const TABLE: [Method; 5] = [
        Method::Sequential,
        Method::Convex,
        Method::Fourier,
        Method::BSpline,
        Method::Kernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sequential => "sequential",
            Method::Convex => "convex",
            Method::Fourier => "fourier",
            Method::BSpline => "bspline",
            Method::Kernel => "kernel",
            Method::ConvexGcv => "convex_gcv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Sequential,
            Method::Convex,
            Method::Fourier,
            Method::BSpline,
            Method::Kernel,
            Method::ConvexGcv,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Candidate sets searched by the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrids {
    /// Alpha values for the discrete smoothers.
    pub alpha: Vec<f64>,
    /// Blend weights for the convex smoother.
    pub eta: Vec<f64>,
    /// Kernel bandwidths as fractions of the unit interval.
    pub bandwidth: Vec<f64>,
    /// Alpha values for the basis smoothers.
    pub basis_alpha: Vec<f64>,
    /// Every `sequential_stride`-th alpha (plus the last) seeds the exhaustive
    /// sequential search, which is then refined coordinate-wise on `alpha`.
    pub sequential_stride: usize,
}

impl Default for OracleGrids {
    fn default() -> Self {
        Self {
            alpha: default_alpha_grid(),
            eta: (0..=10).map(|i| i as f64 / 10.0).collect(),
            bandwidth: log_grid(0.005, 0.5, 20).expect("static grid is valid"),
            basis_alpha: log_grid(1e-10, 1e4, 57).expect("static grid is valid"),
            sequential_stride: 5,
        }
    }
}

impl OracleGrids {
    fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("alpha", &self.alpha),
            ("bandwidth", &self.bandwidth),
            ("basis_alpha", &self.basis_alpha),
        ] {
            if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid must be nonempty and positive"
                )));
            }
        }
        if self.eta.is_empty() || self.eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParameter(
                "eta grid must be nonempty and within [0, 1]".into(),
            ));
        }
        if self.sequential_stride == 0 {
            return Err(Error::InvalidParameter("sequential_stride must be >= 1".into()));
        }
        Ok(())
    }

    fn sequential_seeds(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.alpha.len()).step_by(self.sequential_stride).collect();
        if idx.last() != Some(&(self.alpha.len() - 1)) {
            idx.push(self.alpha.len() - 1);
        }
        idx
    }
}

/// Which truth curve a table uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// A fresh locally irregular curve per replication.
    Irregular,
    /// `sin(6 pi t / d)`.
    Sinusoid,
}

/// Settings shared by both method-comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub name: String,
    pub truth: Truth,
    pub n_reps: usize,
    pub seed: u64,
    pub d_list: Vec<usize>,
    pub families: Vec<NoiseFamily>,
    pub sigma: f64,
    pub dof: f64,
    /// White and cumulative weights of the noise mixture.
    pub mix_white: f64,
    pub mix_cumulative: f64,
    pub sequential_eta: f64,
    pub sequential_max_order: usize,
    pub convex_order: usize,
    pub n_basis: usize,
    pub basis_penalty_order: usize,
    pub grids: OracleGrids,
    /// Adds a `convex_gcv` row per cell.
    pub gcv: bool,
    pub gcv_eta: f64,
}

impl TableConfig {
    /// Irregular curve, `d = 100`, mixed dependent noise scaled by 0.055.
    pub fn table1() -> Self {
        let mixed = NoiseSpec::mixed(NoiseFamily::Gaussian, 0.055);
        Self {
            name: "table1".into(),
            truth: Truth::Irregular,
            n_reps: 100,
            seed: 1,
            d_list: vec![100],
            families: NoiseFamily::ALL.to_vec(),
            sigma: 0.055,
            dof: DEFAULT_DOF,
            mix_white: mixed.mix_white,
            mix_cumulative: mixed.mix_cumulative,
            sequential_eta: 0.5,
            sequential_max_order: 4,
            convex_order: 2,
            n_basis: DEFAULT_N_BASIS,
            basis_penalty_order: 2,
            grids: OracleGrids::default(),
            gcv: false,
            gcv_eta: 0.5,
        }
    }

    /// Sinusoid at `d = 25, 50, 100` with white noise of sd 0.2.
    pub fn table2() -> Self {
        Self {
            name: "table2".into(),
            truth: Truth::Sinusoid,
            d_list: vec![25, 50, 100],
            sigma: 0.2,
            mix_white: 1.0,
            mix_cumulative: 0.0,
            ..Self::table1()
        }
    }

    fn noise_spec(&self, family: NoiseFamily) -> NoiseSpec {
        NoiseSpec {
            family,
            dof: self.dof,
            mix_white: self.mix_white,
            mix_cumulative: self.mix_cumulative,
            sigma: self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::InvalidParameter("n_reps must be >= 1".into()));
        }
        if self.d_list.is_empty() || self.families.is_empty() {
            return Err(Error::Empty("d_list or noise families"));
        }
        if let Some(d) = self.d_list.iter().find(|d| **d < 11) {
            return Err(Error::CurveTooShort { len: *d, min: 11 });
        }
        if !(1..=4).contains(&self.sequential_max_order) || !(1..=4).contains(&self.convex_order) {
            return Err(Error::InvalidParameter("penalty orders must be within 1..=4".into()));
        }
        if !(0.0..=1.0).contains(&self.sequential_eta) || !(0.0..=1.0).contains(&self.gcv_eta) {
            return Err(Error::InvalidParameter("eta must be within [0, 1]".into()));
        }
        if self.n_basis < 4 {
            return Err(Error::InvalidParameter("n_basis must be >= 4".into()));
        }
        for family in &self.families {
            self.noise_spec(*family).validate()?;
        }
        self.grids.validate()
    }

    fn methods(&self) -> Vec<Method> {
        let mut m = Method::TABLE.to_vec();
        if self.gcv {
            m.push(Method::ConvexGcv);
        }
        m
    }

    /// Ordered `key=value` record.
    pub fn record(&self) -> Vec<(String, String)> {
        let truth = match self.truth {
            Truth::Irregular => "irregular",
            Truth::Sinusoid => "sinusoid",
        };
        let g = &self.grids;
        vec![
            ("truth".into(), truth.into()),
            ("n_reps".into(), self.n_reps.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("d".into(), fmt_list(&self.d_list)),
            ("noise".into(), fmt_list(&self.families)),
            ("sigma".into(), fmt_f64(self.sigma)),
            ("student_t_dof".into(), fmt_f64(self.dof)),
            ("noise_white_weight".into(), fmt_f64(self.mix_white)),
            ("noise_cumulative_weight".into(), fmt_f64(self.mix_cumulative)),
            ("sequential_eta".into(), fmt_f64(self.sequential_eta)),
            ("sequential_max_order".into(), self.sequential_max_order.to_string()),
            ("convex_order".into(), self.convex_order.to_string()),
            ("n_basis".into(), self.n_basis.to_string()),
            ("basis_penalty_order".into(), self.basis_penalty_order.to_string()),
            ("alpha_grid".into(), fmt_grid(&g.alpha)),
            ("eta_grid".into(), fmt_grid(&g.eta)),
            ("bandwidth_grid".into(), fmt_grid(&g.bandwidth)),
            ("basis_alpha_grid".into(), fmt_grid(&g.basis_alpha)),
            ("sequential_stride".into(), g.sequential_stride.to_string()),
            ("gcv".into(), self.gcv.to_string()),
            ("gcv_eta".into(), fmt_f64(self.gcv_eta)),
        ]
    }
}

/// Every linear operator an oracle may pick, for one grid size.
struct Bank {
    /// Highest order first, one smoother per `alpha` grid value.
    sequential: Vec<Vec<Smoother>>,
    sequential_seeds: Vec<usize>,
    /// `eta`-major.
    convex: Vec<Smoother>,
    gcv: Vec<Smoother>,
    fourier: Vec<DMatrix<f64>>,
    bspline: Vec<DMatrix<f64>>,
    kernel: Vec<DMatrix<f64>>,
}

impl Bank {
    fn build(cfg: &TableConfig, d: usize, family: &StencilFamily, binomials: &[Stencil]) -> Result<Self> {
        let g = &cfg.grids;
        let bank_for = |order: usize, eta: f64| -> Result<Vec<Smoother>> {
            let p = order_penalty(family, binomials, order, eta, d)?;
            g.alpha.iter().map(|a| Smoother::new(&p, *a)).collect()
        };
        let sequential = (1..=cfg.sequential_max_order)
            .rev()
            .map(|r| bank_for(r, cfg.sequential_eta))
            .collect::<Result<Vec<_>>>()?;
        let mut convex = Vec::with_capacity(g.eta.len() * g.alpha.len());
        for &eta in &g.eta {
            convex.extend(bank_for(cfg.convex_order, eta)?);
        }
        let gcv = if cfg.gcv {
            bank_for(cfg.convex_order, cfg.gcv_eta)?
        } else {
            Vec::new()
        };
        let n_basis = cfg.n_basis.min(d);
        let hats = |kind: BasisKind| -> Result<Vec<DMatrix<f64>>> {
            let (design, penalty) = basis_matrices(kind, n_basis, cfg.basis_penalty_order, d)?;
            g.basis_alpha
                .iter()
                .map(|a| {
                    BasisSmoother::from_matrices(kind, cfg.basis_penalty_order, *a, design.clone(), penalty.clone())
                        .map(|s| s.hat().clone())
                })
                .collect()
        };
        let kernel = g
            .bandwidth
            .iter()
            .map(|h| KernelSmoother::new(d, *h).map(|k| k.weights().clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sequential,
            sequential_seeds: g.sequential_seeds(),
            convex,
            gcv,
            fourier: hats(BasisKind::Fourier)?,
            bspline: hats(BasisKind::BSpline)?,
            kernel,
        })
    }

    fn oracle_mse(&self, method: Method, y: &[f64], truth: &[f64]) -> Result<f64> {
        Ok(match method {
            Method::Sequential => sequential_oracle(&self.sequential, &self.sequential_seeds, y, truth)?.0,
            Method::Convex => self
                .convex
                .iter()
                .map(|s| s.apply(y).map(|f| stats::mse(&f, truth)))
                .try_fold(f64::INFINITY, |best, m| m.map(|m| best.min(m)))?,
            Method::Fourier => dense_oracle(&self.fourier, y, truth),
            Method::BSpline => dense_oracle(&self.bspline, y, truth),
            Method::Kernel => dense_oracle(&self.kernel, y, truth),
            Method::ConvexGcv => {
                let (i, _) = select_with_smoothers(y, &self.gcv)?;
                stats::mse(&self.gcv[i].apply(y)?, truth)
            }
        })
    }
}

fn dense_oracle(ops: &[DMatrix<f64>], y: &[f64], truth: &[f64]) -> f64 {
    let y = DVector::from_column_slice(y);
    ops.iter()
        .map(|h| stats::mse((h * &y).as_slice(), truth))
        .fold(f64::INFINITY, f64::min)
}

fn chain_mse(levels: &[Vec<Smoother>], idx: &[usize], y: &[f64], truth: &[f64]) -> Result<f64> {
    let mut buf = y.to_vec();
    for (bank, &i) in levels.iter().zip(idx) {
        bank[i].apply_in_place(&mut buf)?;
    }
    Ok(stats::mse(&buf, truth))
}

/// Best per-order alpha indices for the sequential chain.
///
/// Exhaustive over the seed indices, then coordinate descent on the full grid
/// until no single-order change lowers the error.
pub(crate) fn sequential_oracle(
    levels: &[Vec<Smoother>],
    seeds: &[usize],
    y: &[f64],
    truth: &[f64],
) -> Result<(f64, Vec<usize>)> {
    fn dfs(
        levels: &[Vec<Smoother>],
        seeds: &[usize],
        input: &[f64],
        truth: &[f64],
        path: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) -> Result<()> {
        let depth = path.len();
        for &i in seeds {
            let mut out = input.to_vec();
            levels[depth][i].apply_in_place(&mut out)?;
            path.push(i);
            if depth + 1 == levels.len() {
                let m = stats::mse(&out, truth);
                if m < best.0 {
                    *best = (m, path.clone());
                }
            } else {
                dfs(levels, seeds, &out, truth, path, best)?;
            }
            path.pop();
        }
        Ok(())
    }

    if levels.is_empty() {
        return Ok((stats::mse(y, truth), Vec::new()));
    }
    let mut best = (f64::INFINITY, Vec::new());
    dfs(
        levels,
        seeds,
        y,
        truth,
        &mut Vec::with_capacity(levels.len()),
        &mut best,
    )?;

    let n_grid = levels[0].len();
    loop {
        let mut improved = false;
        for level in 0..levels.len() {
            for j in 0..n_grid {
                if j == best.1[level] {
                    continue;
                }
                let mut idx = best.1.clone();
                idx[level] = j;
                let m = chain_mse(levels, &idx, y, truth)?;
                if m < best.0 {
                    best = (m, idx);
                    improved = true;
                }
            }
        }
        if !improved {
            return Ok(best);
        }
    }
}

/// Oracle-tuned comparison of all methods over every `(d, noise)` cell.
pub fn run_table(cfg: &TableConfig, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (family, binomials) = penalty_stencils()?;
    let methods = cfg.methods();
    let mut report = ExperimentReport::new(&cfg.name, cfg.record());

    with_pool(threads, || -> Result<()> {
        for (di, &d) in cfg.d_list.iter().enumerate() {
            let bank = Bank::build(cfg, d, &family, &binomials)?;
            for (fi, &noise_family) in cfg.families.iter().enumerate() {
                let spec = cfg.noise_spec(noise_family);
                let per_rep = (0..cfg.n_reps)
                    .into_par_iter()
                    .map(|rep| -> Result<Vec<f64>> {
                        let truth = match cfg.truth {
                            Truth::Irregular => datagen::irregular_curve(
                                d,
                                rng::derive_seed(cfg.seed, &[rng::STREAM_TRUTH, di as u64, rep as u64]),
                            )?,
                            Truth::Sinusoid => datagen::sinusoid(d),
                        };
                        let eps = datagen::noise(
                            d,
                            &spec,
                            rng::derive_seed(cfg.seed, &[rng::STREAM_NOISE, di as u64, fi as u64, rep as u64]),
                        )?;
                        let y: Vec<f64> = truth.iter().zip(&eps).map(|(f, e)| f + e).collect();
                        methods.iter().map(|m| bank.oracle_mse(*m, &y, &truth)).collect()
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (mi, method) in methods.iter().enumerate() {
                    let mses: Vec<f64> = per_rep.iter().map(|r| r[mi]).collect();
                    report.cells.push(Cell {
                        method: method.name().into(),
                        noise: noise_family.name().into(),
                        d,
                        mse: stats::mean(&mses),
                        sd: if mses.len() > 1 { stats::sd(&mses) } else { 0.0 },
                    });
                }
            }
        }
        Ok(())
    })??;

    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn run_table1(cfg: &TableConfig, threads: usize) -> Result<ExperimentReport> {
    run_table(cfg, threads)
}

pub fn run_table2(cfg: &TableConfig, threads: usize) -> Result<ExperimentReport> {
    run_table(cfg, threads)
}

/// Smoothness and spectral constants fixing `alpha_n = C n^{-1/(2 beta + s)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub beta: f64,
    pub s: f64,
    /// Source-condition bound, recorded only.
    pub rho: f64,
    /// Second-moment bound, recorded only.
    pub m_bound: f64,
    pub alpha_constant: f64,
}

impl RateParams {
    pub fn new(beta: f64, s: f64, alpha_constant: f64) -> Result<Self> {
        let p = Self {
            beta,
            s,
            rho: 1.0,
            m_bound: 1.0,
            alpha_constant,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidParameter(format!("s must be in (0, 1], got {}", self.s)));
        }
        if !(self.rho > 0.0 && self.m_bound > 0.0 && self.alpha_constant > 0.0) {
            return Err(Error::InvalidParameter("rho, M and C_alpha must be > 0".into()));
        }
        Ok(())
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha_constant * (n as f64).powf(-1.0 / (2.0 * self.beta + self.s))
    }

    /// `-2 beta / (2 beta + s)`.
    pub fn target_slope(&self) -> f64 {
        -2.0 * self.beta / (2.0 * self.beta + self.s)
    }
}

impl Default for RateParams {
    fn default() -> Self {
        Self::new(2.0, 0.5, 1.0).expect("defaults are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub n_list: Vec<usize>,
    pub d: usize,
    pub params: RateParams,
    pub order: usize,
    pub eta: f64,
    pub lengthscale: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
    /// Independent batches averaged per sample size.
    pub n_reps: usize,
    pub seed: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        let gp = GpParams::new(1, 100);
        Self {
            n_list: vec![10, 20, 50, 100, 200, 500, 1000],
            d: 100,
            params: RateParams::default(),
            order: 2,
            eta: 0.5,
            lengthscale: gp.lengthscale,
            amplitude: gp.amplitude,
            noise_sd: gp.noise_sd,
            n_reps: 20,
            seed: 1,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_list.len() < 2 || self.n_list.contains(&0) {
            return Err(Error::InvalidParameter(
                "n_list needs at least two positive sizes".into(),
            ));
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidParameter("n_reps must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        if !(1..=4).contains(&self.order) {
            return Err(Error::UnsupportedOrder(self.order));
        }
        if self.d < 2 * self.order + 1 {
            return Err(Error::CurveTooShort {
                len: self.d,
                min: 2 * self.order + 1,
            });
        }
        Ok(())
    }

    pub fn record(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            ("n".into(), fmt_list(&self.n_list)),
            ("d".into(), self.d.to_string()),
            ("beta".into(), fmt_f64(p.beta)),
            ("s".into(), fmt_f64(p.s)),
            ("rho".into(), fmt_f64(p.rho)),
            ("m_bound".into(), fmt_f64(p.m_bound)),
            ("alpha_constant".into(), fmt_f64(p.alpha_constant)),
            ("order".into(), self.order.to_string()),
            ("eta".into(), fmt_f64(self.eta)),
            ("lengthscale".into(), fmt_f64(self.lengthscale)),
            ("amplitude".into(), fmt_f64(self.amplitude)),
            ("noise_sd".into(), fmt_f64(self.noise_sd)),
            ("n_reps".into(), self.n_reps.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Squared bias and dispersion of one smoothed batch.
///
/// Bias is `||mean_i S X_i - f||^2 / d`; the dispersion is
/// `(1/n) sum_i ||S X_i - mean||^2 / d`.
pub fn batch_bias_variance(smoother: &Smoother, rows: &[&[f64]], mean: &[f64]) -> Result<(f64, f64)> {
    let d = mean.len();
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    let smoothed = rows.iter().map(|r| smoother.apply(r)).collect::<Result<Vec<_>>>()?;
    let mut avg = vec![0.0; d];
    for s in &smoothed {
        for (a, v) in avg.iter_mut().zip(s) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= n as f64);
    let bias2 = stats::mse(&avg, mean);
    let var = smoothed.iter().map(|s| stats::mse(s, &avg)).sum::<f64>() / n as f64;
    Ok((bias2, var))
}

fn log_series(name: &str, x: &[f64], y: &[f64]) -> Result<(SlopeFit, PlotSeries)> {
    if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive for a log-log fit, got {v}"
        )));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = stats::fit_line(x, &ly);
    let points = x.iter().zip(&ly).map(|(a, b)| (*a, *b, fit.predict(*a))).collect();
    Ok((
        SlopeFit {
            quantity: name.into(),
            fit,
        },
        PlotSeries {
            name: name.into(),
            points,
        },
    ))
}

/// Convergence of the smoothed-mean estimator as the number of curves grows.
pub fn run_convergence(cfg: &ConvergenceConfig, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (family, binomials) = penalty_stencils()?;
    let penalty = order_penalty(&family, &binomials, cfg.order, cfg.eta, cfg.d)?;
    let smoothers = cfg
        .n_list
        .iter()
        .map(|n| Smoother::new(&penalty, cfg.params.alpha(*n)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_list.len())
        .flat_map(|k| (0..cfg.n_reps).map(move |rep| (k, rep)))
        .collect();

    let per_job = with_pool(threads, || {
        jobs.par_iter()
            .map(|&(k, rep)| -> Result<(f64, f64)> {
                let n = cfg.n_list[k];
                let params = GpParams {
                    n,
                    d: cfg.d,
                    lengthscale: cfg.lengthscale,
                    amplitude: cfg.amplitude,
                    noise_sd: cfg.noise_sd,
                };
                let batch = datagen::gp_batch(&params, rng::derive_seed(cfg.seed, &[n as u64, rep as u64]))?;
                let rows: Vec<&[f64]> = batch.rows().collect();
                batch_bias_variance(
                    &smoothers[k],
                    &rows,
                    batch.truth().expect("gp batches carry their mean"),
                )
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut report = ExperimentReport::new("convergence", cfg.record());
    let mut x = Vec::new();
    let mut series: [Vec<f64>; 5] = Default::default();
    for (k, &n) in cfg.n_list.iter().enumerate() {
        let chunk = &per_job[k * cfg.n_reps..(k + 1) * cfg.n_reps];
        let bias2 = chunk.iter().map(|c| c.0).sum::<f64>() / cfg.n_reps as f64;
        let var = chunk.iter().map(|c| c.1).sum::<f64>() / cfg.n_reps as f64;
        let row = ConvergenceRow {
            n,
            alpha: cfg.params.alpha(n),
            bias2,
            var,
            mse: bias2 + var,
            mse_x_bias2: (bias2 + var) * bias2,
            var_scaled: var / n as f64,
        };
        x.push((n as f64).ln());
        for (s, v) in series
            .iter_mut()
            .zip([row.mse, row.bias2, row.mse_x_bias2, row.var, row.var_scaled])
        {
            s.push(v);
        }
        report.diagnostics.convergence.push(row);
    }
    for (name, y) in ["mse", "bias2", "msebias", "var", "var_scaled"].iter().zip(&series) {
        let (fit, plot) = log_series(name, &x, y)?;
        report.diagnostics.slopes.push(fit);
        report.diagnostics.plots.push(plot);
    }
    report
        .diagnostics
        .scalars
        .push(("target_slope".into(), cfg.params.target_slope()));
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub n_draws: usize,
    pub d: usize,
    pub max_order: usize,
    pub seed: u64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            n_draws: 100_000,
            d: 31,
            max_order: 4,
            seed: 1,
        }
    }
}

/// Draws per independently seeded block; fixes the stream layout.
const ENERGY_BLOCK: usize = 1000;

/// Monte Carlo `E ||Dbar_r X||^2` under white noise against `d - 2 L_r`, plus
/// same-location cross-order covariances at the centre.
pub fn run_energy_decomposition(cfg: &EnergyConfig, threads: usize) -> Result<ExperimentReport> {
    let start = Instant::now();
    let family = canonical_family(cfg.max_order)?;
    let widest = family.members().iter().map(|s| s.half_width()).max().unwrap_or(0);
    if cfg.d < 2 * widest + 1 {
        return Err(Error::CurveTooShort {
            len: cfg.d,
            min: 2 * widest + 1,
        });
    }
    if cfg.n_draws < 2 {
        return Err(Error::InvalidParameter("n_draws must be >= 2".into()));
    }
    let orders = family.members().len();
    let centre = cfg.d / 2;
    let n_blocks = cfg.n_draws.div_ceil(ENERGY_BLOCK);

    // Per block: energy sums, then centre-value sums and cross-product sums.
    let blocks = with_pool(threads, || {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
                let mut rng = rng::stream(cfg.seed, &[rng::STREAM_ENERGY, b as u64]);
                let draws = ENERGY_BLOCK.min(cfg.n_draws - b * ENERGY_BLOCK);
                let mut energy = vec![0.0; orders];
                let mut first = vec![0.0; orders];
                let mut cross = vec![0.0; orders * orders];
                let mut x = vec![0.0; cfg.d];
                let mut at_centre = vec![0.0; orders];
                for _ in 0..draws {
                    x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    for (r, st) in family.members().iter().enumerate() {
                        let out = st.apply(&x)?;
                        energy[r] += stats::sum_sq(&out);
                        at_centre[r] = out[centre - st.half_width()];
                        first[r] += at_centre[r];
                    }
                    for r in 0..orders {
                        for s in 0..orders {
                            cross[r * orders + s] += at_centre[r] * at_centre[s];
                        }
                    }
                }
                Ok((energy, first, cross))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut energy = vec![0.0; orders];
    let mut first = vec![0.0; orders];
    let mut cross = vec![0.0; orders * orders];
    for (e, f, c) in &blocks {
        energy.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        first.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        cross.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    let n = cfg.n_draws as f64;
    let mut report = ExperimentReport::new(
        "energy",
        vec![
            ("n_draws".into(), cfg.n_draws.to_string()),
            ("d".into(), cfg.d.to_string()),
            ("max_order".into(), cfg.max_order.to_string()),
            ("seed".into(), cfg.seed.to_string()),
        ],
    );
    for (r, st) in family.members().iter().enumerate() {
        let exact = (cfg.d - 2 * st.half_width()) as f64;
        let monte_carlo = energy[r] / n;
        report.diagnostics.energies.push(EnergyRow {
            order: st.order(),
            half_width: st.half_width(),
            exact,
            monte_carlo,
            rel_error: (monte_carlo - exact).abs() / exact,
        });
    }
    for r in 0..orders {
        for s in r + 1..orders {
            let cov = (cross[r * orders + s] - first[r] * first[s] / n) / (n - 1.0);
            report.diagnostics.cross_covariances.push((r, s, cov));
        }
    }
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastConfig {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub order: usize,
    pub eta: f64,
    /// Local shift direction; a unit-norm random direction when `None`.
    pub shift: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            n: 200,
            d: 50,
            alpha: 1.0,
            order: 2,
            eta: 0.5,
            shift: None,
            seed: 1,
        }
    }
}

/// Centred contrasts of a location-family sample and the linearity check.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastResult {
    /// Row `i` is `S X_i - S tau`.
    pub h_values: Vec<Vec<f64>>,
    /// `n^{-1/2} sum_i h_i`.
    pub statistic: Vec<f64>,
    /// `|| H_n(tau + g / sqrt(n)) - H_n(tau) + S g ||`.
    pub linearity_residual: f64,
    pub shift: Vec<f64>,
}

impl ContrastResult {
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.h_values.len() as f64;
        let d = self.statistic.len();
        let mut m = vec![0.0; d];
        for row in &self.h_values {
            m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Largest `|mean| / (sd / sqrt(n))` over locations.
    pub fn max_abs_mean_z(&self) -> f64 {
        let n = self.h_values.len();
        let means = self.column_means();
        (0..self.statistic.len())
            .map(|t| {
                let col: Vec<f64> = self.h_values.iter().map(|r| r[t]).collect();
                let se = stats::sd(&col) / (n as f64).sqrt();
                if se > 0.0 {
                    means[t].abs() / se
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `X_i = tau + eps_i` with `tau` the sinusoid and `eps_i` standard normal.
pub fn run_contrast_linearity(cfg: &ContrastConfig) -> Result<ContrastResult> {
    if cfg.n < 2 {
        return Err(Error::InvalidParameter("n must be >= 2".into()));
    }
    let (family, binomials) = penalty_stencils()?;
    let penalty: PenaltyMatrix = order_penalty(&family, &binomials, cfg.order, cfg.eta, cfg.d)?;
    let smoother = Smoother::new(&penalty, cfg.alpha)?;
    let tau = datagen::sinusoid(cfg.d);
    let shift = match &cfg.shift {
        Some(g) => {
            crate::error::check_len(cfg.d, g.len())?;
            g.clone()
        }
        None => {
            let mut rng = rng::stream(cfg.seed, &[rng::STREAM_CONTRAST, 1]);
            let g: Vec<f64> = (0..cfg.d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = stats::sum_sq(&g).sqrt();
            g.into_iter().map(|v| v / norm).collect()
        }
    };
    let mut rng = rng::stream(cfg.seed, &[rng::STREAM_CONTRAST, 0]);
    let data: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| tau.iter().map(|t| t + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let smoothed = data.iter().map(|x| smoother.apply(x)).collect::<Result<Vec<_>>>()?;

    let root_n = (cfg.n as f64).sqrt();
    let statistic_at = |location: &[f64]| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let centre = smoother.apply(location)?;
        let h: Vec<Vec<f64>> = smoothed
            .iter()
            .map(|s| s.iter().zip(&centre).map(|(a, b)| a - b).collect())
            .collect();
        let mut stat = vec![0.0; cfg.d];
        for row in &h {
            stat.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        stat.iter_mut().for_each(|a| *a /= root_n);
        Ok((h, stat))
    };
    let (h_values, statistic) = statistic_at(&tau)?;
    let moved: Vec<f64> = tau.iter().zip(&shift).map(|(t, g)| t + g / root_n).collect();
    let (_, moved_stat) = statistic_at(&moved)?;
    let s_shift = smoother.apply(&shift)?;
    let residual: Vec<f64> = moved_stat
        .iter()
        .zip(&statistic)
        .zip(&s_shift)
        .map(|((m, h), sg)| m - h + sg)
        .collect();
    Ok(ContrastResult {
        h_values,
        statistic,
        linearity_residual: stats::sum_sq(&residual).sqrt(),
        shift,
    })
}

/// Wraps a contrast check as a report of scalars.
pub fn contrast_report(cfg: &ContrastConfig, result: &ContrastResult) -> ExperimentReport {
    let mut report = ExperimentReport::new(
        "linearity",
        vec![
            ("n".into(), cfg.n.to_string()),
            ("d".into(), cfg.d.to_string()),
            ("alpha".into(), fmt_f64(cfg.alpha)),
            ("order".into(), cfg.order.to_string()),
            ("eta".into(), fmt_f64(cfg.eta)),
            (
                "shift".into(),
                if cfg.shift.is_some() { "given" } else { "random_unit" }.into(),
            ),
            ("seed".into(), cfg.seed.to_string()),
        ],
    );
    let norm = stats::sum_sq(&result.statistic).sqrt();
    report.diagnostics.scalars = vec![
        ("linearity_residual".into(), result.linearity_residual),
        ("statistic_norm".into(), norm),
        ("max_abs_mean_z".into(), result.max_abs_mean_z()),
    ];
    report
}
