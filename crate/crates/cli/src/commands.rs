//! Subcommand implementations.

use std::io::Write;

use gridsmooth::baselines::{BasisKind, BasisSmoother, KernelSmoother};
use gridsmooth::datagen::{self, GpParams, NoiseFamily, NoiseSpec};
use gridsmooth::experiments::{self, ContrastConfig, ConvergenceConfig, EnergyConfig, Method, TableConfig};
use gridsmooth::penalty::order_penalty;
use gridsmooth::report::fmt_f64;
use gridsmooth::rng;
use gridsmooth::selection::{select_alpha, select_sequential, select_simultaneous};
use gridsmooth::smoother::{smooth, smooth_simultaneous};
use gridsmooth::stencils::{binomial_family, canonical_family, solved_family, Stencil, StencilFamily};
use gridsmooth::{Mode, PenaltySpec, Smoother};

use crate::config::{
    default_mode, Command, CurveKind, ExperimentArgs, ExperimentName, GenerateArgs, NoiseMix, RunConfig, SelectArgs,
    SmoothArgs, StencilArgs,
};
use crate::error::CliError;
use crate::io::{format_curves, read_curves, truth_path, write_file, write_report};

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn penalty_stencils() -> Result<(StencilFamily, Vec<Stencil>), CliError> {
    Ok((canonical_family(4)?, binomial_family(4)))
}

/// Executes a parsed command, writing primary output to `out`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match &cfg.command {
        Command::Stencil(a) => stencil(a, out),
        Command::Generate(a) => generate(a, out),
        Command::Smooth(a) => smooth_cmd(a, out),
        Command::Select(a) => select(a, out),
        Command::Experiment(a) => experiment(a, cfg.threads, out),
    }
}

fn stencil(a: &StencilArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rows: Vec<Stencil> = if a.binomial {
        binomial_family(a.order)
    } else if a.solve {
        solved_family(a.order)?.members().to_vec()
    } else {
        canonical_family(a.order)?.members().to_vec()
    };
    for s in rows {
        writeln!(out, "{s}").map_err(io_err)?;
    }
    Ok(())
}

fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = NoiseSpec {
        dof: a.dof,
        ..match a.mix {
            NoiseMix::White => NoiseSpec::white(a.noise, a.sigma),
            NoiseMix::Mixed => NoiseSpec::mixed(a.noise, a.sigma),
        }
    };
    let (rows, truth) = match a.curve {
        CurveKind::Gp => {
            if a.noise != NoiseFamily::Gaussian || a.mix != NoiseMix::White {
                return Err(CliError::Usage("gp curves take white gaussian noise only".into()));
            }
            let params = GpParams {
                n: a.n,
                d: a.d,
                lengthscale: a.lengthscale,
                amplitude: a.amplitude,
                noise_sd: a.sigma,
            };
            let batch = datagen::gp_batch(&params, a.seed)?;
            let rows = batch.rows().map(<[f64]>::to_vec).collect();
            (rows, batch.truth().map(<[f64]>::to_vec).unwrap_or_default())
        }
        kind => {
            let truth = match kind {
                CurveKind::Sinusoid => datagen::sinusoid(a.d),
                _ => datagen::irregular_curve(a.d, a.seed)?,
            };
            let rows = (0..a.n)
                .map(|i| {
                    let eps = datagen::noise(a.d, &spec, rng::derive_seed(a.seed, &[i as u64]))?;
                    Ok(truth.iter().zip(&eps).map(|(f, e)| f + e).collect())
                })
                .collect::<Result<Vec<Vec<f64>>, gridsmooth::Error>>()?;
            (rows, truth)
        }
    };
    write_file(&a.out, &format_curves(rows.iter().map(Vec::as_slice), a.d, a.header))?;
    let tpath = truth_path(&a.out);
    write_file(&tpath, &format_curves([truth.as_slice()], a.d, a.header))?;
    writeln!(out, "{}\n{}", a.out.display(), tpath.display()).map_err(io_err)?;
    Ok(())
}

fn emit(text: &str, path: Option<&std::path::Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(io_err),
    }
}

fn smooth_cmd(a: &SmoothArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = read_curves(&a.input)?;
    let d = file.batch.d();
    let (family, binomials) = penalty_stencils()?;
    let basis = |kind| BasisSmoother::new(kind, a.n_basis, a.order, a.alpha[0], d);
    let fitted: Vec<Vec<f64>> = match a.method {
        Method::Fourier | Method::BSpline => {
            let kind = if a.method == Method::Fourier {
                BasisKind::Fourier
            } else {
                BasisKind::BSpline
            };
            let s = basis(kind)?;
            file.batch.rows().map(|r| s.apply(r)).collect::<Result<_, _>>()?
        }
        Method::Kernel => {
            let k = KernelSmoother::new(d, a.bandwidth)?;
            file.batch.rows().map(|r| k.apply(r)).collect::<Result<_, _>>()?
        }
        Method::Convex | Method::Sequential | Method::ConvexGcv => {
            let mode = a.mode.unwrap_or(default_mode(a.method));
            file.batch
                .rows()
                .map(|r| {
                    let eta = a.eta.resolve(r)?;
                    let spec = if mode == Mode::Single {
                        PenaltySpec::single(a.order, eta, a.alpha[0])?
                    } else {
                        let alphas = if a.alpha.len() == 1 {
                            vec![a.alpha[0]; a.order]
                        } else {
                            a.alpha.clone()
                        };
                        PenaltySpec::descending(a.order, eta, alphas, mode)?
                    };
                    smooth(r, &spec, &family, &binomials)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let text = format_curves(fitted.iter().map(Vec::as_slice), d, file.header);
    emit(&text, a.out.as_deref(), out)
}

fn select(a: &SelectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = read_curves(&a.input)?;
    let d = file.batch.d();
    let (family, binomials) = penalty_stencils()?;
    let mut table = String::from("curve,order,eta,alpha,score,effective_df\n");
    let mut estimates = Vec::with_capacity(file.batch.n());
    let mut row = |curve: usize, order: usize, eta: f64, alpha: f64, score: f64, df: f64| {
        table.push_str(&format!(
            "{curve},{order},{},{},{},{}\n",
            fmt_f64(eta),
            fmt_f64(alpha),
            fmt_f64(score),
            fmt_f64(df)
        ));
    };
    for (i, x) in file.batch.rows().enumerate() {
        let eta = a.eta.resolve(x)?;
        let curve = i + 1;
        match a.mode {
            Mode::Single => {
                let p = order_penalty(&family, &binomials, a.order, eta, d)?;
                let r = select_alpha(x, &p, &a.alpha_grid.0)?;
                row(curve, a.order, eta, r.alpha_hat, r.score, r.effective_df);
                estimates.push(Smoother::new(&p, r.alpha_hat)?.apply(x)?);
            }
            Mode::Sequential => {
                let spec = PenaltySpec::descending(a.order, eta, vec![1.0; a.order], Mode::Sequential)?;
                let grids = vec![a.alpha_grid.0.clone(); a.order];
                let r = select_sequential(x, &spec, &grids, &family, &binomials)?;
                for (order, s) in &r.steps {
                    row(curve, *order, eta, s.alpha_hat, s.score, s.effective_df);
                }
                estimates.push(r.estimate);
            }
            Mode::Simultaneous => {
                let orders: Vec<usize> = (1..=a.order).rev().collect();
                let grids = vec![a.alpha_grid.0.clone(); a.order];
                let r = select_simultaneous(x, &orders, eta, &grids, &family, &binomials)?;
                for (order, alpha) in orders.iter().zip(&r.alphas) {
                    row(curve, *order, eta, *alpha, r.score, r.effective_df);
                }
                let spec = PenaltySpec::new(orders, eta, r.alphas, Mode::Simultaneous)?;
                estimates.push(smooth_simultaneous(x, &spec, &family, &binomials)?);
            }
        }
    }
    if let Some(path) = &a.estimates {
        write_file(
            path,
            &format_curves(estimates.iter().map(Vec::as_slice), d, file.header),
        )?;
    }
    emit(&table, a.out.as_deref(), out)
}

fn experiment(a: &ExperimentArgs, threads: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let report = match a.name {
        ExperimentName::Table1 | ExperimentName::Table2 => {
            let mut cfg = if a.name == ExperimentName::Table1 {
                TableConfig::table1()
            } else {
                TableConfig::table2()
            };
            cfg.seed = a.seed;
            cfg.gcv = a.gcv;
            if let Some(r) = a.reps {
                cfg.n_reps = r;
            }
            experiments::run_table(&cfg, threads)?
        }
        ExperimentName::Convergence => {
            let mut cfg = ConvergenceConfig {
                seed: a.seed,
                ..ConvergenceConfig::default()
            };
            if let Some(r) = a.reps {
                cfg.n_reps = r;
            }
            experiments::run_convergence(&cfg, threads)?
        }
        ExperimentName::Energy => {
            let mut cfg = EnergyConfig {
                seed: a.seed,
                ..EnergyConfig::default()
            };
            if let Some(n) = a.draws {
                cfg.n_draws = n;
            }
            experiments::run_energy_decomposition(&cfg, threads)?
        }
        ExperimentName::Linearity => {
            let mut cfg = ContrastConfig {
                seed: a.seed,
                ..ContrastConfig::default()
            };
            if let Some(r) = a.reps {
                cfg.n = r.max(2);
            }
            let result = experiments::run_contrast_linearity(&cfg)?;
            experiments::contrast_report(&cfg, &result)
        }
    };
    for path in write_report(&report, &a.out)? {
        writeln!(out, "{}", path.display()).map_err(io_err)?;
    }
    eprintln!("{}: {:.3} s", report.name, report.runtime_secs);
    Ok(())
}
