//! Argument parsing and validation.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use gridsmooth::datagen::NoiseFamily;
use gridsmooth::experiments::Method;
use gridsmooth::selection::log_grid;
use gridsmooth::Mode;

/// Blend weight, fixed or estimated per curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Value(f64),
    Auto,
}

impl Eta {
    pub fn resolve(self, curve: &[f64]) -> gridsmooth::Result<f64> {
        match self {
            Eta::Value(v) => Ok(v),
            Eta::Auto => gridsmooth::selection::eta_heuristic(curve),
        }
    }
}

impl std::fmt::Display for Eta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eta::Value(v) => write!(f, "{v}"),
            Eta::Auto => f.write_str("auto"),
        }
    }
}

fn parse_eta(s: &str) -> Result<Eta, String> {
    if s == "auto" {
        return Ok(Eta::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("expected a number in [0, 1] or `auto`, got {s:?}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(Eta::Value(v))
    } else {
        Err(format!("eta must lie in [0, 1], got {v}"))
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("malformed number {s:?}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite value >= 0, got {s}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match parse_nonneg(s)? {
        v if v > 0.0 => Ok(v),
        _ => Err(format!("expected a value > 0, got {s}")),
    }
}

/// Logarithmically spaced alpha values.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid(pub Vec<f64>);

fn parse_alpha_grid(s: &str) -> Result<AlphaGrid, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [min, max, count] = parts[..] else {
        return Err(format!("expected min,max,count, got {s:?}"));
    };
    let min = parse_positive(min)?;
    let max = parse_positive(max)?;
    let count: usize = count.parse().map_err(|_| format!("malformed count {count:?}"))?;
    log_grid(min, max, count).map(AlphaGrid).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: gridsmooth::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseFamily, String> {
    s.parse().map_err(|e: gridsmooth::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gridsmooth::Error| e.to_string())
}

fn parse_order(s: &str) -> Result<usize, String> {
    let r: usize = s.parse().map_err(|_| format!("malformed order {s:?}"))?;
    if (1..=4).contains(&r) {
        Ok(r)
    } else {
        Err(format!("order must be within 1..=4, got {r}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gridsmooth",
    version,
    about = "Penalized smoothing with decorrelated difference penalties"
)]
struct Cli {
    /// Worker threads for experiments (0 uses every core).
    #[arg(long, global = true, env = "GRIDSMOOTH_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Print the decorrelated stencil family, one `order L w...` line each.
    Stencil(StencilArgs),
    /// Simulate noisy curves to CSV, with the truth in `<out>.truth.csv`.
    Generate(GenerateArgs),
    /// Smooth every curve of a CSV file.
    Smooth(SmoothArgs),
    /// Choose smoothing parameters by GCV for every curve of a CSV file.
    Select(SelectArgs),
    /// Run a simulation study and write its report files.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct StencilArgs {
    /// Highest order printed.
    #[arg(long, default_value_t = 4, value_parser = parse_order_or_zero)]
    pub order: usize,
    /// Recompute the rows from the constraint system instead of the table.
    #[arg(long)]
    pub solve: bool,
    /// Print the classical binomial stencils instead.
    #[arg(long, conflicts_with = "solve")]
    pub binomial: bool,
}

fn parse_order_or_zero(s: &str) -> Result<usize, String> {
    match s {
        "0" => Ok(0),
        _ => parse_order(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Sinusoid,
    Irregular,
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseMix {
    /// Independent noise.
    White,
    /// 0.7 independent plus 0.3 cumulative.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = CurveKind::Sinusoid)]
    pub curve: CurveKind,
    /// Number of curves.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Grid size.
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value = "gaussian", value_parser = parse_noise)]
    pub noise: NoiseFamily,
    #[arg(long, default_value_t = 0.2, value_parser = parse_nonneg)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = NoiseMix::White)]
    pub mix: NoiseMix,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = gridsmooth::datagen::DEFAULT_DOF)]
    pub dof: f64,
    /// Gaussian-process lengthscale on the unit interval.
    #[arg(long, default_value_t = 0.1, value_parser = parse_positive)]
    pub lengthscale: f64,
    /// Gaussian-process amplitude.
    #[arg(long, default_value_t = 1.0, value_parser = parse_nonneg)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write a `t1,...,td` header row.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SmoothArgs {
    /// Input CSV, one curve per row.
    pub input: PathBuf,
    /// convex, sequential, fourier, bspline or kernel.
    #[arg(long, default_value = "convex", value_parser = parse_method)]
    pub method: Method,
    /// Overrides the method's default mode (convex: single, sequential: sequential).
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Penalty order; the highest order for multi-order modes.
    #[arg(long, default_value_t = 2, value_parser = parse_order)]
    pub order: usize,
    #[arg(long, default_value = "0.5", value_parser = parse_eta)]
    pub eta: Eta,
    /// One alpha, or one per order from the highest down.
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = parse_nonneg)]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = gridsmooth::baselines::DEFAULT_N_BASIS)]
    pub n_basis: usize,
    /// Kernel bandwidth as a fraction of the unit interval.
    #[arg(long, default_value_t = 0.05, value_parser = parse_positive)]
    pub bandwidth: f64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SelectArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "single", value_parser = parse_mode)]
    pub mode: Mode,
    #[arg(long, default_value_t = 2, value_parser = parse_order)]
    pub order: usize,
    #[arg(long, default_value = "0.5", value_parser = parse_eta)]
    pub eta: Eta,
    /// Logarithmic grid `min,max,count`.
    #[arg(long, default_value = "1e-4,1e4,40", value_parser = parse_alpha_grid)]
    pub alpha_grid: AlphaGrid,
    /// Selection table (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the curves smoothed at the selected parameters.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Table1,
    Table2,
    Convergence,
    Energy,
    Linearity,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: ExperimentName,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Replications (tables) or batches per sample size (convergence).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Monte Carlo draws for the energy study.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Adds a GCV-tuned convex row to the tables.
    #[arg(long)]
    pub gcv: bool,
}

/// A validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub threads: usize,
    pub command: Command,
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(kind, msg)
}

fn validate(cli: &Cli) -> Result<(), clap::Error> {
    match &cli.command {
        Command::Smooth(a) => {
            let mode = a.mode.unwrap_or(default_mode(a.method));
            let discrete = matches!(a.method, Method::Convex | Method::Sequential);
            if a.method == Method::ConvexGcv {
                return Err(usage(
                    ErrorKind::InvalidValue,
                    "convex_gcv is an experiment row; use `select`",
                ));
            }
            if !discrete && a.mode.is_some() {
                return Err(usage(
                    ErrorKind::ArgumentConflict,
                    "--mode applies to convex and sequential only",
                ));
            }
            let n_alpha = a.alpha.len();
            let ok = match (discrete, mode) {
                (true, Mode::Single) | (false, _) => n_alpha == 1,
                (true, _) => n_alpha == 1 || n_alpha == a.order,
            };
            if !ok {
                return Err(usage(
                    ErrorKind::WrongNumberOfValues,
                    format!("got {n_alpha} alpha values for order {} in {mode} mode", a.order),
                ));
            }
            if a.n_basis < 4 {
                return Err(usage(ErrorKind::InvalidValue, "--n-basis must be >= 4"));
            }
        }
        Command::Generate(g) => {
            if g.n == 0 || g.d < 8 {
                return Err(usage(ErrorKind::InvalidValue, "generate needs --n >= 1 and --d >= 8"));
            }
            if g.noise == NoiseFamily::StudentT && !(g.dof > 2.0) {
                return Err(usage(ErrorKind::InvalidValue, "--dof must exceed 2"));
            }
        }
        Command::Experiment(e) => {
            if e.reps == Some(0) || e.draws.is_some_and(|d| d < 2) {
                return Err(usage(ErrorKind::InvalidValue, "--reps must be >= 1 and --draws >= 2"));
            }
        }
        Command::Stencil(_) | Command::Select(_) => {}
    }
    Ok(())
}

pub fn default_mode(method: Method) -> Mode {
    match method {
        Method::Sequential => Mode::Sequential,
        _ => Mode::Single,
    }
}

/// Parses and validates `argv` (program name first).
///
/// Errors carry clap's exit code: 2 for usage problems, 0 for `--help`.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    validate(&cli)?;
    Ok(RunConfig {
        threads: cli.threads,
        command: cli.command,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<RunConfig, clap::Error> {
        parse_args(std::iter::once("gridsmooth").chain(args.split_whitespace()))
    }

    #[test]
    fn smooth_example_is_valid() {
        let cfg = parse("smooth --method convex --order 2 --eta 0.5 --alpha 1.0 in.csv").unwrap();
        let Command::Smooth(a) = cfg.command else { panic!() };
        assert_eq!(a.method, Method::Convex);
        assert_eq!(a.eta, Eta::Value(0.5));
        assert_eq!(a.alpha, vec![1.0]);
    }

    #[test]
    fn eta_out_of_range_is_usage_error() {
        let e = parse("smooth --eta 1.5 in.csv").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn eta_auto_and_alpha_grid() {
        let cfg = parse("select --eta auto --alpha-grid 0.01,100,5 in.csv").unwrap();
        let Command::Select(a) = cfg.command else { panic!() };
        assert_eq!(a.eta, Eta::Auto);
        assert_eq!(a.alpha_grid.0.len(), 5);
        assert!((a.alpha_grid.0[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_inputs_are_usage_errors() {
        for bad in [
            "smooth --alpha abc in.csv",
            "smooth --order 7 in.csv",
            "select --alpha-grid 1,2 in.csv",
            "select --mode diagonal in.csv",
            "smooth --method sequential --alpha 1,2 --order 4 in.csv",
            "experiment --name table9 --out x",
            "smooth --frobnicate in.csv",
            "experiment --out x",
        ] {
            assert_eq!(parse(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn experiment_defaults() {
        let cfg = parse("experiment --name table2 --out results/").unwrap();
        let Command::Experiment(e) = cfg.command else { panic!() };
        assert_eq!(e.name, ExperimentName::Table2);
        assert_eq!(e.seed, 1);
        assert_eq!(e.reps, None);
        assert_eq!(cfg.threads, 0);
    }

    #[test]
    fn per_order_alphas_for_sequential() {
        let cfg = parse("smooth --method sequential --order 3 --alpha 1,2,3 in.csv").unwrap();
        let Command::Smooth(a) = cfg.command else { panic!() };
        assert_eq!(a.alpha, vec![1.0, 2.0, 3.0]);
    }
}
