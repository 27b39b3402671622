//! Experiment reports and their plain-text rendering.
//!
//! Rendering is a pure function of the report so identical runs produce
//! identical bytes. Wall-clock runtime is kept on the struct but never rendered.

use std::fmt::Write as _;

use crate::stats::LineFit;

/// Seventeen significant digits, round-trippable.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One `(method, noise, d)` cell of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: String,
    pub noise: String,
    pub d: usize,
    pub mse: f64,
    pub sd: f64,
}

/// Named slope fit on log-log axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub quantity: String,
    pub fit: LineFit,
}

/// Monte Carlo versus exact energy of one stencil order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub order: usize,
    pub half_width: usize,
    pub exact: f64,
    pub monte_carlo: f64,
    pub rel_error: f64,
}

/// One sample size of the convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub alpha: f64,
    pub bias2: f64,
    pub var: f64,
    pub mse: f64,
    pub mse_x_bias2: f64,
    /// `var / n`.
    pub var_scaled: f64,
}

/// Points of a log-log series with the fitted line evaluated at each.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    /// `(log_n, log_value, fit)`.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub slopes: Vec<SlopeFit>,
    pub energies: Vec<EnergyRow>,
    /// Same-location cross-order sample covariances `(r, s, cov)`.
    pub cross_covariances: Vec<(usize, usize, f64)>,
    pub convergence: Vec<ConvergenceRow>,
    pub plots: Vec<PlotSeries>,
    pub scalars: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    /// Ordered `key=value` record sufficient to rerun.
    pub config: Vec<(String, String)>,
    pub cells: Vec<Cell>,
    pub diagnostics: Diagnostics,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn new(name: &str, config: Vec<(String, String)>) -> Self {
        Self {
            name: name.to_string(),
            config,
            cells: Vec::new(),
            diagnostics: Diagnostics::default(),
            runtime_secs: 0.0,
        }
    }

    pub fn cell(&self, method: &str, noise: &str, d: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.noise == noise && c.d == d)
    }

    pub fn slope(&self, quantity: &str) -> Option<&LineFit> {
        self.diagnostics
            .slopes
            .iter()
            .find(|s| s.quantity == quantity)
            .map(|s| &s.fit)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.diagnostics.scalars.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// `(file name, contents)` pairs in a fixed order.
    pub fn render(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();

        let mut config = String::new();
        writeln!(config, "name={}", self.name).unwrap();
        for (k, v) in &self.config {
            writeln!(config, "{k}={v}").unwrap();
        }
        files.push(("config.txt".to_string(), config));

        let diag = &self.diagnostics;
        let report = if !diag.energies.is_empty() {
            let mut s = String::from("order,half_width,exact,monte_carlo,rel_error\n");
            for e in &diag.energies {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    e.order,
                    e.half_width,
                    fmt_f64(e.exact),
                    fmt_f64(e.monte_carlo),
                    fmt_f64(e.rel_error)
                )
                .unwrap();
            }
            s
        } else if !diag.convergence.is_empty() {
            let mut s = String::from("n,alpha,bias2,var,mse,mse_x_bias2,var_scaled\n");
            for r in &diag.convergence {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.n,
                    fmt_f64(r.alpha),
                    fmt_f64(r.bias2),
                    fmt_f64(r.var),
                    fmt_f64(r.mse),
                    fmt_f64(r.mse_x_bias2),
                    fmt_f64(r.var_scaled)
                )
                .unwrap();
            }
            s
        } else if !self.cells.is_empty() {
            let mut s = String::from("method,noise,d,mse,sd\n");
            for c in &self.cells {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    c.method,
                    c.noise,
                    c.d,
                    fmt_f64(c.mse),
                    fmt_f64(c.sd)
                )
                .unwrap();
            }
            s
        } else {
            let mut s = String::from("quantity,value\n");
            for (k, v) in &diag.scalars {
                writeln!(s, "{k},{}", fmt_f64(*v)).unwrap();
            }
            s
        };
        files.push(("report.csv".to_string(), report));

        if !diag.slopes.is_empty() || !diag.cross_covariances.is_empty() {
            let mut s = String::from("quantity,slope,intercept,r_squared\n");
            for f in &diag.slopes {
                writeln!(
                    s,
                    "{},{},{},{}",
                    f.quantity,
                    fmt_f64(f.fit.slope),
                    fmt_f64(f.fit.intercept),
                    fmt_f64(f.fit.r_squared)
                )
                .unwrap();
            }
            if !diag.cross_covariances.is_empty() {
                if diag.slopes.is_empty() {
                    s = String::new();
                }
                s.push_str("order_r,order_s,covariance\n");
                for (r, o, c) in &diag.cross_covariances {
                    writeln!(s, "{r},{o},{}", fmt_f64(*c)).unwrap();
                }
            }
            files.push(("diagnostics.csv".to_string(), s));
        }

        for p in &diag.plots {
            let mut s = String::from("log_n\tlog_value\tfit\n");
            for (x, y, f) in &p.points {
                writeln!(s, "{}\t{}\t{}", fmt_f64(*x), fmt_f64(*y), fmt_f64(*f)).unwrap();
            }
            files.push((format!("plotdata_{}.tsv", p.name), s));
        }
        files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn table_report_layout() {
        let mut r = ExperimentReport::new("table2", vec![("seed".into(), "1".into())]);
        r.cells.push(Cell {
            method: "sequential".into(),
            noise: "gaussian".into(),
            d: 100,
            mse: 0.5,
            sd: 0.25,
        });
        r.runtime_secs = 3.0;
        let files = r.render();
        assert_eq!(files[0], ("config.txt".into(), "name=table2\nseed=1\n".into()));
        assert!(files[1]
            .1
            .starts_with("method,noise,d,mse,sd\nsequential,gaussian,100,5.0000000000000000e-1,"));
        assert_eq!(files.len(), 2);
    }
}
