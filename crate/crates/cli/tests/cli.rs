use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gridsmooth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsmooth"))
        .args(args)
        .env_remove("GRIDSMOOTH_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stencil_lines_have_order_halfwidth_and_weights() {
    let o = gridsmooth(&["stencil", "--order", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for (r, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields[0].parse::<usize>().unwrap(), r);
        let l: usize = fields[1].parse().unwrap();
        assert_eq!(fields.len(), 2 + 2 * l + 1);
        let w: Vec<f64> = fields[2..].iter().map(|f| f.parse().unwrap()).collect();
        assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
    }
    assert!(lines[3].starts_with("3 3 "));
}

#[test]
fn solved_and_canonical_stencils_agree() {
    let a = stdout(&gridsmooth(&["stencil", "--order", "4"]));
    let b = stdout(&gridsmooth(&["stencil", "--order", "4", "--solve"]));
    for (x, y) in a.lines().zip(b.lines()) {
        let xs: Vec<f64> = x.split(' ').skip(2).map(|f| f.parse().unwrap()).collect();
        let ys: Vec<f64> = y.split(' ').skip(2).map(|f| f.parse().unwrap()).collect();
        assert_eq!(xs.len(), ys.len());
        assert!(xs.iter().zip(&ys).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["bogus"][..],
        &["stencil", "--order", "9"],
        &["select", "in.csv", "--eta", "1.5"],
        &["select", "in.csv", "--alpha-grid", "1,0.1,5"],
        &["select", "in.csv", "--mode", "sideways"],
        &["experiment", "--name", "table3", "--out", "x"],
        &["smooth", "in.csv", "--method", "kernel", "--mode", "sequential"],
    ] {
        let o = gridsmooth(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn generate_writes_curves_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub/curves.csv");
    let o = gridsmooth(&[
        "generate",
        "--curve",
        "sinusoid",
        "--n",
        "3",
        "--d",
        "40",
        "--header",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curves = fs::read_to_string(&out).unwrap();
    let truth = fs::read_to_string(dir.path().join("sub/curves.truth.csv")).unwrap();
    assert!(curves.starts_with("t1,t2,"));
    assert_eq!(curves.lines().count(), 4);
    assert_eq!(truth.lines().count(), 2);
    assert!(!curves.contains('\r'));
    let first: Vec<f64> = curves
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(first.len(), 40);

    let again = dir.path().join("again.csv");
    gridsmooth(&[
        "generate",
        "--curve",
        "sinusoid",
        "--n",
        "3",
        "--d",
        "40",
        "--header",
        "--out",
        path_str(&again),
    ]);
    assert_eq!(curves, fs::read_to_string(&again).unwrap());
}

fn smooth_file(input: &Path, args: &[&str]) -> Vec<f64> {
    let mut a = vec!["smooth", path_str(input)];
    a.extend_from_slice(args);
    let o = gridsmooth(&a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    stdout(&o).trim().split(',').map(|c| c.parse().unwrap()).collect()
}

#[test]
fn polynomials_in_the_null_space_pass_through() {
    let dir = tempfile::tempdir().unwrap();
    let line = dir.path().join("line.csv");
    let row: Vec<String> = (0..30).map(|t| format!("{}", 1.0 + 0.25 * t as f64)).collect();
    fs::write(&line, format!("{}\n", row.join(","))).unwrap();
    let fitted = smooth_file(&line, &["--method", "convex", "--order", "2", "--alpha", "100"]);
    for (t, v) in fitted.iter().enumerate() {
        assert!((v - (1.0 + 0.25 * t as f64)).abs() < 1e-9, "t={t}: {v}");
    }

    let flat = dir.path().join("flat.csv");
    fs::write(&flat, format!("{}\n", vec!["2.5"; 30].join(","))).unwrap();
    for args in [
        &["--method", "sequential", "--order", "3", "--alpha", "10"][..],
        &[
            "--method",
            "convex",
            "--mode",
            "simultaneous",
            "--order",
            "2",
            "--alpha",
            "5,7",
        ],
    ] {
        for v in smooth_file(&flat, args) {
            assert!((v - 2.5).abs() < 1e-9, "{args:?}: {v}");
        }
    }
}

#[test]
fn select_reports_one_row_per_curve_and_writes_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    gridsmooth(&["generate", "--n", "4", "--d", "50", "--out", path_str(&input)]);
    let est = dir.path().join("est.csv");
    let o = gridsmooth(&[
        "select",
        path_str(&input),
        "--alpha-grid",
        "1e-3,1e3,13",
        "--eta",
        "auto",
        "--estimates",
        path_str(&est),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("curve,order,eta,alpha,score,effective_df"));
    assert_eq!(lines.count(), 4);
    assert_eq!(fs::read_to_string(&est).unwrap().lines().count(), 4);

    let o = gridsmooth(&["select", path_str(&input), "--mode", "sequential", "--order", "3"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 4 * 3);
}

#[test]
fn malformed_input_exits_with_one_and_locates_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("ragged.csv", "1,2,3\n4,5\n", "row 2"),
        ("text.csv", "1,2,3\n4,oops,6\n", "row 2, column 2"),
        ("empty.csv", "", "no curves"),
    ];
    for (name, body, needle) in cases {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        let o = gridsmooth(&["smooth", path_str(&p)]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = gridsmooth(&["smooth", path_str(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn energy_experiment_writes_report_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("energy");
    let o = gridsmooth(&[
        "experiment",
        "--name",
        "energy",
        "--draws",
        "2000",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("order,half_width,exact,monte_carlo,rel_error"));
    let orders: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(orders, ["0", "1", "2", "3", "4"]);
    let config = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(config.starts_with("name=energy\n"));
    assert!(config.lines().all(|l| l.contains('=')));
    assert!(!config.contains("thread"));
}

#[test]
fn convergence_experiment_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv");
    let o = gridsmooth(&[
        "experiment",
        "--name",
        "convergence",
        "--reps",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plot = fs::read_to_string(out.join("plotdata_msebias.tsv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("log_n\tlog_value\tfit"));
    assert_eq!(lines.count(), 7);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("n,alpha,bias2,var,mse,mse_x_bias2,var_scaled\n"));
}

#[test]
fn table_experiment_reports_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2");
    let o = gridsmooth(&["experiment", "--name", "table2", "--reps", "2", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("method,noise,d,mse,sd"));
    assert_eq!(lines.count(), 5 * 3 * 3);
}

#[test]
fn thread_count_from_environment_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_gridsmooth"))
            .args([
                "experiment",
                "--name",
                "energy",
                "--draws",
                "3000",
                "--out",
                path_str(&out),
            ])
            .env("GRIDSMOOTH_THREADS", env)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(out.join("report.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("4", "b"));
    let bad = Command::new(env!("CARGO_BIN_EXE_gridsmooth"))
        .args(["stencil"])
        .env("GRIDSMOOTH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn linearity_experiment_reports_scalars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lin");
    let o = gridsmooth(&["experiment", "--name", "linearity", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("quantity,value\n"));
    let residual: f64 = report
        .lines()
        .find(|l| l.starts_with("linearity_residual,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-10);
}
