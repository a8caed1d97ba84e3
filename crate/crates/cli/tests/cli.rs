use std::fs;
use std::process::{Command, Output};

use lattice_szego::experiment::Report;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_szego-lab"))
        .args(args)
        .output()
        .expect("spawn szego-lab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn weyl_csv_to_stdout() {
    let o = lab(&["weyl", "--L", "40", "--lambda-start", "100", "--lambda-count", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,count,weyl,ratio");
    assert_eq!(lines.len(), 4);
    // V <= H <= V + 4, so #{n² + 4 <= 100} <= count <= #{n² <= 100}
    let first: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first[0], 100.0);
    assert!((19.0..=21.0).contains(&first[1]), "{}", first[1]);
    assert_eq!(first[2], 20.0);
    assert_eq!(first[3], first[1] / 20.0);
}

#[test]
fn szego_with_constant_f_has_zero_errors() {
    let o = lab(&["szego", "--L", "30", "--lambda-start", "50", "--lambda-count", "3", "--f", "poly:1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "lambda,rank,lhs,rhs,abs_err,rel_err");
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[4], "0.0000000000000000e0");
        assert_eq!(cols[5], "0.0000000000000000e0");
    }
}

#[test]
fn ls_bound_linear_f_is_exact() {
    let o = lab(&["ls-bound", "--L", "30", "--lambda-start", "60", "--lambda-count", "2", "--f", "poly:3,-2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "0.0000000000000000e0");
        assert_eq!(cols[5], "1.0000000000000000e0");
    }
}

#[test]
fn json_file_output_and_config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out.json");
    fs::write(&cfg, "# weyl sweep\nL = 40\nlambda_start = 100\nlambda_count = 4\nformat = csv\n").unwrap();
    let o = lab(&[
        "weyl",
        "--config",
        cfg.to_str().unwrap(),
        "--lambda-count",
        "2",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let text = fs::read_to_string(&out).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.metadata.box_radius, Some(40));
    assert_eq!(report.metadata.config["lambda_count"], "2");
}

#[test]
fn invalid_config_exits_with_one() {
    let o = lab(&["szego", "--theta", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("theta"));
    let o = lab(&["szego", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = lab(&["tauberian", "--d", "2", "--m", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn untrusted_window_reports_the_limit() {
    let o = lab(&["weyl", "--L", "10", "--lambda-start", "100", "--lambda-count", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("untrusted-window"), "{err}");
    assert!(err.contains("50"), "{err}");
}

#[test]
fn numerical_failure_exits_with_two() {
    // a 4-point x-grid cannot resolve cos(2x)
    let o = lab(&["szego", "--L", "20", "--lambda-start", "50", "--lambda-count", "1", "--x-grid", "4", "--symbol-param", "coeffs=1,0,1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("under-resolved-symbol"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let o = lab(&["weyl", "--L", "20", "--lambda-count", "1", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent-dir/x.csv"));
}

#[test]
fn symbol_utilities_run() {
    for op in ["compose", "power", "class-probe"] {
        let o = lab(&["symbol", "--op", op, "--symbol", "shifted-cosine", "--L", "24"]);
        assert!(o.status.success(), "{op}: {}", stderr(&o));
        assert!(stdout(&o).lines().count() > 1);
    }
    let o = lab(&["symbol", "--op", "class-probe", "--symbol", "diagonal", "--class-order", "-1"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn repeated_runs_are_identical() {
    let args = ["szego2", "--L", "30", "--lambda-start", "50", "--lambda-count", "3"];
    let a = lab(&args);
    let b = lab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert_eq!(lab(&seq).stdout, a.stdout);
}
