use lattice_szego::experiment::{
    run_experiment, run_experiment_with, write_report, ExperimentConfig, Family, OutputFormat, Report,
};
use lattice_szego::{Error, Execution};

fn config(family: Family, pairs: &[(&str, &str)]) -> ExperimentConfig {
    let pairs: Vec<(String, String)> = pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    ExperimentConfig::from_pairs(family, &pairs).unwrap()
}

fn small(family: Family) -> ExperimentConfig {
    config(family, &[("L", "30"), ("lambda_start", "40"), ("lambda_count", "3")])
}

#[test]
fn column_schemas() {
    let expect: [(Family, &str); 5] = [
        (Family::Weyl, "lambda,count,weyl,ratio"),
        (Family::Szego, "lambda,rank,lhs,rhs,abs_err,rel_err"),
        (Family::Szego2, "lambda,rank,lhs,rhs,abs_err,rel_err"),
        (Family::LsBound, "lambda,r,n_r,lhs_diff,rhs_bound,holds"),
        (
            Family::Tauberian,
            "lambda,phi_h,phi_v,transform_h,transform_v,lemma1_dev,lemma1_bound,lemma2_dev,h_side,v_side",
        ),
    ];
    for (family, header) in expect {
        let report = run_experiment(&small(family)).unwrap();
        assert_eq!(report.columns.join(","), header);
        assert_eq!(report.to_csv().lines().next().unwrap(), header);
        let lambdas = report.column("lambda").unwrap();
        assert!(lambdas.windows(2).all(|w| w[0] <= w[1]), "{family}: {lambdas:?}");
    }
}

#[test]
fn every_family_is_deterministic_and_mode_independent() {
    let symbol = |op: &str| config(Family::Symbol, &[("op", op), ("symbol", "shifted-cosine"), ("L", "24")]);
    let configs = [
        small(Family::Weyl),
        small(Family::Szego),
        small(Family::Szego2),
        small(Family::LsBound),
        small(Family::Tauberian),
        symbol("compose"),
        symbol("power"),
        symbol("class-probe"),
    ];
    for c in &configs {
        let a = run_experiment_with(c, Execution::Parallel).unwrap();
        let b = run_experiment_with(c, Execution::Parallel).unwrap();
        let s = run_experiment_with(c, Execution::Sequential).unwrap();
        assert_eq!(a.data_json(), b.data_json(), "{}", c.family);
        assert_eq!(a.data_json(), s.data_json(), "{}", c.family);
        assert_eq!(a.to_csv(), s.to_csv());
    }
}

#[test]
fn weyl_row_values() {
    let r = run_experiment(&config(Family::Weyl, &[("d", "2"), ("L", "12"), ("lambda_start", "16"), ("lambda_count", "2")])).unwrap();
    // 2^d λ^{d/k} with d = k = 2
    assert_eq!(r.column("weyl").unwrap(), vec![64.0, 128.0]);
    for row in &r.rows {
        assert_eq!(row[3], row[1] / row[2]);
    }
}

#[test]
fn constant_f_gives_exact_zero_errors() {
    for family in [Family::Szego, Family::Szego2] {
        let mut c = small(family);
        c.f = lattice_szego::szego::TestFunction::Polynomial(vec![1.0]);
        let r = run_experiment(&c).unwrap();
        assert!(r.column("abs_err").unwrap().iter().all(|&e| e == 0.0));
        assert!(r.column("rel_err").unwrap().iter().all(|&e| e == 0.0));
    }
}

#[test]
fn linear_f_gives_zero_ls_difference() {
    let c = config(Family::LsBound, &[("L", "30"), ("lambda_start", "40"), ("lambda_count", "3"), ("f", "poly:-1,4")]);
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert!(r.column("lhs_diff").unwrap().iter().all(|&v| v == 0.0));
    assert!(r.verdicts.iter().all(|v| v.passed));
}

#[test]
fn non_polynomial_f_in_ls_bound() {
    let c = config(Family::LsBound, &[("L", "30"), ("lambda_start", "60"), ("lambda_count", "2"), ("f", "exp")]);
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.column("holds").unwrap(), vec![1.0; 4]);
}

#[test]
fn auto_box_covers_the_largest_query() {
    let c = config(Family::Szego, &[("lambda_start", "50"), ("lambda_count", "2")]);
    assert_eq!(c.box_radius().unwrap(), 15); // 0.5 · 15² >= 100
    let ls = config(Family::LsBound, &[("lambda_start", "50"), ("lambda_count", "2")]);
    assert!(ls.box_radius().unwrap() > 15);
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.metadata.box_radius, Some(15));
    assert_eq!(r.metadata.trust_limit, 112.5);
}

#[test]
fn trust_window_is_enforced() {
    let pairs: Vec<(String, String)> = [("L", "10"), ("lambda_start", "40"), ("lambda_count", "2")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    match ExperimentConfig::from_pairs(Family::Szego, &pairs) {
        Err(Error::UntrustedWindow { lambda, limit }) => {
            assert_eq!(lambda, 80.0);
            assert_eq!(limit, 50.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn reports_round_trip_through_files() {
    let r = run_experiment(&small(Family::Tauberian)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("t.json");
    write_report(&r, OutputFormat::Json, &json).unwrap();
    let text = std::fs::read_to_string(&json).unwrap();
    let back = Report::from_json(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), text);
    let csv = dir.path().join("t.csv");
    write_report(&r, OutputFormat::Csv, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + r.rows.len());
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, r.rows[0]);
}

#[test]
fn tauberian_transforms_are_consistent() {
    let r = run_experiment(&small(Family::Tauberian)).unwrap();
    for row in &r.rows {
        let (transform_h, transform_v, dev) = (row[3], row[4], row[5]);
        assert!((transform_h / transform_v - 1.0).abs() - dev <= 1e-12);
        // B = Op(2 + cos x) has diagonal 2
        assert!((row[9] - 2.0).abs() <= 1e-8);
    }
}
