use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsler-area")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn check_metric_reports_unit_constants_for_euclidean() {
    let out = bin(&["check-metric", "--kind", "euclidean", "--grid", "32"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["validity"]["verdict"], "finsler");
    for key in ["min_f_on_sphere", "max_f_on_sphere", "lambda_f"] {
        assert!((v["validity"][key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}");
    }
}

#[test]
fn threshold_scan_finds_randers_bound() {
    let out = bin(&["threshold-scan", "--family", "randers", "--m", "2", "--grid", "64"]);
    assert_eq!(out.status.code(), Some(0));
    let t = json(&out)["threshold"].as_f64().unwrap();
    assert!((t - 1.0 / 3f64.sqrt()).abs() < 5e-3, "{t}");
}

#[test]
fn integrand_scan_writes_axis_rows_first() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["integrand-scan", "--kind", "randers", "--b", "0,0,0.5", "--grid", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("integrand_scan.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let first = rows.records().next().unwrap().unwrap();
    let area: f64 = first[3].parse().unwrap();
    assert!((area - 0.75f64.powf(1.5)).abs() < 1e-10);
    assert!(dir.path().join("integrand_scan.json").exists());
}

#[test]
fn ellipticity_scan_flags_lost_ellipticity() {
    let ok = bin(&["ellipticity-scan", "--kind", "randers", "--b", "0,0,0.5", "--grid", "6", "--quad", "64"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["elliptic"], true);
    let bad = bin(&["ellipticity-scan", "--kind", "randers", "--b", "0,0,0.65", "--grid", "6", "--quad", "64"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(json(&bad)["elliptic"], false);
}

#[test]
fn solve_graph_writes_solution_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bin(&["solve-graph", "--domain", "square", "--resolution", "6", "--data", "affine:0.3,0.1,-0.2", "--kind", "randers", "--b", "0.1,0,0.2", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solve_graph.json")).unwrap()).unwrap();
    assert_eq!(summary["maximum_principle"]["holds"], true);
    let mut rdr = csv::Reader::from_path(dir.path().join("solution.csv")).unwrap();
    assert_eq!(rdr.records().count(), 49);
}

#[test]
fn solve_graph_reports_lost_ellipticity() {
    let out = bin(&["solve-graph", "--resolution", "3", "--kind", "randers", "--b", "0,0,0.7", "--data", "wave:0.5,2"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_isop_holds_on_randers_solution() {
    let out = bin(&["verify-isop", "--resolution", "6", "--kind", "randers", "--b", "0,0,0.2", "--data", "wave:0.3,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert_eq!(v["holds"], true);
}

#[test]
fn funk_roundtrip_on_builtin_function() {
    let out = bin(&["funk-roundtrip", "--degree", "8"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["sup_error"].as_f64().unwrap() < 1e-8);
    // The built-in function has degree 8, so a lower band limit cannot reproduce it.
    assert_eq!(bin(&["funk-roundtrip", "--degree", "6"]).status.code(), Some(1));
}

#[test]
fn funk_roundtrip_from_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let grid = finsler_area::radon::funk::SphereGrid::sample(|y| 1.0 + y[0] * y[1] - 0.5 * y[2] * y[2], 14, 28);
    grid.write_csv(fs::File::create(&path).unwrap()).unwrap();
    let out = bin(&["funk-roundtrip", "--degree", "6", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["sup_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["check-metric", "--grid", "many"]).status.code(), Some(2));
    assert_eq!(bin(&["check-metric", "--metric", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(bin(&["solve-graph", "--data", "cubic:1"]).status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"kind": "matsumoto", "b": [0.0, 0.0, 0.7], "grid": 16}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(bin(&["check-metric", "--config", c]).status.code(), Some(1));
    assert_eq!(bin(&["check-metric", "--config", c, "--b", "0,0,0.2"]).status.code(), Some(0));
}

#[test]
fn selftests_succeed() {
    for cmd in ["check-metric", "symmetrize", "integrand-scan", "funk-roundtrip", "solve-graph"] {
        let out = bin(&[cmd, "--selftest"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert_eq!(json(&out)["passed"], true);
    }
}
