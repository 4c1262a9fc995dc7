use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stacky_geo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stacky-geo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn rotation_distance_matches_radius_difference() {
    let out = stacky_geo(&["dist", &scenario("rotation.json"), "--from", "1,0", "--to", "0,3"]);
    let v = json_stdout(&out);
    assert_eq!(v["schema"], 1);
    let d = v["queries"][0]["d_N"].as_f64().unwrap();
    assert!((d - 2.0).abs() <= 0.04, "d_N = {d}");
}

#[test]
fn parabola_normal_speed_at_one() {
    let out = stacky_geo(&["speed", &scenario("parabola.json"), "--t", "1.0", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,normal_speed,ambient_speed,angle"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((row[1] - 2.121320).abs() <= 1e-5, "speed {}", row[1]);
    assert!(row[1] <= row[2]);
}

#[test]
fn reflection_report_identifies_mirror_points() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("report");
    let out = stacky_geo(&["report", &scenario("z2_reflection.json"), "--out", out_dir.to_str().unwrap()]);
    let v = json_stdout(&out);
    let dist = &v["tasks"][0];
    assert_eq!(dist["command"], "dist");
    assert_eq!(dist["queries"][0]["from"], serde_json::json!([0.0, -0.5]));
    assert_eq!(dist["queries"][0]["to"], serde_json::json!([0.0, 0.5]));
    assert_eq!(dist["queries"][0]["d_N"].as_f64(), Some(0.0));
    // the vertical line crosses the mirror at t = 0
    let mins = &v["tasks"][2]["checks"];
    assert_eq!(mins[1]["minimizing"], false);
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("task00_dist.csv").exists());
    let csv = std::fs::read_to_string(out_dir.join("task03_gauss.csv")).unwrap();
    assert!(csv.starts_with("base,v1,v2,norm,distance,relative_error\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 20);
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sc = scenario("rotation.json");
    let run = |out: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_stacky-geo"))
            .args(["report", &sc, "--out", out.to_str().unwrap()])
            .env("STACKY_GEO_THREADS", threads)
            .output()
            .unwrap()
    };
    let oa = run(&a, "1");
    let ob = run(&b, "3");
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(oa.stdout, ob.stdout);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn geodesic_trajectory_csv() {
    let out = stacky_geo(&[
        "geodesic",
        &scenario("open_disk.json"),
        "--from",
        "0.5,0",
        "--velocity",
        "1,0",
        "--span",
        "0,0.4",
        "--samples",
        "5",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,v1,v2,normal_speed,stratum");
    assert_eq!(lines.len(), 6);
    let last: Vec<&str> = lines[5].split(',').collect();
    assert!((last[1].parse::<f64>().unwrap() - 0.9).abs() < 1e-9);
}

#[test]
fn leaving_the_disk_is_a_computation_error() {
    let out = stacky_geo(&["geodesic", &scenario("open_disk.json"), "--from", "0.5,0", "--velocity", "1,0", "--span", "0,1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("DomainExit"), "{err}");
    assert!(err.contains("open_disk"), "{err}");
}

#[test]
fn query_outside_the_domain_names_the_error() {
    let out = stacky_geo(&["dist", &scenario("open_disk.json"), "--from", "2,0", "--to", "0,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("OutOfDomain"));
}

#[test]
fn malformed_json_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "bad.json", "{\n  \"name\": \"x\",\n  \"model\": \"rotation\"\n  \"curves\": []\n}\n");
    let out = stacky_geo(&["length", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:4:"), "{err}");
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "extra.json", "{\n  \"name\": \"x\",\n  \"model\": \"rotation\",\n  \"colour\": 3\n}\n");
    let out = stacky_geo(&["length", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("extra.json:4:") && err.contains("colour"), "{err}");
}

#[test]
fn bad_expressions_point_at_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let body = "{\n  \"name\": \"x\",\n  \"model\": \"rotation\",\n  \"curves\": [\n    { \"name\": \"broken\", \"components\": [\"t\", \"t +* 2\"], \"domain\": [0, 1] }\n  ]\n}\n";
    let path = write_scenario(dir.path(), "expr.json", body);
    let out = stacky_geo(&["length", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expr.json:5:") && err.contains("broken"), "{err}");
}

#[test]
fn unresolved_names_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "names.json", "{\n  \"name\": \"x\",\n  \"model\": \"no_such_model\"\n}\n");
    let out = stacky_geo(&["length", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("names.json:3:"));

    let out = stacky_geo(&["speed", &scenario("parabola.json"), "--curve", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no curve named"));

    let out = stacky_geo(&["speed", &scenario("parabola.json"), "--t", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn expression_metrics_and_foliations_load() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "name": "scaled_plane",
  "patch": {
    "bounds": [[-2, -2], [2, 2]],
    "metric": [["4", "0"], ["0", "4"]]
  },
  "groupoid": { "kind": "submersion", "projection": ["x1"] },
  "curves": [{ "name": "diag", "components": ["t", "t"], "domain": [0, 1] }]
}
"#;
    let path = write_scenario(dir.path(), "scaled.json", body);
    let v = json_stdout(&stacky_geo(&["length", &path]));
    // only the x1 direction is normal; the metric doubles lengths
    let l = v["lengths"][0]["length"].as_f64().unwrap();
    assert!((l - 2.0).abs() < 1e-8, "{l}");

    let v = json_stdout(&stacky_geo(&["dist", &scenario("vertical_foliation.json"), "--from", "-1,1", "--to", "1,-1"]));
    let d = v["queries"][0]["d_N"].as_f64().unwrap();
    assert!((d - 2.0).abs() <= 0.04, "{d}");
}

#[test]
fn annulus_presentations_agree() {
    let v = json_stdout(&stacky_geo(&["dist", &scenario("annulus_radius.json"), "--from", "1.2,0", "--to", "0,-1.8"]));
    let d = v["queries"][0]["d_N"].as_f64().unwrap();
    assert!((d - 0.6).abs() <= 0.012, "{d}");
}
