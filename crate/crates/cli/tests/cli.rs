use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn riccati(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riccati"))
        .args(args)
        .env("RICCATI_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit status")
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn conv_preset_agrees_with_its_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = riccati(&["run", "--model", "conv", "--t", "1", "--oracle", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    let q = &r["queries"][0];
    assert!(q["oracle_error"].as_f64().unwrap() < 1e-3);
    assert!(q["fredholm_residual"].as_f64().unwrap() < 1e-10);
    assert!(out.join("g_t1.csv").exists() && out.join("plotdata_t1.csv").exists());
}

#[test]
fn field_csv_has_header_and_full_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model":"corr","grid":{"half_width":5,"n":16},"b":{"family":"constant","value":0.5},"times":{"t_final":0.5,"query":[0.25,0.5]}}"#,
    );
    let o = riccati(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("g_t0.25.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,re,im"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 256);
    // Row-major: y varies fastest.
    assert_eq!(rows[0][0], rows[1][0]);
    assert!(rows[0][1] < rows[1][1]);
    let mantissa = text.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(mantissa.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
    assert_eq!(report(&out)["queries"].as_array().unwrap().len(), 2);
}

#[test]
fn odd_grid_is_rejected_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "odd.json", r#"{"model":"conv","grid":{"half_width":10,"n":127}}"#);
    let o = riccati(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "bad.json", r#"{"model":"conv","grid":{"half_width":10,"n":64,"extra":1}}"#);
    let o = riccati(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let o = riccati(&["run", "--model", "matrix", "--seed", "11", "--oracle", "--out-dir", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "timings.json")
        .collect();
    names.sort();
    assert!(names.len() >= 3);
    for n in names {
        let a = std::fs::read(dirs[0].join(&n)).unwrap();
        let b = std::fs::read(dirs[1].join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn matrix_dt_sweep_shows_fourth_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = riccati(&[
        "sweep", "--model", "matrix", "--param", "dt", "--values", "0.2,0.1,0.05,0.025", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let orders: Vec<f64> = summary["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["observed_order"].as_f64())
        .collect();
    assert_eq!(orders.len(), 2);
    for p in orders {
        assert!((p - 4.0).abs() < 0.3, "observed order {p}");
    }
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn conv_time_sweep_brackets_the_pole() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // ĝ₀(0) = −√π, so 1 + (eᵗ − 1)ĝ₀(0) vanishes at t = ln(1 + 1/√π).
    let cfg = write(
        tmp.path(),
        "neg.json",
        r#"{"model":"conv","grid":{"half_width":10,"n":128},"g0":{"family":"gaussian","amplitude":-1.0}}"#,
    );
    let o = riccati(&[
        "sweep", "--config", &cfg, "--param", "t", "--values", "0.2,0.4,0.6,0.8", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let b = &summary["critical_bracket"];
    assert_eq!(b["last_ok"].as_f64(), Some(0.4));
    assert_eq!(b["first_failed"].as_f64(), Some(0.6));
    let tc = b["t_critical"].as_f64().unwrap();
    let expected = (1.0 + 1.0 / std::f64::consts::PI.sqrt()).ln();
    assert!((tc - expected).abs() < 1e-3, "{tc} vs {expected}");
    assert_eq!(summary["rows"][2]["status"], "pole_crossing");
}

#[test]
fn pole_crossing_run_exits_with_breakdown_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "neg.json",
        r#"{"model":"conv","grid":{"half_width":10,"n":128},"g0":{"family":"gaussian","amplitude":-1.0}}"#,
    );
    let o = riccati(&["run", "--config", &cfg, "--t", "0.6", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(report(&out)["status"], "pole_crossing");
}

#[test]
fn empty_sweep_values_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = riccati(&["sweep", "--model", "matrix", "--param", "dt", "--values", "", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn oracle_disagreement_exits_five() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "tight.json",
        r#"{"model":"burgers","grid":{"half_width":10,"n":64},"times":{"t_final":0.5,"dt":0.05},"oracle_tolerance":1e-15}"#,
    );
    let o = riccati(&["run", "--config", &cfg, "--oracle", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["status"], "oracle_disagreement");
}

#[test]
fn anti_diffusive_symbol_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "anti.json", r#"{"model":"conv","grid":{"half_width":10,"n":64},"symbol":[0,0,-1]}"#);
    let o = riccati(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn general_path_run_matches_fast_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "small.json",
        r#"{"model":"corr","grid":{"half_width":5,"n":32},"b":{"family":"gaussian_density","sigma":0.5},"times":{"t_final":1.0,"dt":0.01},"det2_stride":10}"#,
    );
    let read = |name: &str, general: bool| {
        let out = tmp.path().join(name);
        let mut args = vec!["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()];
        if general {
            args.push("--general-path");
        }
        let o = riccati(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(out.join("g_t1.csv")).unwrap();
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    let fast = read("fast", false);
    let general = read("general", true);
    let err = fast.iter().zip(&general).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err}");
}
