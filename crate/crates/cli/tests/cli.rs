use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use driftlab::density::ParticleSet;
use driftlab::kernels::RadialKernel;
use driftlab::losses::log_kde_loss;
use serde_json::Value;
use tempfile::TempDir;

fn driftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = driftlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn curl_verdict(tmp: &TempDir, name: &str, extra: &[&str]) -> String {
    let out = tmp.path().join(name);
    let mut args = vec!["curl-map", "--out", out.to_str().unwrap()];
    args.extend(extra);
    ok(&args);
    json_file(&out.join("summary.json"))["verdict"].as_str().unwrap().to_string()
}

#[test]
fn curl_map_verdicts_by_family_and_normalization() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(curl_verdict(&tmp, "g", &["--kernel", "gaussian", "--field", "drift"]), "conservative");
    assert_eq!(curl_verdict(&tmp, "l", &["--kernel", "laplacian", "--field", "drift"]), "non-conservative");
    for family in ["gaussian", "laplacian", "rq"] {
        assert_eq!(
            curl_verdict(&tmp, &format!("s-{family}"), &["--kernel", family, "--field", "sharp"]),
            "conservative",
            "{family}"
        );
    }
    let (header, rows) = csv_rows(&tmp.path().join("g/curl.csv"));
    assert_eq!(header, ["x1", "x2", "curl_1", "asym"]);
    assert_eq!(rows.len(), 400);
    let cfg = json_file(&tmp.path().join("l/config.json"));
    assert_eq!(cfg["kernel"]["family"], "laplacian");
    assert_eq!(cfg["grid"]["res"][0], 20);
}

#[test]
fn singular_stencil_points_become_nan_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("mmd");
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"grid": {"lo": [-3, -3], "hi": [3, 3], "res": [7, 7]}}"#,
    );
    let res = ok(&[
        "curl-map", "--config", &cfg, "--kernel", "laplacian", "--field", "mmd", "--fd-step", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let summary = json_file(&out.join("summary.json"));
    let singular = summary["singular_points"].as_u64().unwrap();
    assert!(singular > 0);
    let (_, rows) = csv_rows(&out.join("curl.csv"));
    assert_eq!(rows.iter().filter(|r| r[3].is_nan()).count() as u64, singular);
}

#[test]
fn tail_profile_columns() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    ok(&["tail-profile", "--seed", "4", "--kernel", "gaussian", "--sigma", "0.7", "--out", g.to_str().unwrap()]);
    let (header, rows) = csv_rows(&g.join("tail.csv"));
    assert_eq!(header, ["x", "unnorm", "drift", "sharp"]);
    for r in &rows {
        assert!((r[2] / r[3] - 0.49).abs() <= 1e-10, "{r:?}");
    }

    let cfg = write(tmp.path(), "t.json", r#"{"x_min": -110, "x_max": 110, "n_points": 2201}"#);
    let l = tmp.path().join("l");
    ok(&["tail-profile", "--config", &cfg, "--seed", "4", "--out", l.to_str().unwrap()]);
    let data: Vec<f64> = {
        let used = json_file(&l.join("config.json"));
        assert_eq!(used["data"]["seed"], 4);
        let set = driftlab::transport::sample_toy(
            &serde_json::from_value(used["data"]["toy"].clone()).unwrap(),
            200,
            4,
        )
        .unwrap();
        set.points().iter().map(|p| p[0]).collect()
    };
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (_, rows) = csv_rows(&l.join("tail.csv"));
    let beyond: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] > hi + 1.0).collect();
    for w in beyond.windows(2) {
        assert!(w[1][1] < w[0][1], "unnormalized column must decrease past {hi}: {w:?}");
    }
    let far = rows.iter().find(|r| r[0] >= hi + 100.0).unwrap();
    assert!((far[3] - 1.0).abs() <= 0.05, "{far:?}");
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"kernel": {"family": "laplacian", "sigma": 2.0}, "tol": 0.001}"#);
    let out = tmp.path().join("o");
    ok(&["curl-map", "--config", &cfg, "--sigma", "3", "--out", out.to_str().unwrap()]);
    let used = json_file(&out.join("config.json"));
    assert_eq!(used["kernel"]["family"], "laplacian");
    assert_eq!(used["kernel"]["sigma"], 3.0);
    assert_eq!(used["tol"], 0.001);
    assert_eq!(used["field"], "drift");
    assert_eq!(used["fd_step"]["scaled"], 0.0001);
}

#[test]
fn field_eval_reads_csv_relative_to_config() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "pos.csv", "x1,x2\n0,0\n2,0.5\n");
    write(tmp.path(), "neg.csv", "x1,x2\n1,-1\n");
    let cfg = write(
        tmp.path(),
        "f.json",
        r#"{"pos": {"csv": "pos.csv"}, "neg": {"csv": "neg.csv"}, "queries": [[0.5, 0.5], [3, 3]]}"#,
    );
    let out = ok(&["field", "eval", "--config", &cfg, "--field", "drift", "--kernel", "laplacian"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,v1,v2"));
    let pos = ParticleSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.5]]).unwrap();
    let neg = ParticleSet::new(vec![vec![1.0, -1.0]]).unwrap();
    let spec = driftlab::FieldSpec::new(
        driftlab::FieldKind::Drift,
        RadialKernel::laplacian(1.0).unwrap(),
        &pos,
        &neg,
    )
    .unwrap();
    for (line, q) in lines.zip([[0.5, 0.5], [3.0, 3.0]]) {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&vals[..2], &q);
        assert_eq!(vals[2..].to_vec(), spec.eval(&q).unwrap());
    }
}

#[test]
fn loss_eval_prints_kind_and_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "l.json",
        r#"{"pos": [[1, 0]], "gen": [[0, 0], [2, 0]], "exclude_self": false}"#,
    );
    let out = ok(&["loss", "eval", "--config", &cfg]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "log_kde");
    let pos = ParticleSet::new(vec![vec![1.0, 0.0]]).unwrap();
    let gen = ParticleSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    let want = log_kde_loss(&RadialKernel::gaussian(1.0).unwrap(), &pos, &gen, false).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), want);
    let mmd = ok(&["loss", "eval", "--config", &cfg, "--loss", "mmd"]);
    let v: Value = serde_json::from_slice(&mmd.stdout).unwrap();
    assert_eq!(v["kind"], "mmd_squared");
    assert!(v["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn output_directory_is_never_clobbered_without_force() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    ok(&["curl-map", "--out", o]);
    let again = driftlab(&["curl-map", "--out", o, "--kernel", "laplacian"]);
    assert_eq!(again.status.code(), Some(2));
    assert_eq!(json_file(&out.join("config.json"))["kernel"]["family"], "gaussian");
    ok(&["curl-map", "--out", o, "--kernel", "laplacian", "--force"]);
    assert_eq!(json_file(&out.join("config.json"))["kernel"]["family"], "laplacian");
    let staging: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".driftlab-"))
        .collect();
    assert!(staging.is_empty());
}

#[test]
fn failed_runs_leave_no_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    let res = driftlab(&["transport", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("seed"));
    assert!(!out.exists());
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"grdi": {}}"#);
    let out = tmp.path().join("x");
    let res = driftlab(&["curl-map", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("grdi"));
    let res = driftlab(&["tail-profile", "--field", "drift", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let res = driftlab(&["curl-map", "--kernel", "cosine", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let res = driftlab(&["field", "eval", "--sigma", "-1"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn transport_writes_metrics_and_snapshots() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "t.json",
        r#"{"n_particles": 32, "steps": 12, "metrics_every": 5, "snapshot_every": 6, "seed": 8,
            "target": {"kind": "ring", "radius": 2.0, "width": 0.1}}"#,
    );
    let out = tmp.path().join("t");
    ok(&["transport", "--config", &cfg, "--field", "drift", "--out", out.to_str().unwrap()]);
    let (header, rows) = csv_rows(&out.join("metrics.csv"));
    assert_eq!(header, ["iteration", "mmd_sq", "log_kde_loss", "mean_field_norm", "max_field_norm"]);
    assert_eq!(rows.iter().map(|r| r[0] as usize).collect::<Vec<_>>(), vec![0, 5, 10, 12]);
    for step in [0, 6, 12] {
        let (h, pts) = csv_rows(&out.join(format!("snapshots/step_{step:06}.csv")));
        assert_eq!(h, ["x1", "x2"]);
        assert_eq!(pts.len(), 32);
    }
    assert_eq!(
        fs::read(out.join("final.csv")).unwrap(),
        fs::read(out.join("snapshots/step_000012.csv")).unwrap()
    );
    let used = json_file(&out.join("config.json"));
    assert_eq!(used["field"], "drift");
    assert_eq!(used["n_data"], 32);
}

#[test]
fn verify_lists_claims_and_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let res = ok(&["verify", "--out", out.to_str().unwrap()]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("[PASS]")).count() >= 12);
    assert!(!text.contains("[FAIL]"));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), text);
    let report = json_file(&out.join("report.json"));
    assert!(report["claims"].as_array().unwrap().len() >= 12);
}
