use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lsa-gauss"));
    c.env_remove("LSA_GAUSS_SEED");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(c: &mut Command) -> Output {
    c.output().expect("spawn lsa-gauss")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn small_config(dir: &Path, replicas: usize) -> PathBuf {
    let p = dir.join("c.json");
    let text = std::fs::read_to_string(configs().join("rademacher2_verify.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["replicas"] = replicas.into();
    v["grid"] = serde_json::json!({"kind": "pairs", "points": [[0.1, 40]]});
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn covariance_reports_scalar_pins() {
    let out = run(bin().args(["covariance", "--alpha", "0.5", "--n", "2", "--config"]).arg(configs().join("s1_verify.json")));
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["sigma_alpha_n"][0][0].as_f64().unwrap() - 0.625).abs() < 1e-15);
    assert!(v["prop1"]["measured"].as_f64().unwrap() > v["prop1"]["paper_bound"].as_f64().unwrap());
    assert!(v["lower_bound"]["measured"].as_f64().unwrap() < v["lower_bound"]["paper_bound"].as_f64().unwrap());
}

#[test]
fn verify_quick_is_reproducible_and_seed_env_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 400);
    let strip = |o: &Output| {
        let mut v = json(o);
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    let a = run(bin().args(["verify", "--quick", "--config"]).arg(&cfg));
    let b = run(bin().args(["verify", "--quick", "--config"]).arg(&cfg));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(strip(&a), strip(&b));
    let c = run(bin().args(["verify", "--quick", "--config"]).arg(&cfg).env("LSA_GAUSS_SEED", "5"));
    assert_eq!(json(&c)["master_seed"], 5);
    assert_ne!(strip(&a)["checks"], strip(&c)["checks"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 10);
    assert_eq!(run(bin().args(["verify", "--config"]).arg(&cfg)).status.code(), Some(3));

    let cfg = small_config(dir.path(), 1000);
    let tampered = run(bin().args(["verify", "--quick", "--tamper-noise", "2", "--config"]).arg(&cfg));
    assert_eq!(tampered.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"instance": {}, "grid": {}, "replicas": 1, "master_seed": 1, "extra": 0}"#).unwrap();
    assert_eq!(run(bin().args(["verify", "--config"]).arg(&bad)).status.code(), Some(2));
    assert_eq!(run(bin().args(["verify", "--config", "/nonexistent.json"])).status.code(), Some(2));
    let big_step = run(bin().args(["covariance", "--alpha", "3", "--n", "2", "--config"]).arg(configs().join("s1_verify.json")));
    assert_eq!(big_step.status.code(), Some(2));
    let bad_seed = run(bin().args(["verify", "--config"]).arg(&cfg).env("LSA_GAUSS_SEED", "x"));
    assert_eq!(bad_seed.status.code(), Some(2));
}

#[test]
fn bounds_csv_has_a_row_per_grid_point() {
    let out = run(bin().args(["bounds", "--csv", "--config"]).arg(configs().join("s1_sweep.json")));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("alpha,n,c_delta_0"));
    assert!(lines.iter().all(|l| l.split(',').count() == 14));
}

#[test]
fn simulate_distance_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 300);
    let samples = dir.path().join("z.csv");
    let traj = dir.path().join("t.csv");
    let out = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&samples).arg("--trajectory").arg(&traj));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(text.lines().count(), 301);
    assert_eq!(std::fs::read_to_string(&traj).unwrap().lines().count(), 42);

    // the samples file carries 4 bookkeeping columns; keep only z_1, z_2
    let z: String = text.lines().map(|l| l.split(',').skip(4).collect::<Vec<_>>().join(",") + "\n").collect();
    let zpath = dir.path().join("z2.csv");
    std::fs::write(&zpath, z).unwrap();
    let from_file = run(bin().args(["distance", "--config"]).arg(&cfg).arg("--samples").arg(&zpath));
    let in_process = run(bin().args(["distance", "--config"]).arg(&cfg));
    let (a, b) = (json(&from_file), json(&in_process));
    assert_eq!(a["value"], b["value"]);
    assert_eq!(a["R"], 300);
    assert_eq!(a["M"], 64);

    let rows = dir.path().join("rows.csv");
    std::fs::write(&rows, "alpha,n,distance,distance_ci\n0.1,10,0.3,0.01\n0.05,20,0.21,0.01\n0.025,40,0.15,0.01\n").unwrap();
    let svg = dir.path().join("fig.svg");
    assert_eq!(run(bin().args(["plot", "--in"]).arg(&rows).arg("--out").arg(&svg)).status.code(), Some(0));
    let s = std::fs::read_to_string(&svg).unwrap();
    assert!(s.contains("fitted slope"));
}

#[test]
fn rate_sweep_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("skewed2_sweep.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["replicas"] = 200.into();
    v["grid"]["alphas"] = serde_json::json!([0.4, 0.2, 0.1, 0.05]);
    v["distance"] = serde_json::json!({"directions": 8, "bootstrap": 10});
    v.as_object_mut().unwrap().remove("output");
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let rows = dir.path().join("rows.csv");
    let out = run(bin().args(["rate-sweep", "--config"]).arg(&cfg).arg("--out").arg(&rows));
    assert!(matches!(out.status.code(), Some(0 | 1 | 3)), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(summary["slope"].is_number());
    let csv = std::fs::read_to_string(&rows).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("alpha,n,distance,distance_ci,theorem1_rhs"));

    let wide = run(bin().args(["rate-sweep", "--slope-range", "-10", "10", "--config"]).arg(&cfg).arg("--out").arg(&rows));
    assert!(matches!(wide.status.code(), Some(0 | 3)));
}
