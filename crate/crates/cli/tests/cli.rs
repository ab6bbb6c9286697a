use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_distillkit"));
    cmd.env_remove("DISTILLKIT_OUT_DIR");
    cmd
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("distillkit-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn distill_preset(dir: &Path) -> Output {
    run(bin()
        .args([
            "distill",
            "--preset",
            "paper-sine",
            "--epsilon",
            "0.045",
            "--out-dir",
        ])
        .arg(dir))
}

#[test]
fn distill_preset_writes_files() {
    let dir = scratch("distill");
    let out = distill_preset(&dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "trace.json", "report.json", "curve.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert!(lines[0].starts_with("t,c_t,norm_z,train_err_eps,train_err_y0,collapsed,b_1,"));
    assert!(lines[0].ends_with(",b_11"));
    // four rounds plus the collapse row
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("4,,"));
    assert!(lines[5].contains(",true,"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn output_dir_from_env() {
    let dir = scratch("env");
    let out = run(bin()
        .args(["distill", "--preset", "paper-sine"])
        .env("DISTILLKIT_OUT_DIR", &dir));
    assert_eq!(code(&out), 0);
    assert!(dir.join("trace.csv").exists());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn collapse_exit_code() {
    let dir = scratch("collapse");
    // ‖y‖²/K ≈ 0.5735 for the preset
    let out = run(bin()
        .args([
            "distill",
            "--preset",
            "paper-sine",
            "--epsilon",
            "0.6",
            "--out-dir",
        ])
        .arg(&dir));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("collapse"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_errors_exit_one() {
    let dir = scratch("config");
    let out = run(bin()
        .args(["distill", "--config"])
        .arg(dir.join("missing.json")));
    assert_eq!(code(&out), 1);

    let cfg = dir.join("two.json");
    fs::write(
        &cfg,
        r#"{"data_source":{"preset":"paper_sine","csv":"a.csv"},"epsilon":0.1}"#,
    )
    .unwrap();
    assert_eq!(code(&run(bin().args(["distill", "--config"]).arg(&cfg))), 1);

    let cfg = dir.join("neg.json");
    fs::write(
        &cfg,
        r#"{"data_source":{"preset":"paper_sine"},"epsilon":-0.1}"#,
    )
    .unwrap();
    assert_eq!(code(&run(bin().args(["fit", "--config"]).arg(&cfg))), 1);

    assert_eq!(code(&run(bin().args(["distill"]))), 1);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bounds_on_preset_pass() {
    let dir = scratch("bounds");
    let out = run(bin()
        .args(["bounds", "--preset", "paper-sine", "--out-dir"])
        .arg(&dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("quantity,t,bound,observed,satisfied"));
    assert!(lines.all(|l| l.ends_with(",true")));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn corrupted_trace_is_detected() {
    let dir = scratch("corrupt");
    assert_eq!(code(&distill_preset(&dir)), 0);
    let path = dir.join("trace.json");
    let ok = run(bin()
        .args(["bounds", "--trace"])
        .arg(&path)
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(code(&ok), 0);

    let mut trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let b = &mut trace["states"][2]["b_diag"][6];
    *b = serde_json::json!(b.as_f64().unwrap() * 1.01);
    let bad = dir.join("bad.json");
    fs::write(&bad, serde_json::to_string(&trace).unwrap()).unwrap();
    let out = run(bin()
        .args(["bounds", "--trace"])
        .arg(&bad)
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("b_recurrence"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn unit_condition_number_instance() {
    // far-apart points make the Gaussian Gram matrix exactly I/K
    let dir = scratch("kappa1");
    fs::write(
        dir.join("data.json"),
        r#"{"points":[0,100,200,300],"labels":[1.0,-2.0,0.5,1.5]}"#,
    )
    .unwrap();
    fs::write(
        dir.join("cfg.json"),
        r#"{"kernel":{"type":"gaussian","bandwidth":1.0},"data_source":{"json":"data.json"},"epsilon":0.01}"#,
    )
    .unwrap();
    let out = run(bin()
        .args(["bounds", "--config"])
        .arg(dir.join("cfg.json"))
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("bounds.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("z_norm,3,")));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn fit_preset_reports_tolerance() {
    let dir = scratch("fit");
    let out = run(bin()
        .args([
            "fit",
            "--preset",
            "paper-sine",
            "--epsilon",
            "0.045",
            "--out-dir",
        ])
        .arg(&dir));
    assert_eq!(code(&out), 0);
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    let err = fit["models"][0]["achieved_error"].as_f64().unwrap();
    assert!((err - 0.045).abs() <= 1e-9);
    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("x,f\n"));
    assert_eq!(curve.lines().count(), 201);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn fit_multiclass_csv() {
    let dir = scratch("multiclass");
    fs::write(
        dir.join("onehot.csv"),
        "x,a,b,c\n0.1,1,0,0\n0.25,1,0,0\n0.4,0,1,0\n0.55,0,1,0\n0.7,0,0,1\n0.85,0,0,1\n",
    )
    .unwrap();
    fs::write(
        dir.join("cfg.json"),
        r#"{"data_source":{"csv":"onehot.csv"},"epsilon":0.02,"outputs":{"curve_samples":11}}"#,
    )
    .unwrap();
    let out = run(bin()
        .args(["fit", "--config"])
        .arg(dir.join("cfg.json"))
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("x,f_1,f_2,f_3\n"));
    assert_eq!(curve.lines().count(), 12);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn fit_noiseless_generator_tracks_sine() {
    let dir = scratch("noiseless");
    fs::write(
        dir.join("cfg.json"),
        r#"{"data_source":{"generator":{"function":"sine","k":21,"noise_sigma":0.0,"seed":1}},"epsilon":1e-6}"#,
    )
    .unwrap();
    let out = run(bin()
        .args(["fit", "--config"])
        .arg(dir.join("cfg.json"))
        .arg("--out-dir")
        .arg(&dir));
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("max |f - sin(2πx)|"))
        .unwrap();
    let dev: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(dev < 0.05, "{dev}");
    fs::remove_dir_all(dir).unwrap();
}
