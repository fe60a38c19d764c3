use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_irs-sense"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const SMALL: &str = r#"
[array]
m = 8
n_b = 8
[waveform]
n_sc = 32
t_fg = 8
snr_db = 20.0
[grid]
n_r = 16
t_v = 8
iters = 1
"#;

fn small_config(dir: &Path) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sense_prints_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["sense", "--config", &cfg, "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    let want = [
        "detected", "u_hat", "v_hat", "range_m", "velocity_mps", "location", "eps_dr", "eps_d", "eps_v", "eps_l",
    ];
    assert_eq!(&keys[..want.len()], &want);
    assert_eq!(v["config"]["array"]["m"], 8);
}

#[test]
fn sense_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = run(&["sense", "--config", &cfg, "--seed", "11"]).stdout;
    let b = run(&["sense", "--config", &cfg, "--seed", "11"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn sense_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("trace.json");
    let echo = dir.path().join("echo.csv");
    let out = run(&[
        "sense",
        "--config",
        &cfg,
        "--dump-trace",
        trace.to_str().unwrap(),
        "--dump-echo",
        echo.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["stages"].as_array().unwrap().len(), 3);
    let text = std::fs::read_to_string(&echo).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,l,re,im");
    assert!(text.lines().count() > 32 * 12);
}

#[test]
fn multi_target_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["sense", "--config", &cfg, "--targets", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["results"].is_array());
    assert!(v["shortfall"].is_boolean());
}

#[test]
fn sweep_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep", "--config", &cfg, "--axis", "n_sc", "--values", "16,32", "--trials", "4", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("axis,value,snr_db,trials,detection_rate,"));
    assert_eq!(lines.count(), 2);
    assert!(dir.path().join("sweep.csv.config.toml").exists());
}

#[test]
fn sweep_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["sweep", "--config", &cfg, "--axis", "m", "--values", "4,8", "--trials", "3", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["axis"], "m");
}

#[test]
fn crlb_and_roc_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["crlb", "--config", &cfg, "--sweep", "snr=-10:40:5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "snr_db,crlb_range_m2,crlb_vel_mps2,crlb_u,crlb_v");
    assert_eq!(text.lines().count(), 12);

    let out = run(&["detect-roc", "--config", &cfg, "--n-sc", "16", "--trials", "10", "--far", "0.01"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "far_target,empirical_far,empirical_detection_rate,snr_db");
}

#[test]
fn codebook_binary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cb.bin");
    let out = run(&["codebook", "--m", "4", "--out", p.to_str().unwrap()]);
    assert!(out.status.success());
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()), 4);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
    // Layers of 4 and 16 codewords, each 3 u32 plus 16 complex64 pairs.
    assert_eq!(bytes.len(), 8 + 20 * (12 + 16 * 8));
}

#[test]
fn gain_map_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    let out = run(&["codebook", "--m", "8", "--out", p.to_str().unwrap(), "--gain-map", "--layer", "3", "--grid", "8"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next().unwrap(), "k,i,j,u,v,gain");
    assert_eq!(text.lines().count(), 1 + 64 * 64);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[array]\nm = 12\n").unwrap();
    assert_eq!(run(&["sense", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let cfg = small_config(dir.path());
    assert_eq!(run(&["sweep", "--config", &cfg, "--axis", "nope", "--values", "1"]).status.code(), Some(2));
    assert_eq!(run(&["crlb", "--config", &cfg, "--sweep", "x=1:2:1"]).status.code(), Some(2));
    assert_eq!(run(&["codebook", "--m", "6", "--out", dir.path().join("x").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn partial_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Corners of the [-1, 1]² span are not forward directions, so roughly a
    // fifth of the draws fail.
    let p = dir.path().join("fail.toml");
    std::fs::write(
        &p,
        format!("{SMALL}[target]\nu_span = [-1.0, 1.0]\nv_span = [-1.0, 1.0]\n[run]\nmax_failure_rate = 0.05\n"),
    )
    .unwrap();
    let csv = dir.path().join("s.csv");
    let out = run(&[
        "sweep", "--config", p.to_str().unwrap(), "--axis", "t_fg", "--values", "8", "--trials", "60", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let failures: usize = text.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(failures > 3);
}
