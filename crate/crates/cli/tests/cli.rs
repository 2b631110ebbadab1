use std::path::Path;
use std::process::{Command, Output};

fn msalab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msalab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("MSALAB_LOG", "error")
        .output()
        .unwrap()
}

fn summary(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn invalid_gamma_ct_from_file_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[model]\nN = 2\n\n[msa]\np = 0.5\ngamma_ct = 1.5\n").unwrap();
    let out = msalab(tmp.path(), &["ns-test", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("msa.gamma_ct"), "{err}");
    assert!(err.contains("line 6"), "{err}");
    assert!(!tmp.path().join("ns-test.csv").exists());
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(msalab(tmp.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(msalab(tmp.path(), &["spectrum", "--set", "mc.trails=5"]).status.code(), Some(2));
    assert_eq!(msalab(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn ns_test_at_ground_energy_is_singular() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(msalab(tmp.path(), &["spectrum", "--seed", "9"]).status.success());
    let e0 = summary(tmp.path(), "spectrum")["results"]["e0"].as_f64().unwrap();
    let set = format!("ns_test.energies=[{e0}, {}]", e0 - 1.0);
    let out = msalab(tmp.path(), &["ns-test", "--seed", "9", "--set", &set]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = summary(tmp.path(), "ns-test")["results"]["verdicts"].clone();
    assert_eq!(verdicts[0]["verdict"], "S");
    assert_eq!(verdicts[0]["reason"], "spectral-collision");
    assert!(verdicts[0]["block_norm"].is_null());
    assert_eq!(verdicts[1]["verdict"], "NS");
    let csv = std::fs::read_to_string(tmp.path().join("ns-test.csv")).unwrap();
    assert!(csv.starts_with("# schema: ns-test v1\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn export_matrix_writes_matrix_market() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(msalab(tmp.path(), &["spectrum", "--export-matrix"]).status.success());
    let mtx = std::fs::read_to_string(tmp.path().join("spectrum.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real"));
    let dim = summary(tmp.path(), "spectrum")["results"]["dimension"].as_u64().unwrap();
    assert_eq!(dim, 15);
}

#[test]
fn summary_echoes_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(msalab(tmp.path(), &["sample-field", "--seed", "5", "--set", "field.kind=\"iid-uniform\""])
        .status
        .success());
    let s = summary(tmp.path(), "sample-field");
    assert_eq!(s["tool"], "msalab");
    assert_eq!(s["subcommand"], "sample-field");
    assert_eq!(s["master_seed"], 5);
    assert_eq!(s["config"]["field"]["kind"], "iid-uniform");
    assert!(s["config"]["mc"].get("workers").is_none());
}

#[test]
fn csv_only_output() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(msalab(tmp.path(), &["spectrum", "--set", "output.formats=[\"csv\"]"]).status.success());
    assert!(tmp.path().join("spectrum.csv").exists());
    assert!(!tmp.path().join("spectrum.summary.json").exists());
}

#[test]
fn resource_cap_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = msalab(
        tmp.path(),
        &["dynamics", "--set", "model.N=3", "--set", "model.n=3", "--set", "scales.L0=16"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
