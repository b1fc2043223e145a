use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aenode(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aenode"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn aenode")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = aenode(cwd, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

/// A small two-temperature, two-mixture dataset.
fn small_data(dir: &Path) -> PathBuf {
    ok(dir, &["gen-data", "--t-init", "1000:1100:100", "--phi", "0.9,1.1", "--samples-per-traj", "21", "--out", "data"]);
    dir.join("data")
}

const TINY: &[&str] = &["--width", "8", "--depth", "2", "--batch-size", "16"];

fn train_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--data", "data"];
    v.extend_from_slice(TINY);
    v.extend_from_slice(extra);
    v
}

#[test]
fn gen_data_sweep_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(tmp.path(), &["gen-data", "--system", "ignition", "--t-init", "900:1100:100", "--out", "a"]);
    let b = ok(tmp.path(), &["gen-data", "--system", "ignition", "--t-init", "900:1100:100", "--out", "b"]);
    let m = json(tmp.path().join("a/manifest.json"));
    assert_eq!(m["trajectories"].as_array().unwrap().len(), 3);
    assert!(a.starts_with("manifest hash "));
    assert_eq!(a, b);
    assert_eq!(read(tmp.path().join("a/manifest.json")), read(tmp.path().join("b/manifest.json")));
    let c = ok(tmp.path(), &["gen-data", "--t-init", "900:1100:100", "--seed", "5", "--out", "c"]);
    assert_ne!(a, c);
    let cfg = json(tmp.path().join("a/resolved_config.json"));
    assert_eq!(cfg["t_init"], "900:1100:100");
}

#[test]
fn gen_data_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&aenode(tmp.path(), &["gen-data", "--t-init", "1100:900:100", "--out", "x"])), 1);
    assert_eq!(code(&aenode(tmp.path(), &["gen-data", "--system", "nope", "--out", "x"])), 1);
    assert_eq!(code(&aenode(tmp.path(), &["gen-data", "--bogus-flag"])), 1);
    assert_eq!(code(&aenode(tmp.path(), &["--help"])), 0);
}

#[test]
fn ingest_round_trip_and_malformed_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    ok(tmp.path(), &["gen-data", "--ingest", "data/trajectories", "--out", "ingested"]);
    let m = json(tmp.path().join("ingested/manifest.json"));
    assert_eq!(m["system"], "ignition");
    assert_eq!(m["trajectories"].as_array().unwrap().len(), 4);
    // Trajectory files are reproduced exactly.
    assert_eq!(read(data.join("trajectories/traj_0002.csv")), read(tmp.path().join("ingested/trajectories/traj_0002.csv")));

    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::copy(data.join("trajectories/traj_0000.csv"), bad.join("a.csv")).unwrap();
    std::fs::write(bad.join("b.csv"), "# system=ignition dim=4\nt,y1,y2,y3,y4\n0,1,2,3\n").unwrap();
    let out = aenode(tmp.path(), &["gen-data", "--ingest", "bad", "--out", "x"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("b.csv") && err.contains("line 3"), "{err}");
}

#[test]
fn outputs_are_never_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    let before = read(tmp.path().join("data/manifest.json"));
    let out = aenode(tmp.path(), &["gen-data", "--t-init", "1000", "--out", "data"]);
    assert_eq!(code(&out), 1);
    assert_eq!(read(tmp.path().join("data/manifest.json")), before);
}

#[test]
fn train_missing_dataset_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&aenode(tmp.path(), &["train", "--out", "r"])), 1);
    assert_eq!(code(&aenode(tmp.path(), &["train", "--data", "missing", "--out", "r"])), 1);
}

#[test]
fn epsilon_flag_trains_l1_only() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    ok(tmp.path(), &train_args(&["--epochs", "2", "--epsilon", "1", "0", "0", "--out", "run"]));
    let cfg = json(tmp.path().join("run/resolved_config.json"));
    assert_eq!(cfg["train"]["epsilon"], serde_json::json!([1.0, 0.0, 0.0]));
    let log = read(tmp.path().join("run/training_log.csv"));
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iter,epoch_accepted,L1,L2,L3,test_loss"));
    let step = lines.nth(1).unwrap();
    let cells: Vec<&str> = step.split(',').collect();
    assert!(!cells[2].is_empty() && cells[3].is_empty() && cells[4].is_empty(), "{step}");
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    std::fs::write(tmp.path().join("cfg.json"), r#"{"train": {"epochs": 1, "learning_rate": 0.002}, "seed": 4}"#).unwrap();
    ok(tmp.path(), &train_args(&["--config", "cfg.json", "--learning-rate", "0.005", "--out", "run"]));
    let cfg = json(tmp.path().join("run/resolved_config.json"));
    assert_eq!(cfg["train"]["epochs"], 1);
    assert_eq!(cfg["train"]["learning_rate"], 0.005);
    assert_eq!(cfg["seed"], 4);
    assert_eq!(cfg["model"]["width"], 8);
    std::fs::write(tmp.path().join("typo.json"), r#"{"trian": {}}"#).unwrap();
    assert_eq!(code(&aenode(tmp.path(), &train_args(&["--config", "typo.json", "--out", "r2"]))), 1);
}

#[test]
fn interrupted_run_resumes_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    ok(tmp.path(), &train_args(&["--epochs", "4", "--checkpoint-every", "1", "--out", "full"]));
    ok(tmp.path(), &train_args(&["--epochs", "4", "--checkpoint-every", "1", "--stop-after-passes", "2", "--out", "part"]));
    let partial = json(tmp.path().join("part/checkpoint.json"));
    assert_eq!(partial["passes_done"], 2);
    ok(tmp.path(), &["train", "--resume", "part", "--out", "resumed"]);
    for f in ["checkpoint.json", "training_log.csv", "summary.json"] {
        assert_eq!(read(tmp.path().join("full").join(f)), read(tmp.path().join("resumed").join(f)), "{f}");
    }
}

#[test]
fn analyze_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    ok(tmp.path(), &train_args(&["--epochs", "3", "--out", "run"]));
    ok(tmp.path(), &["analyze", "--run", "run", "--what", "pdf,rrmse,dpi,mi", "--probe-size", "48", "--out", "an"]);
    let an = tmp.path().join("an");
    // One density per physical and per latent variable.
    let pdfs = std::fs::read_dir(&an).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("pdf_")).count();
    assert_eq!(pdfs, 4 + 3);
    let rr = read(an.join("rrmse.csv"));
    assert_eq!(rr.lines().next(), Some("N_L,fuel,product,radical,temperature"));
    assert!(rr.lines().nth(1).unwrap().starts_with("3,"));
    let dpi = json(an.join("dpi.json"));
    assert!(dpi["violations"].is_array());
    assert_eq!(read(an.join("ip1.csv")).lines().next(), Some("epoch,stack,layer,I_in,I_out"));
    assert_eq!(read(an.join("ip2.csv")).lines().next(), Some("epoch,depth,I_pair,bound_low,bound_high"));
    assert!(!an.join("stiffness.json").exists());

    let out = aenode(tmp.path(), &["analyze", "--out", "x"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn empty_snapshot_store_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    ok(tmp.path(), &train_args(&["--epochs", "1", "--out", "run"]));
    let path = tmp.path().join("run/checkpoint.json");
    let mut ck = json(&path);
    ck["history"]["snapshots"] = serde_json::json!([]);
    std::fs::write(&path, ck.to_string()).unwrap();
    let out = aenode(tmp.path(), &["analyze", "--run", "run", "--what", "dpi", "--probe-size", "48", "--out", "an"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrain with snapshots"));
}

#[test]
fn latent_sweep_rows_and_failures() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path());
    let mut args = vec!["latent-sweep", "--data", "data", "--latent-dims", "0,2", "--epochs", "2", "--probe-size", "48"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--out", "sweep"]);
    ok(tmp.path(), &args);
    let summary = read(tmp.path().join("sweep/summary.csv"));
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "N_L,status,rrmse_fuel,rrmse_product,rrmse_radical,rrmse_temperature,dpi_1a,dpi_1b,dpi_2,error");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,failed,"), "{}", rows[1]);
    assert!(rows[2].starts_with("2,completed,"), "{}", rows[2]);
    assert!(tmp.path().join("sweep/nl_2/checkpoint.json").exists());
}
