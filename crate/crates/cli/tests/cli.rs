use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ldp-recon"));
    c.env_remove("LDPRECON_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const SMALL: &str = r#"
[alphabet]
kind = "linear"
size = 8

[data]
source = "binomial"
alpha = 0.4

[run]
n_schedule = [200, 800]
trials = 3
seed = 11

[[mechanisms]]
family = "krr"
param = 1.0

[[mechanisms]]
family = "geom_linear"
param = 0.5

[estimation]
estimators = ["cm_inv", "gibu"]
post_processing = "both"
metrics = ["emd", "l2sq"]
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_identical_csv_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = run(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin()
        .env("LDPRECON_THREADS", "3")
        .args(["run", "--config", &cfg, "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,trial,estimator,post,metric,value,iterations,wall_ms");
    // 2 n × 3 trials × (cm_inv ×2 posts + gibu) × 2 metrics
    assert_eq!(lines.len(), 1 + 2 * 3 * 3 * 2);
    assert!(!text.contains('\r'));
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "12"]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("o.csv");
    let out_csv = out_csv.to_str().unwrap();

    let bad_weights = SMALL.replace("param = 0.5\n", "param = 0.5\nweight = 0.9\n");
    let cfg = write(dir.path(), "w.toml", &bad_weights);
    assert_eq!(run(&["run", "--config", &cfg, "--out", out_csv]).status.code(), Some(1));

    let rappor_on_dense = SMALL.replace("[\"cm_inv\", \"gibu\"]", "[\"cm_rappor\"]");
    let cfg = write(dir.path(), "r.toml", &rappor_on_dense);
    let out = run(&["run", "--config", &cfg, "--out", out_csv]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cm_rappor"));

    assert_eq!(run(&["run", "--config", "no-such-thing", "--out", out_csv]).status.code(), Some(1));
    let cfg = write(dir.path(), "s.toml", SMALL);
    assert_eq!(run(&["run", "--config", &cfg, "--out", out_csv, "--one-per-user"]).status.code(), Some(1));
    assert!(!Path::new(out_csv).exists());
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("o.csv");
    let missing = dir.path().join("missing.txt");
    let out = run(&[
        "run",
        "--config",
        "krr-planar",
        "--out",
        out_csv.to_str().unwrap(),
        "--data",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(dir.path(), "s.toml", SMALL);
    let out = run(&["run", "--config", &cfg, "--out", "/definitely/not/a/dir/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn presets_list_and_show() {
    let out = run(&["presets", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("rappor-high-privacy"));
    assert!(text.contains("shokri-planar"));

    let out = run(&["presets", "show", "krr-linear"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("param = 8.08"));
    assert_eq!(run(&["presets", "show", "nope"]).status.code(), Some(1));
}

#[test]
fn aggregate_takes_medians() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let raw = dir.path().join("raw.csv");
    let agg = dir.path().join("agg.csv");
    assert!(run(&["run", "--config", &cfg, "--out", raw.to_str().unwrap()]).status.success());
    let out = run(&["aggregate", "--in", raw.to_str().unwrap(), "--out", agg.to_str().unwrap(), "--stat", "median"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&agg).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,estimator,post,metric,median,trials");
    assert_eq!(lines.len(), 1 + 2 * 3 * 2);
    assert!(lines[1..].iter().all(|l| l.ends_with(",3")));

    let out = run(&["aggregate", "--in", raw.to_str().unwrap(), "--out", agg.to_str().unwrap(), "--stat", "mode"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_then_run_from_cached_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut checkins = String::new();
    for i in 0..600 {
        let lat = 37.73 + 0.0001 * (i % 50) as f64;
        let lon = -122.50 + 0.001 * (i % 30) as f64;
        checkins.push_str(&format!("{}\t2010-10-19T23:55:27Z\t{lat}\t{lon}\t{i}\n", i / 3));
    }
    let raw = write(dir.path(), "checkins.txt", &checkins);
    let counts = dir.path().join("counts.csv");
    let out = run(&["ingest", "--in", &raw, "--out", counts.to_str().unwrap(), "--cols", "6", "--rows", "4", "--cell-size", "2.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&counts).unwrap();
    assert!(text.starts_with("cell_index,count\n"));
    assert_eq!(text.lines().count(), 1 + 24);

    let cfg = r#"
[alphabet]
kind = "planar"
cols = 6
rows = 4
cell_size = 2.0

[data]
source = "cell_counts"
path = "counts.csv"

[run]
n_schedule = [100, 600]
trials = 2

[[mechanisms]]
family = "geom_planar"
param = 1.5

[estimation]
estimators = ["gibu"]
"#;
    let cfg = write(dir.path(), "planar.toml", cfg);
    let res = dir.path().join("res.csv");
    let out = run(&["run", "--config", &cfg, "--out", res.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&res).unwrap().lines().count(), 1 + 4);
}
