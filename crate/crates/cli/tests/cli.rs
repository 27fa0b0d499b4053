use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL_MSE: &str = r#"
kind = "mse_sweep"
trials = 4
seed = 3

[topology]
m = 16
k = 4

[[algorithms]]
kind = "rls"

[[algorithms]]
kind = "sgd"
mu = 0.05
"#;

#[test]
fn rate_table_prints_text_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rates.csv");
    let out = mimo(&["rate-table", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("439MB/s"));
    assert!(text.contains("m,k,c,b,n_iter"));
    let file = std::fs::read_to_string(csv).unwrap();
    assert_eq!(file.lines().count(), 5);
    assert!(file
        .lines()
        .all(|l| l.ends_with(",1") || l.ends_with("schema_version")));
}

#[test]
fn rate_table_reads_scenarios() {
    let cfg = configs().join("rate_table.toml");
    let out = mimo(&["rate-table", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout).unwrap().contains("1024"));
}

#[test]
fn mse_sweep_writes_curves_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mse.toml", SMALL_MSE);
    let out_dir = dir.path().join("out");
    let out = mimo(&[
        "mse-sweep",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "11",
        "--trials",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let curve = std::fs::read_to_string(out_dir.join("rls.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("x,mean,stderr,n_trials,schema_version"));
    assert_eq!(lines.count(), 16);
    assert!(curve.lines().nth(1).unwrap().ends_with(",3,1"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["spec"]["trials"], 3);
    assert!(manifest["spec_toml"]
        .as_str()
        .unwrap()
        .contains("mse_sweep"));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweeps_are_reproducible_across_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mse.toml", SMALL_MSE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(
        mimo(&["mse-sweep", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(mimo(&[
        "mse-sweep",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--sequential"
    ])
    .status
    .success());
    for name in ["rls.csv", "sgd_mu0.05.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap()
        );
    }
}

#[test]
fn ber_sweep_runs_noiseless_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ber.toml",
        r#"
kind = "ber_sweep"
snr_db = [inf, 10.0]
trials = 5
res_per_block = 2

[topology]
m = 32
k = 2

[[algorithms]]
kind = "zf"
"#,
    );
    let out_dir = dir.path().join("out");
    let out = mimo(&[
        "ber-sweep",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curve = std::fs::read_to_string(out_dir.join("zf.csv")).unwrap();
    assert!(curve.lines().nth(1).unwrap().starts_with("inf,0,0,5,"));
}

#[test]
fn simulate_writes_timelines() {
    let dir = tempfile::tempdir().unwrap();
    let timeline = dir.path().join("timeline.csv");
    let cfg = configs().join("simulate_chain.toml");
    let out = mimo(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--timeline",
        timeline.to_str().unwrap(),
        "--trials",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&timeline).unwrap();
    assert!(text.starts_with("cluster_id,re_id,start_tick,end_tick,skipped_flag,schema_version"));
    // 8 clusters x 24 resource elements
    assert_eq!(text.lines().count(), 1 + 8 * 24);
    assert!(dir.path().join("timeline_asgd_mu0.04_n040.csv").exists());
    assert!(dir.path().join("timeline_sgd_freeze.csv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("rls.pipeline_delay = 28"));
}

#[test]
fn example_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        daisy_mimo::harness::ExperimentSpec::from_toml_str(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.toml", &format!("{SMALL_MSE}\nbogus = 1\n"));
    let out = mimo(&[
        "mse-sweep",
        "--config",
        &unknown,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = mimo(&[
        "ber-sweep",
        "--config",
        &write(dir.path(), "m.toml", SMALL_MSE),
        "--out",
        "x",
    ]);
    assert!(!out.status.success());

    let out = mimo(&[
        "mse-sweep",
        "--config",
        &write(dir.path(), "m.toml", SMALL_MSE),
        "--out",
        "x",
        "--trials",
        "0",
    ]);
    assert!(!out.status.success());
}
