use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddtwa_cli::ScenarioConfig;
use serde_json::Value;

const DEPHASING: &str = r#"
schema_version = 1
[model]
n_spins = 1
[[noise]]
kind = "dephasing_individual"
gamma_phi = 1.0
[initial]
theta = 1.5707963267948966
[run]
t_end = 2.0
dt = 0.01
output_stride = 10
n_t = 20000
seed = 5
[observables]
per_spin = [0]
"#;

fn ddtwa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddtwa")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_table_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DEPHASING);
    let out = dir.path().join("out");
    let o = ddtwa(&["--config", s(&cfg), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("run.csv")).unwrap();
    assert!(table.starts_with("time,Sx_mean,Sx_stderr,"), "{}", &table[..60]);
    assert_eq!(table.lines().count(), 1 + 21);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["n_t"], 20000);
    assert_eq!(meta["dt"], 0.01);
    assert_eq!(meta["failures"]["count"], 0);
    assert!(meta["version"].as_str().unwrap().starts_with("ddtwa "));
    assert_eq!(meta["model_hash"].as_str().unwrap().len(), 64);
    assert!(meta["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!((meta["spin_length"]["initial"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn reruns_and_metadata_reproduce_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DEPHASING);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(ddtwa(&["--config", s(&cfg), "--output-dir", s(&a), "--threads", "1"]).status.success());
    assert!(ddtwa(&["--config", s(&cfg), "--output-dir", s(&b), "--threads", "3"]).status.success());
    let first = std::fs::read(a.join("run.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.join("run.csv")).unwrap());

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    let embedded = write_config(dir.path(), "embedded.toml", meta["config_toml"].as_str().unwrap());
    assert!(ddtwa(&["--config", s(&embedded), "--output-dir", s(&c)]).status.success());
    assert_eq!(first, std::fs::read(c.join("run.csv")).unwrap());
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DEPHASING);
    let out = dir.path().join("out");
    let o = ddtwa(&[
        "--config",
        s(&cfg),
        "--output-dir",
        s(&out),
        "--seed",
        "11",
        "--trajectories",
        "300",
        "--set",
        "run.t_end=1.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!((meta["seed"].as_u64(), meta["n_t"].as_u64()), (Some(11), Some(300)));
    assert_eq!(meta["config"]["run"]["t_end"], 1.0);
}

#[test]
fn invalid_configs_exit_one_and_name_the_keys() {
    let dir = tempfile::tempdir().unwrap();
    let text = DEPHASING.replace("seed = 5", "seed = 5\nseeed = 6").replace("n_spins = 1", "n_spins = 1\nlatice = 3");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = ddtwa(&["--config", s(&cfg), "--output-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("run.seeed") && err.contains("model.latice"), "{err}");

    let o = ddtwa(&["--config", s(&cfg), "--command", "frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_blowup_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = DEPHASING
        .replace("n_spins = 1", "n_spins = 1\n[model.fields]\nOmega = 100.0\naxis = \"x\"")
        .replace("dt = 0.01", "dt = 1.0\nscheme = \"euler\"")
        .replace("t_end = 2.0", "t_end = 400.0")
        .replace("n_t = 20000", "n_t = 4");
    let cfg = write_config(dir.path(), "blowup.toml", &text);
    let o = ddtwa(&["--config", s(&cfg), "--output-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("trajectory"));
}

#[test]
fn oracle_matches_run_within_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DEPHASING);
    let out = dir.path().join("out");
    assert!(ddtwa(&["--config", s(&cfg), "--output-dir", s(&out)]).status.success());
    let o = ddtwa(&["--command", "oracle", "--config", s(&cfg), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    let row: Vec<&str> = table.lines().nth(5).unwrap().split(',').collect();
    assert_eq!(row[2], "0");

    let o = ddtwa(&[
        "--command",
        "compare",
        "--config",
        s(&cfg),
        "--set",
        "compare.columns=[\"Sx\", \"Sy\", \"Sz\", \"s0_x\"]",
        "--output-dir",
        s(&out),
        "--z-max",
        "4",
        "--abs-floor",
        "1e-9",
        s(&out.join("run.csv")),
        s(&out.join("oracle.csv")),
    ]);
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["pass"], true);
    assert_eq!(report["report"]["columns"].as_array().unwrap().len(), 4);
    assert!(report["report"]["skipped"].as_array().unwrap().iter().any(|c| c == "spin_length"));
}

#[test]
fn compare_reports_failures_and_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.csv", "time,Sz_mean,Sz_stderr\n0,1,0.1\n1,2,0.1\n");
    let b = write_config(dir.path(), "b.csv", "time,Sz_mean,Sz_stderr\n0,1,0.1\n1,3,0.1\n");
    let c = write_config(dir.path(), "c.csv", "time,Sz_mean,Sz_stderr\n0,1,0.1\n2,2,0.1\n");
    let out = dir.path().join("out");
    let same = ddtwa(&["--command", "compare", "--output-dir", s(&out), s(&a), s(&a)]);
    assert!(same.status.success());
    assert_eq!(ddtwa(&["--command", "compare", "--output-dir", s(&out), s(&a), s(&b)]).status.code(), Some(3));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    let col = &report["report"]["columns"][0];
    assert_eq!(col["max_abs_dev"], 1.0);
    assert!((col["max_z"].as_f64().unwrap() - 1.0 / 0.02f64.sqrt()).abs() < 1e-12);
    assert_eq!(ddtwa(&["--command", "compare", "--output-dir", s(&out), s(&a), s(&c)]).status.code(), Some(1));
}

#[test]
fn oracle_refuses_oversized_systems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "big.toml", &DEPHASING.replace("n_spins = 1", "n_spins = 13"));
    let o = ddtwa(&["--command", "oracle", "--config", s(&cfg), "--output-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("4096"), "{}", stderr(&o));
}

#[test]
fn sweep_tabulates_and_continues_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let text = DEPHASING.replace("n_t = 20000", "n_t = 200");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let o = ddtwa(&[
        "--command",
        "sweep",
        "--config",
        s(&cfg),
        "--output-dir",
        s(&out),
        "--param",
        "noise.0.gamma_phi",
        "--values",
        "0.5,-1,2",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("noise.0.gamma_phi,Sx_mean,Sx_stderr"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.5,") && lines[2].starts_with("2,"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(meta["failures"][0]["value"], -1.0);
    assert_eq!(meta["failures"][0]["exit_code"], 1);
}

#[test]
fn empty_sweep_succeeds_with_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", DEPHASING);
    let out = dir.path().join("out");
    let o = ddtwa(&["--command", "sweep", "--config", s(&cfg), "--output-dir", s(&out), "--param", "run.t_end", "--values", ""]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("sweep.csv")).unwrap(), "run.t_end\n");
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            let parsed = ScenarioConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let once = parsed.to_toml();
            let again = ScenarioConfig::from_toml(&once).unwrap();
            assert_eq!(again, parsed, "{}", path.display());
            assert_eq!(again.to_toml(), once, "{}", path.display());
            parsed.clone().resolve().and_then(|c| c.simulation()).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
