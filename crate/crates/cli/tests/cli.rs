use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fairalloc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairalloc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn fairalloc")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const SMALL: &str = "horizon = 3000\nseeds = 3\nmaster_seed = 11\nlog_stride = 100\n";

#[test]
fn same_config_gives_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    for out in ["a", "b"] {
        let o = fairalloc(&["run", "--config", "c.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/summaries.json")).unwrap();
    let b = fs::read(dir.path().join("b/summaries.json")).unwrap();
    assert_eq!(a, b);
    let la = fs::read(dir.path().join("a/logs/seed_2.csv")).unwrap();
    let lb = fs::read(dir.path().join("b/logs/seed_2.csv")).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let o = fairalloc(&["--threads", "1", "run", "--config", "c.toml", "--out", "one"], dir.path());
    assert!(o.status.success());
    let o = fairalloc(&["--sequential", "run", "--config", "c.toml", "--out", "seq"], dir.path());
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_fairalloc"))
        .args(["run", "--config", "c.toml", "--out", "env"])
        .env("FAIRALLOC_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let one = fs::read(dir.path().join("one/summaries.json")).unwrap();
    assert_eq!(one, fs::read(dir.path().join("seq/summaries.json")).unwrap());
    assert_eq!(one, fs::read(dir.path().join("env/summaries.json")).unwrap());
}

#[test]
fn manifest_records_hash_and_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let o = fairalloc(&["run", "--config", "c.toml", "--T", "500", "--seeds", "2", "--out", "o"], dir.path());
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["horizon"], 500);
    assert_eq!(m["config"]["seeds"], 2);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(!m["code_version"].as_str().unwrap().is_empty());
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "unknown.toml", "horizon = 10\nbogus = 1\n");
    write(dir.path(), "zero.toml", "horizon = 0\n");
    write(dir.path(), "penalty.toml", "horizon = 10\n[instance]\nkind = \"symmetric_two_source\"\n[instance.penalty]\nkind = \"custom\"\nname = \"nope\"\n");
    for name in ["unknown.toml", "zero.toml", "penalty.toml", "missing.toml"] {
        let o = fairalloc(&["run", "--config", name], dir.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = fairalloc(&["verify", "--only", "A42"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invariant_failure_exits_with_code_3_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    // A reward range far below the real one breaks the EXP3 bound on the first round.
    write(dir.path(), "c.toml", "horizon = 100\n[schedule]\nm = 0.01\n");
    let o = fairalloc(&["run", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("failure_seed_0.csv"), "{err}");
    let dump = fs::read_to_string(dir.path().join("o/failure_seed_0.csv")).unwrap();
    assert!(dump.starts_with("t,z,k,p,x,"));
    assert_eq!(dump.lines().count(), 2);
}

#[test]
fn oracle_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "horizon = 10\n");
    let o = fairalloc(&["oracle", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let row: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/oracle.json")).unwrap()).unwrap();
    assert!((row["rate"].as_f64().unwrap() - 0.25).abs() < 1e-4);
    assert!(row["static_rate"].as_f64().unwrap().abs() < 1e-4);
    let csv = fs::read_to_string(dir.path().join("o/oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn figure_multi_arms_has_every_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairalloc(&["figure", "multi_arms", "--seeds", "2", "--T", "1000", "--out", "f"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("f/multi_arms.csv")).unwrap();
    assert!(csv.starts_with("series,t,mean,q1,q3"));
    for s in fairalloc::experiment::MULTI_ARMS_SERIES {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{s},"))), "missing {s}");
    }
}

#[test]
fn figure_sensitivity_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.toml", "r = [0.0, 2.0]\np = [0.1]\n");
    let o = fairalloc(&["figure", "sensitivity", "--config", "s.toml", "--out", "f"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("f/sensitivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn verify_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairalloc(&["verify", "--only", "A4"], dir.path());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("A4 PASS"), "{out}");
}

#[test]
fn bundled_configs_parse() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["two_source.toml", "gaussian.toml", "table.toml"] {
        let cfg = fairalloc::experiment::RunConfig::load(&configs.join(name)).unwrap();
        cfg.validate().unwrap();
        cfg.instance.build(&configs).unwrap();
    }
}
