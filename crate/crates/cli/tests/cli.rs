use std::path::Path;
use std::process::{Command, Output};

fn tapfed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapfed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn summary_field(dir: &str, key: &str) -> f64 {
    let text = std::fs::read_to_string(Path::new(dir).join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v[key].as_f64().unwrap()
}

#[test]
fn empty_config_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = tapfed(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "o"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!tmp.path().join("o").join("rounds.csv").exists());
}

#[test]
fn missing_config_file_and_bad_override_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out_dir(tmp.path(), "o");
    assert_eq!(
        tapfed(&["run", "--config", "/nonexistent.toml", "--out", &o])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tapfed(&["run", "--set", "novalue", "--out", &o])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tapfed(&["run", "--set", "experiment.threshold_t=9", "--out", &o])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = out_dir(tmp.path(), "a");
    let b = out_dir(tmp.path(), "b");
    for dir in [&a, &b] {
        let out = tapfed(&["run", "--seed", "42", "--out", dir]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in [
        "rounds.csv",
        "timings.csv",
        "payload.csv",
        "summary.json",
        "config.toml",
    ] {
        assert!(Path::new(&a).join(name).exists(), "{name}");
    }
    let leftovers = std::fs::read_dir(&a)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "tmp")
        })
        .count();
    assert_eq!(leftovers, 0);
    let ra = std::fs::read(Path::new(&a).join("rounds.csv")).unwrap();
    let rb = std::fs::read(Path::new(&b).join("rounds.csv")).unwrap();
    assert_eq!(ra, rb);
    let text = String::from_utf8(ra).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("true")));
}

#[test]
fn precision_changes_accuracy_little_and_payload_not_at_all() {
    let tmp = tempfile::tempdir().unwrap();
    let lo = out_dir(tmp.path(), "pr4");
    let hi = out_dir(tmp.path(), "pr6");
    assert!(tapfed(&["run", "--out", &lo]).status.success());
    assert!(
        tapfed(&["run", "--out", &hi, "--set", "encoding.value_precision=6"])
            .status
            .success()
    );
    let payload = |d: &str| std::fs::read(Path::new(d).join("payload.csv")).unwrap();
    assert_eq!(payload(&lo), payload(&hi));
    let acc = |d: &str| summary_field(d, "final_accuracy");
    assert!((acc(&lo) - acc(&hi)).abs() <= 0.01);
}

#[test]
fn partial_bytes_grow_linearly_in_s() {
    let tmp = tempfile::tempdir().unwrap();
    let per_s: Vec<f64> = [3, 4, 5]
        .iter()
        .map(|s| {
            let dir = out_dir(tmp.path(), &format!("s{s}"));
            let set = format!("experiment.s_aggregators={s}");
            let out = tapfed(&["run", "--out", &dir, "--set", &set]);
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            summary_field(&dir, "mean_partial_bytes_per_round") / f64::from(*s)
        })
        .collect();
    for v in &per_s {
        assert!((v / per_s[0] - 1.0).abs() < 0.01, "{per_s:?}");
    }
}

#[test]
fn attack_suite_passes_and_boundary_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out_dir(tmp.path(), "attack");
    let out = tapfed(&["attack", "--out", &dir]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = std::fs::read_to_string(Path::new(&dir).join("verdicts.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
    let boundary = tapfed(&["attack", "--out", &dir, "collusion:2"]);
    assert!(boundary.status.success());
    assert!(String::from_utf8_lossy(&boundary.stdout).contains("observed Succeeded"));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tapfed(&[
        "attack",
        "--out",
        &out_dir(tmp.path(), "x"),
        "denial-of-service",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn weakened_compliance_fails_the_isolation_expectation() {
    // with a trust threshold of one the first requester is granted outright
    let tmp = tempfile::tempdir().unwrap();
    let out = tapfed(&[
        "attack",
        "--out",
        &out_dir(tmp.path(), "x"),
        "--set",
        "experiment.trust_threshold=1",
        "isolation",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn keygen_and_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let k = out_dir(tmp.path(), "k");
    assert!(tapfed(&["keygen", "--out", &k]).status.success());
    assert!(Path::new(&k).join("group.txt").exists());
    let b = out_dir(tmp.path(), "b");
    let out = tapfed(&["bench", "--out", &b, "--eta", "1,2", "--reps", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(Path::new(&b).join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 3 * 2);
    assert!(csv.contains("combine_dlog,2,1000000"));
}
