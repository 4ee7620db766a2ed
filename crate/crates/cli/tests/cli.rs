use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_safepriv"));
    cmd.env("SAFEPRIV_THREADS", "1");
    cmd
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn max_shrinkage_of_experiment_simplex() {
    let out = bin()
        .args(["geometry", "max-shrinkage", "--polytope"])
        .arg(configs().join("simplex.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let h: f64 = stdout(&out).trim().parse().unwrap();
    assert!((h - 1.0 / 14.0).abs() < 1e-15);
}

#[test]
fn sharpness_of_symmetric_triangle() {
    let out = bin()
        .args(["geometry", "sharpness", "--delta", "0.1", "--polytope"])
        .arg(configs().join("triangle.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let s: f64 = stdout(&out).trim().parse().unwrap();
    assert!((s - 0.1 * 10f64.sqrt()).abs() < 1e-12);
}

#[test]
fn sharpness_beyond_max_shrinkage_fails() {
    let out = bin()
        .args(["geometry", "sharpness", "--delta", "0.5", "--polytope"])
        .arg(configs().join("simplex.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn shrink_needs_delta() {
    let out = bin()
        .args(["geometry", "shrink", "--polytope"])
        .arg(configs().join("simplex.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn shrink_writes_polytope() {
    let out = bin()
        .args(["geometry", "shrink", "--delta", "0.25", "--polytope"])
        .arg(configs().join("triangle.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("b = [0.0, 0.0, 0.0]"), "{text}");
}

#[test]
fn allocation_is_verified() {
    let out = bin()
        .args(["allocate", "--samples", "2000", "--input"])
        .arg(configs().join("budget.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("verified = true"));
    assert!(text.contains("counterexamples = 0"));
    let f: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("f = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((f - 3.0).abs() < 1e-12);
}

#[test]
fn infeasible_budget_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("budget.toml"))
        .unwrap()
        .replace("U = 400.0", "U = 1.0");
    let path = dir.path().join("budget.toml");
    std::fs::write(&path, text).unwrap();
    let out = bin().args(["allocate", "--input"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn missing_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config", "/nonexistent/config.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("setup1.toml"))
        .unwrap()
        .replace("T = 3000", "T = 40")
        .replace("t_prime_override = 1000", "t_prime_override = 10");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "setup_id,privacy_vector_id,seed,final_cum_regret,normalized_final,violations_total,coverage_fraction,bound_value"
    );
    assert_eq!(lines.count(), 4);

    let rounds = std::fs::read_to_string(out_dir.join("rounds_1_1-0.25-0.5_2.csv")).unwrap();
    let mut lines = rounds.lines();
    assert_eq!(
        lines.next().unwrap(),
        "setup_id,privacy_vector_id,seed,t,phase,inst_regret,cum_regret,term1,term2,safety_violation,coverage"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 40);
    assert!(rows[9].starts_with("1,1-0.25-0.5,2,10,explore,"));
    assert!(rows[10].starts_with("1,1-0.25-0.5,2,11,exploit,"));
}
