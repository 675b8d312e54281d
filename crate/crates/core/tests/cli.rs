use std::fs;
use std::process::{Command, Output};

fn grq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grq")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_run_oracle_charge_on_killer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.qtrace");
    let p = path.to_str().unwrap();
    let o = grq(&["gen", "killer", "--b", "3", "--eps", "1/4", "--out", p]);
    assert!(o.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("p 3 1 3 3/4"));

    let o = grq(&["run", "--trace", p, "--algo", "grq"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("total=5/2"));

    let o = grq(&["run", "--trace", p, "--algo", "greedy", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total"], "1/1");
    assert_eq!(v["algorithm"], "greedy");

    let o = grq(&["oracle", "--trace", p, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["value"], "5/2");

    let o = grq(&["oracle", "--trace", p, "--kind", "unbounded"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("value=5/2"));

    let o = grq(&["charge", "--trace", p, "--adversary", "enumerate", "--limit", "20", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 20);
    assert_eq!(v[0]["checks"].as_array().unwrap().len(), 7);
}

#[test]
fn random_generation_is_reproducible() {
    let a = grq(&["gen", "random", "--n", "8", "--horizon", "6", "--b", "2", "--seed", "7"]);
    let b = grq(&["gen", "random", "--n", "8", "--horizon", "6", "--b", "2", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().filter(|l| l.starts_with("p ")).count(), 8);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.qtrace");
    fs::write(&path, "B 1\np 0 3 2 1\n").unwrap();
    let o = grq(&["run", "--trace", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deadline 2 < release 3"));

    let o = grq(&["gen", "killer", "--b", "1", "--eps", "1/2"]);
    assert_eq!(o.status.code(), Some(2));

    let o = grq(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_budget_overflow_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.qtrace");
    let p = path.to_str().unwrap();
    grq(&["gen", "killer", "--b", "4", "--eps", "1/2", "--out", p]);
    let o = grq(&["oracle", "--trace", p, "--budget", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn search_reports_ratio() {
    let o = grq(&["search", "--n", "5", "--horizon", "4", "--b", "1", "--iters", "200", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("worst_ratio="));
    assert!(out.contains("# qtrace v1"));
}

#[test]
fn experiment_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
adversaries = 10
counterexample_dir = "cex"

[[generators]]
kind = "random"
count = 100
seed = 1
n = 8
horizon = 6
buffer_size = 3
vary = true

[[generators]]
kind = "killer"
buffer_size = 10
eps = "1/10"
"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let o = grq(&["experiment", "--config", c]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "ratio_grq"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 101);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    assert!(rows.iter().all(|r| &r[col("status")] == "pass"));
    assert_eq!(&rows[100][col("ratio_greedy")], "91/10");

    let o = grq(&["experiment", "--config", c, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["traces"], 101);
    assert_eq!(v["summary"]["violations"], 0);

    let again = grq(&["experiment", "--config", c, "--format", "json"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn malformed_experiment_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[[generators]]\nkind = \"random\"\n").unwrap();
    let o = grq(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_config_runs_clean() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk-scale.toml");
    let o = grq(&["experiment", "--config", cfg, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["traces"], 12003);
    assert_eq!(v["summary"]["violations"], 0);
}
