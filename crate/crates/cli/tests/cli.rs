use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_volterra-sens");

const BASE: &str = r#"
name = "cli"
n_paths = 2000
seed = 4

[grid]
t0 = 0.0
t_end = 1.0
steps = 32

[model]
kind = "builtin"
name = "gaussian"

[direction]
kind = "power_law"
gamma = 1.5
amplitude = [1.0]
"#;

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("{BASE}\n{extra}")).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("VOLTERRA_SENS_THREADS")
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

const IDENTITY_BEL: &str = r#"
[payoff]
kind = "identity"

[[estimators]]
kind = "bel"
"#;

#[test]
fn simulate_writes_dump_and_terminal_variance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[payoff]\nkind = \"identity\"\n");
    let out = dir.path().join("paths.bin");
    let o = run(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let batch = volterra_sens::path::dump::load_batch(&out).unwrap();
    assert_eq!(batch.n_paths(), 2000);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("paths.json")).unwrap()).unwrap();
    // Var X_T = T^(2H) / (2H) = 2 for H = 1/4; SE of the sample variance is about 2 sqrt(2/N).
    let var = side["terminal_variance"].as_f64().unwrap();
    assert!((var - 2.0).abs() < 5.0 * 2.0 * (2.0f64 / 2000.0).sqrt(), "{var}");
    assert_eq!(side["provenance"]["master_seed"], 4);
}

#[test]
fn greek_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", IDENTITY_BEL);
    let out = dir.path().join("g.csv");
    let o = run(&["greek", "--config", arg(&cfg), "--out", arg(&out), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment,estimator,parameters,value,std_error,n_paths,wall_ms");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("cli,bel,control_variate=false,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("+/-"));
}

#[test]
fn violated_hypothesis_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        r#"
[payoff]
kind = "abs_power"
center = 0.0
beta = 0.5

[[estimators]]
kind = "fractional"
alpha = 0.3
inner_budget = 8
"#,
    );
    let out = dir.path().join("g.csv");
    let o = run(&["greek", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta/2"));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn missing_or_malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&["greek", "--config", arg(&missing), "--out", arg(&out)]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = 1").unwrap();
    assert_eq!(run(&["greek", "--config", arg(&bad), "--out", arg(&out)]).status.code(), Some(2));
}

#[test]
fn compare_needs_two_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", IDENTITY_BEL);
    let out = dir.path().join("c.csv");
    assert_eq!(run(&["compare", "--config", arg(&cfg), "--out", arg(&out)]).status.code(), Some(2));
    let two = write_config(
        dir.path(),
        "two.toml",
        &format!("{IDENTITY_BEL}\n[[estimators]]\nkind = \"fd\"\nepsilon = 0.001\n"),
    );
    let o = run(&["compare", "--config", arg(&two), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("cli,bel~fd,z=")));
}

#[test]
fn study_reruns_are_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        r#"
[payoff]
kind = "identity"

[study]
kind = "alpha_sweep"
alphas = [0.1, 0.2]
inner_budget = 4
"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let oa = run(&["study", "alpha_sweep", "--config", arg(&cfg), "--out", arg(&a), "--threads", "1"]);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = Command::new(BIN)
        .args(["study", "--config", arg(&cfg), "--out", arg(&b)])
        .env("VOLTERRA_SENS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(ob.status.code(), Some(0));
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(strip_timing(&read(&a)), strip_timing(&read(&b)));
    assert_eq!(read(&a.with_extension("json")), read(&b.with_extension("json")));
    let oc = run(&["study", "--config", arg(&cfg), "--out", arg(&c), "--seed", "99"]);
    assert_eq!(oc.status.code(), Some(0));
    assert_ne!(strip_timing(&read(&a)), strip_timing(&read(&c)));
    assert!(read(&c.with_extension("json")).contains("\"master_seed\": 99"));
    let wrong = run(&["study", "delta_limit", "--config", arg(&cfg), "--out", arg(&c)]);
    assert_eq!(wrong.status.code(), Some(2));
}
