use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_multichannel"));
    c.env_remove("MULTICHANNEL_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fixtures(dir: &Path) -> PathBuf {
    let fx = dir.join("fx");
    ok(&["fixtures", "--out", fx.to_str().unwrap()]);
    fx
}

fn model_args(sub: &str, fx: &Path, name: &str, plans: &str) -> Vec<String> {
    let f = |file: &str| fx.join(name).join(file).to_str().unwrap().to_string();
    vec![
        sub.into(),
        "--net".into(),
        f("network.txt"),
        "--sim".into(),
        f("similarity.txt"),
        "--products".into(),
        f("products.txt"),
        "--plans".into(),
        f(plans),
    ]
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn fixtures_are_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    for (name, files) in [
        ("fig2", &["network.txt", "similarity.txt", "products.txt", "plans.json"][..]),
        ("fig3", &["network.txt", "similarity.txt", "products.txt", "plans.json", "plans_t.json"][..]),
    ] {
        for f in files {
            assert!(fx.join(name).join(f).is_file(), "{name}/{f}");
        }
    }
    let edges = fs::read_to_string(fx.join("fig3/network.txt")).unwrap();
    assert_eq!(edges.lines().count(), 36);
    assert_eq!(fs::read_to_string(fx.join("fig2/products.txt")).unwrap(), "0 1 0 null=1\n1 0 1 null=1\n");
    let again = dir.path().join("again");
    ok(&["fixtures", "--out", again.to_str().unwrap()]);
    for name in ["fig2", "fig3", "toy"] {
        assert_eq!(read_dir_bytes(&fx.join(name)), read_dir_bytes(&again.join(name)));
    }
}

#[test]
fn simulate_reproduces_fig3_spread() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("sim");
    let args = with(model_args("simulate", &fx, "fig3", "plans.json"), &["--reps", "1000000", "--seed", "5", "--out", out.to_str().unwrap()]);
    ok(&strs(&args));
    let result = json(out.join("simulate.json"));
    let mean = result["spread"][0]["mean"].as_f64().unwrap();
    let stderr = result["spread"][0]["stderr"].as_f64().unwrap();
    assert!((mean - 6.72).abs() <= 4.0 * stderr, "{mean} +- {stderr}");
    assert_eq!(result["meta"]["seed"], 5);
    assert_eq!(result["real_nodes"], 37);
    let per_node = fs::read_to_string(out.join("per_node.csv")).unwrap();
    assert_eq!(per_node.lines().count(), 1 + 37 * 2);
    let trajectory = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("node,activation_time,product\n0,0,0\n1,0,1\n"));
    let pseudo = json(out.join("pseudo.json"));
    assert_eq!(pseudo["pseudonodes"].as_array().unwrap().len(), 2);
    assert_eq!(pseudo["pseudonodes"][0]["kind"]["role"], "product_root");
}

#[test]
fn simulate_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let go = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let args = with(model_args("simulate", &fx, "fig3", "plans_t.json"), &["--reps", "50000", "--seed", "3", "--out", out.to_str().unwrap()]);
        let status = bin().args(strs(&args)).env("MULTICHANNEL_WORKERS", workers).status().unwrap();
        assert!(status.success());
        read_dir_bytes(&out)
    };
    let a = go("a", "1");
    assert_eq!(a, go("b", "1"));
    assert_eq!(a, go("c", "3"));
}

#[test]
fn missing_products_is_a_config_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("never");
    let mut args = model_args("simulate", &fx, "fig3", "plans.json");
    args[6] = dir.path().join("missing.txt").to_str().unwrap().into();
    let args = with(args, &["--out", out.to_str().unwrap()]);
    let result = run(&strs(&args));
    assert_eq!(result.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&result.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(!out.exists());
}

#[test]
fn invalid_network_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let net = dir.path().join("bad.txt");
    fs::write(&net, "0 1 0.7\n2 1 0.6\n").unwrap();
    let products = fx.join("fig2/products.txt");
    let out = dir.path().join("o");
    let result = run(&["simulate", "--net", net.to_str().unwrap(), "--products", products.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&result.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("weight sum"), "{err}");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "trails = 5\n").unwrap();
    let result = run(&["gadget-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let result = run(&["fixtures", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn optimize_toy_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let cfg = dir.path().join("ce.toml");
    fs::write(&cfg, "budget = 2.0\nhorizon = 2\nsamples = 30\nmax_iterations = 4\nreps = 500\n").unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        let args = with(model_args("optimize", &fx, "toy", "plans.json"), &["--config", cfg.to_str().unwrap(), "--seed", "8", "--out", out.to_str().unwrap()]);
        ok(&strs(&args));
        out
    };
    let out = go("a");
    let result = json(out.join("optimize.json"));
    let plan = &result["plan"];
    let cost = plan["seeds"].as_array().unwrap().len() as f64
        + plan["alpha"].as_f64().unwrap()
        + plan["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).sum::<f64>();
    assert!(cost <= 2.0 + 1e-9);
    assert!(!plan["seeds"].as_array().unwrap().contains(&Value::from(4)));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,best,mean,elite_threshold\n"));
    assert_eq!(trace.lines().count(), 1 + result["iterations"].as_u64().unwrap() as usize);
    assert_eq!(json(out.join("plans.json")).as_array().unwrap().len(), 2);
    assert_eq!(read_dir_bytes(&out), read_dir_bytes(&go("b")));
}

#[test]
fn optimize_needs_a_budget() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let args = with(model_args("optimize", &fx, "toy", "plans.json"), &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(run(&strs(&args)).status.code(), Some(2));
}

#[test]
fn best_response_on_fig2() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let cfg = dir.path().join("br.toml");
    fs::write(&cfg, "samples = 20\nmax_iterations = 3\nreps = 200\nrounds = 2\n").unwrap();
    let out = dir.path().join("br");
    let f = |file: &str| fx.join("fig2").join(file).to_str().unwrap().to_string();
    ok(&[
        "best-response",
        "--net",
        &f("network.txt"),
        "--products",
        &f("products.txt"),
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let result = json(out.join("best_response.json"));
    let rounds = result["rounds_run"].as_u64().unwrap();
    assert!((1..=2).contains(&rounds));
    assert_eq!(result["plans"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("objectives.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * rounds as usize);
}

#[test]
fn oracle_gives_exact_fig3_values() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    for (plans, sigma) in [("plans.json", 6.72), ("plans_t.json", 2.0 + 2.0 + 0.3 * (1.0 - 0.52f64.sqrt()) * 31.0)] {
        let out = dir.path().join(plans);
        let args = with(model_args("oracle", &fx, "fig3", plans), &["--out", out.to_str().unwrap()]);
        ok(&strs(&args));
        let result = json(out.join("oracle.json"));
        assert!((result["spread"][0].as_f64().unwrap() - sigma).abs() < 1e-9, "{plans}: {result}");
        assert_eq!(result["law"], "uniform");
    }
    let out = dir.path().join("grid");
    let args = with(model_args("oracle", &fx, "fig2", "plans.json"), &["--grid", "10", "--out", out.to_str().unwrap()]);
    ok(&strs(&args));
    assert_eq!(json(out.join("oracle.json"))["law"]["grid"], 10);
}

#[test]
fn gadget_check_finds_no_counterexamples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(&["gadget-check", "--trials", "2000", "--seed", "4", "--out", out.to_str().unwrap()]);
    let result = json(out.join("gadget_check.json"));
    assert_eq!(result["trials"], 2000);
    assert_eq!(result["engine_counterexamples"], 0);
    assert_eq!(result["algebraic_counterexamples"], 0);
}
