use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rnnlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnnlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = |out: &'static str| ["gen-data", "--task", "temporal_order", "--T", "50", "--n", "3", "--seed", "7", "--out", out];
    assert_eq!(code(&rnnlab(dir.path(), &args("a.jsonl"))), 0);
    assert_eq!(code(&rnnlab(dir.path(), &args("b.jsonl"))), 0);
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    let lines: Vec<Value> = String::from_utf8(a)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert_eq!(l["inputs"].as_array().unwrap().len(), 50);
        assert_eq!(l["scored_steps"], serde_json::json!([50]));
        assert!(l["target"]["class"].as_u64().unwrap() < 4);
    }
    let m = json(&dir.path().join("a.jsonl.manifest.json"));
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["status"], "ok");
}

#[test]
fn gen_data_empty_dataset() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["gen-data", "--task", "addition", "--T", "50", "--n", "0", "--out", "e.jsonl"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(dir.path().join("e.jsonl")).unwrap().len(), 0);
    let m = json(&dir.path().join("e.jsonl.manifest.json"));
    assert_eq!(m["artifacts"][0], "e.jsonl");
}

#[test]
fn gen_data_rejects_invalid_spec() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["gen-data", "--task", "addition", "--T", "3", "--n", "1", "--out", "x.jsonl"]);
    assert_eq!(code(&out), 1);
    let out = rnnlab(
        dir.path(),
        &["gen-data", "--task", "noiseless_memorization", "--T", "50", "--n", "1", "--pattern-len", "7", "--symbols", "2", "--out", "x.jsonl"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&rnnlab(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&rnnlab(dir.path(), &["train", "--clip", "sideways"])), 1);
    let out = rnnlab(dir.path(), &["train", "--set", "lr=fast", "--set", "bogus=1"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("flag.lr") && err.contains("flag.bogus"), "{err}");
    assert_eq!(code(&rnnlab(dir.path(), &["--help"])), 0);
    assert_eq!(code(&rnnlab(dir.path(), &["--version"])), 0);
}

#[test]
fn modes_conflicting_with_explicit_settings_are_rejected() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["train", "--mode", "sgd", "--clip", "norm"][..],
        &["train", "--mode", "sgd-c", "--alpha", "2"][..],
        &["train", "--mode", "sgd-cr"][..],
    ] {
        assert_eq!(code(&rnnlab(dir.path(), args)), 1, "{args:?}");
    }
}

fn short_run(dir: &Path, mode: &[&str], out_dir: &str) -> Output {
    let mut args = vec![
        "train", "--task", "temporal_order", "--T", "10", "--hidden", "8", "--lr", "0.01", "--max-updates", "20",
        "--eval-every", "10", "--test-size", "50", "--batch", "4", "--seed", "3", "--out-dir", out_dir,
    ];
    args.extend_from_slice(mode);
    rnnlab(dir, &args)
}

#[test]
fn train_writes_artifacts_and_reports_budget() {
    let dir = TempDir::new().unwrap();
    let out = short_run(dir.path(), &["--mode", "sgd-cr", "--alpha", "0.5", "--threshold", "1"], "run");
    assert_eq!(code(&out), 2, "{}", stdout(&out));
    let run = dir.path().join("run");
    let m = json(&run.join("manifest.json"));
    assert_eq!(m["status"], "budget_exhausted");
    assert_eq!(m["exit_code"], 2);
    assert_eq!(m["config"]["clip"], "norm");
    assert_eq!(m["config"]["alpha"].as_f64(), Some(0.5));
    assert_eq!(m["config"]["threshold"].as_f64(), Some(1.0));
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "update,loss,grad_norm,grad_norm_clipped,clip_fired,omega,alpha,lr,test_error,success"
    );
    assert_eq!(lines.count(), 20);
    let metrics = json(&run.join("metrics.json"));
    assert_eq!(metrics["updates"], 20);
    let ckpt = json(&run.join("checkpoint.json"));
    assert_eq!(ckpt["dims"]["hidden"], 8);
}

#[test]
fn modes_map_onto_clip_and_alpha() {
    let dir = TempDir::new().unwrap();
    short_run(dir.path(), &["--mode", "sgd"], "sgd");
    short_run(dir.path(), &["--mode", "sgd-c", "--threshold", "1"], "sgdc");
    short_run(dir.path(), &["--mode", "sgd-cr", "--alpha", "2", "--threshold", "1"], "sgdcr");
    let cfg = |d: &str| json(&dir.path().join(d).join("manifest.json"))["config"].clone();
    let (sgd, sgdc, sgdcr) = (cfg("sgd"), cfg("sgdc"), cfg("sgdcr"));
    assert_eq!((sgd["clip"].as_str(), sgd["alpha"].as_f64()), (Some("none"), Some(0.0)));
    assert_eq!((sgdc["clip"].as_str(), sgdc["alpha"].as_f64()), (Some("norm"), Some(0.0)));
    assert_eq!((sgdcr["clip"].as_str(), sgdcr["alpha"].as_f64()), (Some("norm"), Some(2.0)));
    // Plain SGD never reports a clip; the regularized run logs a non-zero Ω.
    let log = |d: &str| std::fs::read_to_string(dir.path().join(d).join("train_log.csv")).unwrap();
    assert!(log("sgd").lines().skip(1).all(|l| l.split(',').nth(4) == Some("0")));
    assert!(log("sgdcr").lines().skip(1).any(|l| l.split(',').nth(5).unwrap().parse::<f64>().unwrap() > 0.0));
}

#[test]
fn train_is_reproducible_from_its_manifest() {
    let dir = TempDir::new().unwrap();
    short_run(dir.path(), &["--mode", "sgd-c", "--threshold", "1"], "first");
    let out = rnnlab(dir.path(), &["train", "--config", "first/manifest.json", "--out-dir", "second"]);
    assert_eq!(code(&out), 2);
    let replay = rnnlab(dir.path(), &["replay", "first/manifest.json"]);
    assert_eq!(code(&replay), 2);
    for f in ["checkpoint.json", "train_log.csv", "metrics.json"] {
        let a = std::fs::read(dir.path().join("first").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("second").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    // The replay overwrote `first` with identical artifacts.
    let a = std::fs::read(dir.path().join("first/train_log.csv")).unwrap();
    let b = std::fs::read(dir.path().join("second/train_log.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn key_value_config_files() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# small run\ntask = addition\nT = 10\nhidden = 4\nmax_updates = 5\neval_every = 5\ntest_size = 10\nmode = sgd-c\nthreshold = 2\n",
    )
    .unwrap();
    let out = rnnlab(dir.path(), &["train", "--config", "run.cfg", "--out-dir", "kv"]);
    assert!(matches!(code(&out), 0 | 2), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("kv/manifest.json"));
    assert_eq!(m["config"]["task"], "addition");
    assert_eq!(m["config"]["mode"], "sgd-c");
}

#[test]
fn diverging_run_exits_three() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(
        dir.path(),
        &[
            "train", "--task", "addition", "--T", "10", "--hidden", "4", "--init-std", "3", "--lr", "1e12",
            "--max-updates", "50", "--eval-every", "10", "--test-size", "10", "--out-dir", "div",
        ],
    );
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    assert_eq!(json(&dir.path().join("div/manifest.json"))["status"], "diverged");
}

#[test]
fn grad_check_passes() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["grad-check", "--n", "20", "--T", "10", "--activation", "tanh"][..],
        &["grad-check", "--n", "5", "--T", "50", "--activation", "sigmoid"][..],
    ] {
        let out = rnnlab(dir.path(), args);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
    }
    let rows = json(&dir.path().join("grad_check.json"));
    assert_eq!(rows.as_array().unwrap().len(), 6);
    assert!(rows.as_array().unwrap().iter().all(|r| r["max_rel_error"].as_f64().unwrap() < 1e-5));
}

#[test]
fn grad_check_linear_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["grad-check", "--n", "1", "--T", "3", "--activation", "identity"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let row = text.lines().find(|l| l.starts_with("closed form")).expect("closed-form row");
    assert!(row.ends_with("pass"));
}

#[test]
fn analyze_conditions_on_fresh_init() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["analyze", "conditions", "--hidden", "50", "--init-std", "0.1"]);
    assert_eq!(code(&out), 0);
    let r = json(&dir.path().join("conditions.json"));
    let radius = r["spectral_radius"].as_f64().unwrap();
    let norm = r["spectral_norm"].as_f64().unwrap();
    assert!(radius < norm);
    assert_eq!(r["vanishing_sufficient"].as_bool(), Some(norm < 1.0));
    assert_eq!(r["exploding_necessary"], false);
}

#[test]
fn analyze_direction_limits() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["analyze", "direction", "--n", "9"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n ≤ 8"));
    let out = rnnlab(dir.path(), &["analyze", "direction", "--n", "4", "--l", "50"]);
    assert_eq!(code(&out), 0);
    let r = json(&dir.path().join("direction.json"));
    assert!(r["rel_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn analyze_surface_and_bifurcation_outputs() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(dir.path(), &["analyze", "surface", "--w-points", "15", "--b-points", "11"]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("surface.csv")).unwrap();
    assert!(csv.starts_with("w,b,E,gradnorm"));
    assert_eq!(csv.lines().count(), 1 + 15 * 11);

    let out = rnnlab(dir.path(), &["analyze", "bifurcation", "--w", "5", "--b-min", "-5", "--b-max", "0", "--points", "101"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("[1, 2, 1]"));
    let s = json(&dir.path().join("bifurcation.json"));
    let b: Vec<f64> = s["boundaries"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(b.len(), 2);
    assert!((b[0] + 2.6556).abs() < 1e-3 && (b[1] + 2.3444).abs() < 1e-3, "{b:?}");
}

#[test]
fn analyze_suggest_threshold() {
    let dir = TempDir::new().unwrap();
    let out = rnnlab(
        dir.path(),
        &["analyze", "suggest-threshold", "--task", "temporal_order", "--T", "20", "--updates", "200", "--hidden", "10"],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("mean |g|"));
    let s = json(&dir.path().join("threshold.json"));
    assert_eq!(s["updates"], 200);
    let (mean, max) = (s["mean"].as_f64().unwrap(), s["max"].as_f64().unwrap());
    assert!(mean > 0.0 && max >= mean);
}
