use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn ringkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringkit"))
        .args(args)
        .env_remove("RINGKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_csv(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn build_graphs_benzene_naphthalene() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "in.csv", "smiles,y\nc1ccccc1,1.0\nc1ccc2ccccc2c1,2.0\nC1CC,3.0\n");
    let jsonl = dir.path().join("g.jsonl");
    let out = ringkit(&["build-graphs", "--in", p(&csv), "--targets", "y", "--out", p(&jsonl)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["records"], 2);
    assert_eq!(summary["rejected"], 1);
    assert_eq!(summary["rejects"][0]["row"], 3);
    assert_eq!(summary["avg_rings"], 1.5);
    let text = fs::read_to_string(&jsonl).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["rings"].as_array().unwrap().len(), 2);
    assert_eq!(lines[1]["y"][0], 2.0);

    let stats = ringkit(&["stats", "--graphs", p(&jsonl)]);
    assert_eq!(code(&stats), 0);
    assert_eq!(stdout_json(&stats)["avg_rings"], 1.5);
}

#[test]
fn build_graphs_to_stdout_without_targets() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "in.csv", "s\nc1ccsc1\n");
    let out = ringkit(&["build-graphs", "--in", p(&csv), "--smiles-col", "s", "--no-virtual"]);
    assert_eq!(code(&out), 0);
    let line: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["smiles"], "c1ccsc1");
    assert!(line.get("y").is_none_or(Value::is_null));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"records\": 1"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "in.csv", "smiles\nCCO\n");
    let out = ringkit(&["build-graphs", "--in", p(&csv), "--smiles-col", "nope"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column \"nope\""));
    assert!(out.stdout.is_empty());

    assert_eq!(code(&ringkit(&["build-graphs", "--in", p(&dir.path().join("absent.csv"))])), 2);
    assert_eq!(code(&ringkit(&["train", "--graphs", "x.jsonl", "--out", "o", "--profile", "huge"])), 1);
    assert_eq!(code(&ringkit(&["frobnicate"])), 1);
    assert_eq!(code(&ringkit(&["train", "--out", "o"])), 1);

    let bad = write_csv(dir.path(), "bad.jsonl", "{\"v\":1,\"smiles\":\n");
    assert_eq!(code(&ringkit(&["stats", "--graphs", p(&bad)])), 2);
}

#[test]
fn help_documents_every_flag() {
    let out = ringkit(&["--help"]);
    assert_eq!(code(&out), 0);
    let top = String::from_utf8_lossy(&out.stdout).into_owned();
    for sub in ["build-graphs", "stats", "train", "eval", "predict", "gradcheck", "--threads", "RINGKIT_THREADS"] {
        assert!(top.contains(sub), "{sub} missing from --help");
    }
    let expected: &[(&str, &[&str])] = &[
        ("build-graphs", &["--in", "--smiles-col", "--targets", "--out", "--no-virtual"]),
        ("stats", &["--graphs", "--csv", "--no-virtual"]),
        (
            "train",
            &[
                "--graphs", "--csv", "--targets", "--out", "--config", "--profile", "--seed", "--epochs", "--batch-size",
                "--max-lr", "--precision", "--split-file", "--attn-norm", "--no-virtual", "--sweep",
            ],
        ),
        ("eval", &["--model", "--graphs", "--csv", "--split"]),
        ("predict", &["--model", "--in", "--smiles", "--out"]),
        ("gradcheck", &["--full", "--seed"]),
    ];
    for (sub, flags) in expected {
        let out = ringkit(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        for flag in *flags {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
        assert!(!text.contains("--sabotage"));
    }
}

#[test]
fn threads_flag_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "in.csv", "smiles\nc1ccccc1\n");
    assert_eq!(code(&ringkit(&["--threads", "1", "stats", "--csv", p(&csv)])), 0);
    assert_eq!(code(&ringkit(&["stats", "--csv", p(&csv), "--threads", "0"])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_ringkit"))
        .args(["stats", "--csv", p(&csv)])
        .env("RINGKIT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn gradcheck_passes_and_detects_sabotage() {
    let out = ringkit(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    assert!(report["ops"].as_array().unwrap().len() >= 10);
    assert!(report["model"].is_null());

    let out = ringkit(&["gradcheck", "--sabotage", "matmul-t"]);
    assert_eq!(code(&out), 3);
    let report = stdout_json(&out);
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> = report["ops"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["passed"] == false)
        .map(|o| o["op"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["matmul_t"]);
}

#[test]
fn gradcheck_full_micro_model() {
    let start = Instant::now();
    let out = ringkit(&["gradcheck", "--full"]);
    let took = start.elapsed();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    assert_eq!(report["model"]["passed"], true);
    assert!(report["model"]["max_rel_err"].as_f64().unwrap() < 1e-4);
    assert!(took < Duration::from_secs(60), "took {took:?}");
}

fn std_dev(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len() as f64).sqrt()
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = data("overfit_32.csv");
    let config = write_csv(
        dir.path(),
        "config.json",
        r#"{"split": {"random": {"train": 0.75, "val": 0.25, "test": 0.0}}, "epochs": 2}"#,
    );
    let ckpt = dir.path().join("ckpt");
    let args = [
        "train", "--csv", &fixture, "--targets", "y", "--config", p(&config), "--epochs", "60", "--batch-size", "8",
        "--seed", "3", "--out", p(&ckpt),
    ];
    let out = ringkit(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["config"]["epochs"], 60);
    assert_eq!(summary["config"]["seed"], 3);
    assert_eq!(summary["config"]["model"]["layers"], 4);
    assert_eq!(summary["splits"]["train"], 24);
    assert_eq!(summary["splits"]["val"], 8);

    let metrics: Vec<Value> = fs::read_to_string(ckpt.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(metrics.len(), 60);
    for key in ["epoch", "train_mae", "val_mae", "lr"] {
        assert!(metrics[0].get(key).is_some(), "metrics line lacks {key}");
    }
    let ys: Vec<f64> = fs::read_to_string(&fixture)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let last = metrics[59]["train_mae"][0].as_f64().unwrap();
    assert!(last < 0.25 * std_dev(&ys), "final train MAE {last}");
    for f in ["manifest.json", "params.bin", "config.json"] {
        assert!(ckpt.join(f).exists(), "{f}");
    }

    // identical inputs and seed give identical bytes
    let again = dir.path().join("again");
    let mut args2 = args;
    args2[args2.len() - 1] = p(&again);
    let out2 = ringkit(&args2);
    assert_eq!(code(&out2), 0);
    for f in ["metrics.jsonl", "params.bin", "manifest.json"] {
        assert_eq!(fs::read(ckpt.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} differs");
    }

    // the best epoch's validation MAE is what eval reports on the val split
    let best = summary["run"]["best_val_mae"][0].as_f64().unwrap();
    let out = ringkit(&["eval", "--model", p(&ckpt), "--csv", &fixture, "--split", "val"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["n"], 8);
    assert_eq!(report["targets"][0], "y");
    assert!((report["mae"][0].as_f64().unwrap() - best).abs() < 1e-9);
    let all = stdout_json(&ringkit(&["eval", "--model", p(&ckpt), "--csv", &fixture]));
    assert_eq!(all["n"], 32);
    assert_eq!(all["split"], "all");

    let molecules = write_csv(dir.path(), "m.csv", "smiles\nc1ccccc1\nnot a molecule\nc1ccccc1\n");
    let out = ringkit(&["predict", "--model", p(&ckpt), "--in", p(&molecules), "--smiles", "CCO"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["status"], "ok");
    assert_eq!(rows[1]["status"], "parse_error");
    assert!(rows[1].get("values").is_none());
    assert_eq!(rows[0]["values"], rows[2]["values"]);
    assert_eq!(rows[3]["smiles"], "CCO");
}

#[test]
fn paper_profile_echo_and_split_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(
        dir.path(),
        "in.csv",
        "smiles,a,b\nc1ccccc1,1,2\nc1ccsc1,2,1\nCCO,0.5,0\nc1ccc2ccccc2c1,3,3\n",
    );
    let split = write_csv(dir.path(), "split.txt", "train\n0\n1\n2\nval\n3\n");
    let ckpt = dir.path().join("paper");
    let out = ringkit(&[
        "train", "--csv", p(&csv), "--targets", "a,b", "--profile", "paper", "--epochs", "1", "--split-file", p(&split),
        "--precision", "f64", "--out", p(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    let model = &summary["config"]["model"];
    assert_eq!((model["layers"].as_u64(), model["hidden"].as_u64(), model["heads"].as_u64()), (Some(8), Some(512), Some(4)));
    assert_eq!(model["n_targets"], 2);
    assert_eq!(summary["splits"]["train"], 3);
    assert_eq!(summary["splits"]["test"], 0);
    assert_eq!(summary["targets"][1], "b");
    assert!(String::from_utf8_lossy(&out.stderr).contains("L=8 d=512 C=4"));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(ckpt.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["precision"], "f64");

    let overlap = write_csv(dir.path(), "overlap.txt", "train:\n0\n1\nval:\n1\n");
    let out = ringkit(&[
        "train", "--csv", p(&csv), "--targets", "a", "--epochs", "1", "--split-file", p(&overlap), "--out", p(&ckpt),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_keeps_best_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("sweep");
    let out = ringkit(&[
        "train", "--csv", &data("overfit_32.csv"), "--targets", "y", "--epochs", "2", "--batch-size", "16", "--sweep",
        "--out", p(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    let runs = summary["sweep"].as_array().unwrap();
    let lrs: Vec<f64> = runs.iter().map(|r| r["max_lr"].as_f64().unwrap()).collect();
    assert_eq!(lrs, [1e-3, 5e-4, 1e-4, 5e-5]);
    let best = runs
        .iter()
        .min_by(|a, b| a["score"].as_f64().unwrap().total_cmp(&b["score"].as_f64().unwrap()))
        .unwrap();
    assert_eq!(summary["best_max_lr"], best["max_lr"]);
    assert_eq!(summary["config"]["max_lr"], best["max_lr"]);
    let kept = fs::read(ckpt.join("params.bin")).unwrap();
    let source = PathBuf::from(best["dir"].as_str().unwrap());
    assert_eq!(kept, fs::read(source.join("params.bin")).unwrap());
    assert_eq!(code(&ringkit(&["train", "--graphs", "g", "--out", "o", "--sweep", "--max-lr", "1e-3"])), 1);
}
