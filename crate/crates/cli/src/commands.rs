use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ringkit_core::hiergraph::{corpus_stats, read_jsonl, serialize, HierGraph};
use ringkit_core::model::{model_grad_check, AttnNorm, ModelConfig};
use ringkit_core::tensor::{op_suite, peek_checkpoint, Real};
use ringkit_core::train::{
    self, evaluate, load_csv, predict as predict_rows, split_dataset, Dataset, EpochMetrics, Precision, Split, SplitSpec,
    TrainConfig, TrainedModel, MAX_LR_GRID,
};
use serde_json::{json, Value};

use crate::args::{BuildGraphsArgs, DataArgs, EvalArgs, GradcheckArgs, PredictArgs, SplitChoice, StatsArgs, TrainArgs};
use crate::Failure;

const MODEL_GRAD_TOL: f64 = 1e-4;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn print_json(v: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::Data(e.to_string()))
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| io_failure(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

/// Output file or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn build_graphs(a: &BuildGraphsArgs) -> Result<(), Failure> {
    let ds = load_csv(&a.input, &a.smiles_col, &a.targets, !a.no_virtual)?;
    let mut w = sink(a.out.as_deref())?;
    for g in &ds.graphs {
        let mut line = if a.targets.is_empty() {
            serialize(&HierGraph { targets: None, ..g.clone() })
        } else {
            serialize(g)
        };
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Failure::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))?;
    drop(w);

    let stats = corpus_stats(&ds.graphs);
    let summary = json!({
        "records": ds.len(),
        "rejected": ds.rejects.len(),
        "avg_rings": stats.avg_rings,
        "stats": stats,
        "rejects": ds.rejects,
    });
    if a.out.is_some() {
        print_json(&summary)
    } else {
        eprintln!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
        Ok(())
    }
}

/// Loads `--graphs` or `--csv`. Target names fall back to `default_targets`,
/// then to `y0, y1, ...` for graph files.
fn load_data(d: &DataArgs, add_virtual: bool, default_targets: Option<&[String]>) -> Result<Dataset, Failure> {
    let names: Option<Vec<String>> = if d.targets.is_empty() {
        default_targets.map(<[String]>::to_vec)
    } else {
        Some(d.targets.clone())
    };
    if let Some(path) = &d.csv {
        let names = names.ok_or_else(|| Failure::Usage("--targets is required with --csv".into()))?;
        return Ok(load_csv(path, &d.smiles_col, &names, add_virtual)?);
    }
    let path = d.graphs.as_ref().expect("clap requires --graphs or --csv");
    let graphs = read_graphs(path)?;
    let width = graphs.first().and_then(|g| g.targets.as_ref()).map_or(0, Vec::len);
    let names = names.unwrap_or_else(|| (0..width).map(|i| format!("y{i}")).collect());
    Ok(Dataset::from_graphs(graphs, names)?)
}

fn read_graphs(path: &Path) -> Result<Vec<HierGraph>, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| io_failure(path, e))
}

pub fn stats(a: &StatsArgs) -> Result<(), Failure> {
    let graphs = match (&a.data.csv, &a.data.graphs) {
        (Some(path), _) => load_csv(path, &a.data.smiles_col, &[], !a.no_virtual)?.graphs,
        (None, Some(path)) => read_graphs(path)?,
        (None, None) => unreachable!("clap requires --graphs or --csv"),
    };
    print_json(&json!(corpus_stats(&graphs)))
}

/// Deep merge of JSON objects; `split` is replaced whole because its
/// variants are mutually exclusive keys.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if k != "split" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Profile defaults, then the config file, then explicit flags.
pub(crate) fn resolve_config(a: &TrainArgs, n_targets: usize) -> Result<TrainConfig, Failure> {
    let profile = a.profile.as_deref().unwrap_or("desk");
    let mut config = TrainConfig {
        model: ModelConfig::profile(profile, n_targets).ok_or_else(|| Failure::Usage(format!("unknown profile {profile:?}")))?,
        ..TrainConfig::desk(n_targets)
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let over: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&config).expect("config serializes");
        merge(&mut base, over);
        config = serde_json::from_value(base).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.max_lr {
        config.max_lr = v;
    }
    if let Some(v) = &a.precision {
        config.precision = Precision::from_name(v).expect("clap restricts precision");
    }
    if let Some(v) = &a.split_file {
        config.split = SplitSpec::File(v.clone());
    }
    if let Some(v) = &a.attn_norm {
        config.model.attn_norm = if v == "linear" { AttnNorm::Linear } else { AttnNorm::Softmax };
    }
    if a.no_virtual {
        config.model.use_virtual = false;
    }
    config.model.n_targets = n_targets;
    config.validate()?;
    Ok(config)
}

struct RunSummary {
    best_epoch: usize,
    last: EpochMetrics,
    best_val_mae: Option<Vec<f64>>,
    /// Mean standardized validation MAE of the kept epoch.
    score: Option<f64>,
}

fn train_into<T: Real>(ds: &Dataset, config: &TrainConfig, dir: &Path) -> Result<RunSummary, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_json(&dir.join("config.json"), &json!(config))?;
    let metrics_path = dir.join("metrics.jsonl");
    let mut log = BufWriter::new(File::create(&metrics_path).map_err(|e| io_failure(&metrics_path, e))?);
    let mut write_err = None;
    let outcome = train::train::<T>(ds, config, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_failure(&metrics_path, e));
    }
    outcome
        .model
        .save(dir, json!({"config": config, "best_epoch": outcome.best_epoch}))?;

    let best = &outcome.metrics[outcome.best_epoch - 1];
    let std = &outcome.model.standardizer.std;
    let score = best
        .val_mae
        .as_ref()
        .map(|v| v.iter().zip(std).map(|(m, s)| m / s).sum::<f64>() / v.len() as f64);
    Ok(RunSummary {
        best_epoch: outcome.best_epoch,
        last: outcome.metrics.last().expect("at least one epoch").clone(),
        best_val_mae: best.val_mae.clone(),
        score,
    })
}

fn train_run(ds: &Dataset, config: &TrainConfig, dir: &Path) -> Result<RunSummary, Failure> {
    let m = &config.model;
    log::info!(
        "model: L={} d={} C={} d_p={} attn={:?} virtual={}; {} epochs, batch {}, max_lr {}, {}",
        m.layers,
        m.hidden,
        m.heads,
        m.pe_dim,
        m.attn_norm,
        m.use_virtual,
        config.epochs,
        config.batch_size,
        config.max_lr,
        config.precision.name()
    );
    match config.precision {
        Precision::F32 => train_into::<f32>(ds, config, dir),
        Precision::F64 => train_into::<f64>(ds, config, dir),
    }
}

fn split_sizes(ds: &Dataset) -> Value {
    json!({
        "train": ds.indices(Split::Train).len(),
        "val": ds.indices(Split::Val).len(),
        "test": ds.indices(Split::Test).len(),
    })
}

fn run_json(r: &RunSummary) -> Value {
    json!({
        "best_epoch": r.best_epoch,
        "best_val_mae": r.best_val_mae,
        "final": r.last,
    })
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    // the target count is only known once the data is read, so validate
    // the flags against a placeholder first to fail fast on usage errors
    resolve_config(a, a.data.targets.len().max(1))?;
    let use_virtual = !a.no_virtual;
    let mut ds = load_data(&a.data, use_virtual, None)?;
    if ds.n_targets() == 0 {
        return Err(Failure::Data("dataset has no targets".into()));
    }
    let config = resolve_config(a, ds.n_targets())?;
    split_dataset(&mut ds, &config.split, config.seed)?;

    if !a.sweep {
        let run = train_run(&ds, &config, &a.out)?;
        return print_json(&json!({
            "config": config,
            "targets": ds.target_names,
            "records": ds.len(),
            "rejected": ds.rejects.len(),
            "splits": split_sizes(&ds),
            "checkpoint": a.out,
            "run": run_json(&run),
        }));
    }

    if ds.indices(Split::Val).is_empty() {
        return Err(Failure::Usage("--sweep needs a non-empty validation split".into()));
    }
    let mut runs = Vec::new();
    let mut best: Option<(f64, PathBuf, f64)> = None;
    for lr in MAX_LR_GRID {
        let dir = a.out.join(format!("max_lr_{lr:e}"));
        let cfg = TrainConfig { max_lr: lr, ..config.clone() };
        let run = train_run(&ds, &cfg, &dir)?;
        let score = run.score.expect("validation split is non-empty");
        log::info!("max_lr {lr:e}: standardized val MAE {score:.6}");
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, dir.clone(), lr));
        }
        runs.push(json!({"max_lr": lr, "dir": dir, "score": score, "run": run_json(&run)}));
    }
    let (score, dir, lr) = best.expect("grid is non-empty");
    for name in ["manifest.json", "params.bin", "metrics.jsonl", "config.json"] {
        fs::copy(dir.join(name), a.out.join(name)).map_err(|e| io_failure(&dir.join(name), e))?;
    }
    print_json(&json!({
        "config": TrainConfig { max_lr: lr, ..config },
        "targets": ds.target_names,
        "records": ds.len(),
        "rejected": ds.rejects.len(),
        "splits": split_sizes(&ds),
        "checkpoint": a.out,
        "best_max_lr": lr,
        "best_score": score,
        "sweep": runs,
    }))
}

fn checkpoint_precision(dir: &Path) -> Result<(Precision, Value), Failure> {
    let (name, metadata) = peek_checkpoint(dir)?;
    let p = Precision::from_name(&name).ok_or_else(|| Failure::Data(format!("{}: unknown precision {name:?}", dir.display())))?;
    Ok((p, metadata))
}

fn eval_with<T: Real>(a: &EvalArgs, metadata: &Value) -> Result<(), Failure> {
    let model = TrainedModel::<T>::load(&a.model)?;
    let mut ds = load_data(&a.data, model.config.use_virtual, Some(&model.target_names))?;
    if ds.target_names.len() != model.target_names.len() {
        return Err(Failure::Data(format!(
            "dataset has {} targets, the model predicts {}",
            ds.target_names.len(),
            model.target_names.len()
        )));
    }
    let split = match a.split {
        SplitChoice::All => None,
        SplitChoice::Train => Some(Split::Train),
        SplitChoice::Val => Some(Split::Val),
        SplitChoice::Test => Some(Split::Test),
    };
    let graphs: Vec<&HierGraph> = match split {
        None => ds.graphs.iter().collect(),
        Some(s) => {
            let training = metadata
                .pointer("/training/config")
                .ok_or_else(|| Failure::Data("checkpoint does not record its training split".into()))?;
            let config: TrainConfig =
                serde_json::from_value(training.clone()).map_err(|e| Failure::Data(format!("checkpoint training config: {e}")))?;
            split_dataset(&mut ds, &config.split, config.seed)?;
            ds.subset(s)
        }
    };
    let report = evaluate(&model, &graphs)?;
    print_json(&json!({
        "split": split.map_or("all", Split::name),
        "targets": model.target_names,
        "n": report.n,
        "mae": report.mae,
        "oov_rings": report.oov_rings,
    }))
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let (precision, metadata) = checkpoint_precision(&a.model)?;
    match precision {
        Precision::F32 => eval_with::<f32>(a, &metadata),
        Precision::F64 => eval_with::<f64>(a, &metadata),
    }
}

fn read_smiles_column(path: &Path, col: &str) -> Result<Vec<String>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_failure(path, e))?;
    let at = reader
        .headers()
        .map_err(|e| io_failure(path, e))?
        .iter()
        .position(|h| h == col)
        .ok_or_else(|| Failure::Usage(format!("missing column {col:?}")))?;
    reader
        .records()
        .map(|r| {
            r.map(|rec| rec.get(at).unwrap_or("").trim().to_string())
                .map_err(|e| io_failure(path, e))
        })
        .collect()
}

fn predict_with<T: Real>(a: &PredictArgs, smiles: &[String]) -> Result<(), Failure> {
    let model = TrainedModel::<T>::load(&a.model)?;
    log::info!("predicting {} for {} molecules", model.target_names.join(","), smiles.len());
    let rows = predict_rows(&model, smiles)?;
    let mut w = sink(a.out.as_deref())?;
    for row in rows {
        let line = serde_json::to_string(&row).expect("prediction serializes");
        writeln!(w, "{line}").map_err(|e| Failure::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))
}

pub fn predict(a: &PredictArgs) -> Result<(), Failure> {
    let mut smiles = match &a.input {
        Some(path) => read_smiles_column(path, &a.smiles_col)?,
        None => Vec::new(),
    };
    smiles.extend(a.smiles.iter().cloned());
    let (precision, _) = checkpoint_precision(&a.model)?;
    match precision {
        Precision::F32 => predict_with::<f32>(a, &smiles),
        Precision::F64 => predict_with::<f64>(a, &smiles),
    }
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let fault = a.sabotage.map(|s| s.op());
    let ops = op_suite(a.seed, fault)?;
    let failed_ops: Vec<&str> = ops.iter().filter(|o| !o.passed).map(|o| o.op.as_str()).collect();
    let model = if a.full {
        Some(model_grad_check(a.seed, MODEL_GRAD_TOL, fault)?)
    } else {
        None
    };
    let model_ok = model.as_ref().is_none_or(|r| r.passed());
    let passed = failed_ops.is_empty() && model_ok;
    print_json(&json!({
        "passed": passed,
        "ops": ops,
        "model": model.as_ref().map(|r| json!({
            "passed": r.passed(),
            "tol": r.tol,
            "max_rel_err": r.max_rel_err(),
            "checked": r.checked(),
            "excluded": r.excluded(),
            "params": r.params,
        })),
    }))?;
    if passed {
        Ok(())
    } else {
        let mut what: Vec<String> = failed_ops.iter().map(|s| s.to_string()).collect();
        if !model_ok {
            what.push("full model".into());
        }
        Err(Failure::Numeric(format!("gradient check failed: {}", what.join(", "))))
    }
}
