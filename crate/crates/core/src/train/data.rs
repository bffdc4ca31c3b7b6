use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::hiergraph::{build_hier_graph, HierGraph};

/// Partition a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Not listed in an explicit split file.
    Unused,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unused => "unused",
        }
    }

    pub fn from_name(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub smiles: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Hierarchical graphs, each carrying its target vector.
    pub graphs: Vec<HierGraph>,
    pub target_names: Vec<String>,
    pub splits: Vec<Split>,
    pub rejects: Vec<Reject>,
}

impl Dataset {
    /// Wraps graphs that already carry targets; every record starts in `Train`.
    pub fn from_graphs(graphs: Vec<HierGraph>, target_names: Vec<String>) -> Result<Dataset, TrainError> {
        if graphs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        for (i, g) in graphs.iter().enumerate() {
            match &g.targets {
                Some(y) if y.len() == target_names.len() => {}
                Some(y) => {
                    return Err(TrainError::Data(format!(
                        "record {i} has {} targets, expected {}",
                        y.len(),
                        target_names.len()
                    )))
                }
                None => return Err(TrainError::Data(format!("record {i} has no targets"))),
            }
        }
        let splits = vec![Split::Train; graphs.len()];
        Ok(Dataset {
            graphs,
            target_names,
            splits,
            rejects: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn subset(&self, split: Split) -> Vec<&HierGraph> {
        self.indices(split).into_iter().map(|i| &self.graphs[i]).collect()
    }

    pub fn targets(&self, i: usize) -> &[f64] {
        self.graphs[i].targets.as_deref().unwrap_or(&[])
    }
}

/// Reads a CSV with a header row. Rows whose SMILES fail to parse or whose
/// targets are not finite numbers are dropped and logged.
pub fn load_csv(path: &Path, smiles_col: &str, target_cols: &[String], add_virtual: bool) -> Result<Dataset, TrainError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrainError::MissingColumn(name.to_string()))
    };
    let smiles_at = column(smiles_col)?;
    let target_at = target_cols.iter().map(|c| column(c)).collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
        let smiles = rec.get(smiles_at).unwrap_or("").trim().to_string();
        let targets: Vec<Option<f64>> = target_at
            .iter()
            .map(|&c| rec.get(c).and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite()))
            .collect();
        rows.push((i + 1, smiles, targets));
    }

    let built: Vec<Result<HierGraph, Reject>> = rows
        .into_par_iter()
        .map(|(row, smiles, targets)| {
            let reject = |reason: String| Reject {
                row,
                smiles: smiles.clone(),
                reason,
            };
            let targets = targets
                .into_iter()
                .zip(target_cols)
                .map(|(v, name)| v.ok_or_else(|| reject(format!("target {name:?} is not a finite number"))))
                .collect::<Result<Vec<f64>, _>>()?;
            let g = build_hier_graph(&smiles, add_virtual).map_err(|e| reject(e.to_string()))?;
            Ok(g.with_targets(targets))
        })
        .collect();

    let mut graphs = Vec::new();
    let mut rejects = Vec::new();
    for r in built {
        match r {
            Ok(g) => graphs.push(g),
            Err(rej) => {
                log::warn!("row {} ({:?}) rejected: {}", rej.row, rej.smiles, rej.reason);
                rejects.push(rej);
            }
        }
    }
    log::info!("{}: {} records, {} rejected", path.display(), graphs.len(), rejects.len());
    if graphs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut ds = Dataset::from_graphs(graphs, target_cols.to_vec())?;
    ds.rejects = rejects;
    Ok(ds)
}

/// How records are assigned to partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSpec {
    /// Seeded shuffle, then a cut by fractions.
    Random { train: f64, val: f64, test: f64 },
    /// Explicit index lists.
    File(std::path::PathBuf),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Random {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Assigns every record of `ds` to a partition.
pub fn split_dataset(ds: &mut Dataset, spec: &SplitSpec, seed: u64) -> Result<(), TrainError> {
    ds.splits = match spec {
        SplitSpec::Random { train, val, test } => random_split(ds.len(), [*train, *val, *test], seed)?,
        SplitSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
            parse_split_file(&text, ds.len())?
        }
    };
    Ok(())
}

pub fn random_split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Vec<Split>, TrainError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidConfig(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut splits = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        if pos < n_train {
            splits[i] = Split::Train;
        } else if pos < n_train + n_val {
            splits[i] = Split::Val;
        }
    }
    Ok(splits)
}

/// Parses `train` / `val` / `test` headers, each followed by 0-based record
/// indices, one per line. Blank lines and `#` comments are skipped.
pub fn parse_split_file(text: &str, n: usize) -> Result<Vec<Split>, TrainError> {
    let mut splits = vec![Split::Unused; n];
    let mut current: Option<Split> = None;
    let mut seen: HashMap<usize, Split> = HashMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(s) = Split::from_name(line.trim_end_matches(':').to_ascii_lowercase().as_str()) {
            current = Some(s);
            continue;
        }
        let split = current.ok_or_else(|| TrainError::Data(format!("split file line {}: index before any header", line_no + 1)))?;
        let index: usize = line
            .parse()
            .map_err(|_| TrainError::Data(format!("split file line {}: {line:?} is not an index", line_no + 1)))?;
        if index >= n {
            return Err(TrainError::IndexOutOfRange { index, len: n });
        }
        if let Some(prev) = seen.insert(index, split) {
            return Err(TrainError::OverlappingSplits {
                index,
                first: prev.name(),
                second: split.name(),
            });
        }
        splits[index] = split;
    }
    Ok(splits)
}

/// Per-task affine target transform fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n_targets: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; n_targets],
            std: vec![1.0; n_targets],
        }
    }

    /// Z-scores each task. A task with zero spread is only centred.
    pub fn fit<'a>(targets: impl IntoIterator<Item = &'a [f64]>, n_targets: usize) -> Standardizer {
        let rows: Vec<&[f64]> = targets.into_iter().collect();
        let mut s = Standardizer::identity(n_targets);
        if rows.is_empty() {
            return s;
        }
        let n = rows.len() as f64;
        for t in 0..n_targets {
            let mean = rows.iter().map(|r| r[t]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / n;
            s.mean[t] = mean;
            if var > 0.0 {
                s.std[t] = var.sqrt();
            } else {
                log::warn!("target {t} is constant on the training split; centring only");
            }
        }
        s
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        y.iter().enumerate().map(|(t, v)| (v - self.mean[t]) / self.std[t]).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(t, v)| v * self.std[t] + self.mean[t]).collect()
    }
}
