use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::{Standardizer, TrainError};
use crate::hiergraph::{build_hier_graph, HierGraph, Vocabulary};
use crate::model::{collate, forward, Bound, ModelConfig, ModelError, ModelParams};
use crate::tensor::{load_checkpoint, save_checkpoint, Checkpoint, Real, Tape};

/// Graphs per forward pass during inference.
const INFERENCE_BATCH: usize = 64;

/// Everything needed to run a trained model on new molecules.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams<T>,
    pub standardizer: Standardizer,
    pub target_names: Vec<String>,
}

impl<T: Real> TrainedModel<T> {
    /// Writes a checkpoint directory; `extra` lands under `metadata.training`.
    pub fn save(&self, dir: &Path, extra: serde_json::Value) -> Result<(), TrainError> {
        let (names, tensors) = self.params.clone().into_parts();
        let metadata = json!({
            "model": self.config,
            "vocab": self.vocab,
            "target_names": self.target_names,
            "standardization": self.standardizer,
            "training": extra,
        });
        save_checkpoint(dir, &Checkpoint { names, tensors, metadata })?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TrainedModel<T>, TrainError> {
        let ckpt = load_checkpoint::<T>(dir)?;
        let field = |name: &str| {
            ckpt.metadata
                .get(name)
                .cloned()
                .ok_or_else(|| TrainError::Data(format!("checkpoint metadata lacks {name:?}")))
        };
        let parse = |name: &str, e: serde_json::Error| TrainError::Data(format!("checkpoint metadata {name:?}: {e}"));
        let config: ModelConfig = serde_json::from_value(field("model")?).map_err(|e| parse("model", e))?;
        let vocab: Vocabulary = serde_json::from_value(field("vocab")?).map_err(|e| parse("vocab", e))?;
        let standardizer: Standardizer =
            serde_json::from_value(field("standardization")?).map_err(|e| parse("standardization", e))?;
        let target_names: Vec<String> =
            serde_json::from_value(field("target_names")?).map_err(|e| parse("target_names", e))?;
        if vocab.ring_dim() != config.ring_dim || vocab.connection_dim() != config.conn_dim {
            return Err(ModelError::VocabMismatch {
                what: "checkpoint vocabulary",
                expected: config.ring_dim + config.conn_dim,
                found: vocab.ring_dim() + vocab.connection_dim(),
            }
            .into());
        }
        if target_names.len() != config.n_targets || standardizer.mean.len() != config.n_targets {
            return Err(TrainError::Data("checkpoint target metadata disagrees with the model".into()));
        }
        let params = ModelParams::from_named(&config, ckpt.names, ckpt.tensors)?;
        Ok(TrainedModel {
            config,
            vocab,
            params,
            standardizer,
            target_names,
        })
    }
}

/// De-standardized predictions, one row per graph, and the number of ring
/// nodes whose type fell outside the vocabulary.
pub fn predict_graphs<T: Real>(model: &TrainedModel<T>, graphs: &[&HierGraph]) -> Result<(Vec<Vec<f64>>, usize), TrainError> {
    let mut rows = Vec::with_capacity(graphs.len());
    let mut oov = 0;
    for chunk in graphs.chunks(INFERENCE_BATCH) {
        let batch = collate(chunk, &model.vocab, &model.config)?;
        oov += batch.oov_rings;
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &model.params, false);
        let out = forward(&mut tape, &model.config, &batch, &bound)?;
        let pred = tape.value(out.pred)?.to_f64_vec();
        rows.extend(pred.chunks(model.config.n_targets).map(|z| model.standardizer.inverse(z)));
    }
    Ok((rows, oov))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    /// Per-task MAE in original units.
    pub mae: Vec<f64>,
    pub oov_rings: usize,
}

pub fn evaluate<T: Real>(model: &TrainedModel<T>, graphs: &[&HierGraph]) -> Result<EvalReport, TrainError> {
    let t = model.config.n_targets;
    for g in graphs {
        match &g.targets {
            Some(y) if y.len() == t => {}
            _ => return Err(TrainError::Data(format!("{:?} lacks {t} target values", g.smiles()))),
        }
    }
    let (pred, oov_rings) = predict_graphs(model, graphs)?;
    let mut mae = vec![0.0; t];
    for (p, g) in pred.iter().zip(graphs) {
        for (k, y) in g.targets.as_deref().unwrap_or(&[]).iter().enumerate() {
            mae[k] += (p[k] - y).abs();
        }
    }
    let n = graphs.len();
    if n > 0 {
        mae.iter_mut().for_each(|m| *m /= n as f64);
    }
    Ok(EvalReport { n, mae, oov_rings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub smiles: String,
    /// `"ok"` or `"parse_error"`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Predicts every parseable row; the others carry a status instead.
pub fn predict<T: Real>(model: &TrainedModel<T>, smiles: &[String]) -> Result<Vec<Prediction>, TrainError> {
    let built: Vec<Result<HierGraph, String>> = smiles
        .iter()
        .map(|s| build_hier_graph(s, model.config.use_virtual).map_err(|e| e.to_string()))
        .collect();
    let ok: Vec<&HierGraph> = built.iter().filter_map(|r| r.as_ref().ok()).collect();
    let (mut values, _) = predict_graphs(model, &ok)?;
    values.reverse();
    Ok(smiles
        .iter()
        .zip(built)
        .map(|(s, r)| match r {
            Ok(_) => Prediction {
                smiles: s.clone(),
                status: "ok",
                values: values.pop(),
                error: None,
            },
            Err(e) => Prediction {
                smiles: s.clone(),
                status: "parse_error",
                values: None,
                error: Some(e),
            },
        })
        .collect())
}
