use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Dataset, Split, Standardizer, TrainConfig, TrainError, TrainedModel};
use crate::hiergraph::{build_vocab, HierGraph};
use crate::model::{collate, forward, mae_loss, Bound, ModelParams};
use crate::tensor::{onecycle_lr, Adam, Real, Tape, Tensor};

/// One line of the metrics log. MAEs are per task, in original units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mae: Vec<f64>,
    /// `null` when the validation split is empty.
    pub val_mae: Option<Vec<f64>>,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation error (the last
    /// epoch when there is no validation split).
    pub model: TrainedModel<T>,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Learning rate of every optimizer step.
    pub lr_trace: Vec<f64>,
}

/// Mean over tasks of the MAE in standardized units.
fn standardized_mae(mae: &[f64], s: &Standardizer) -> f64 {
    mae.iter().zip(&s.std).map(|(m, sd)| m / sd).sum::<f64>() / mae.len() as f64
}

/// Trains on the `Train` split, validating on `Val` after every epoch.
/// `on_epoch` sees each metrics line as soon as it exists.
pub fn train<T: Real>(
    ds: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<T>, TrainError> {
    let train_idx = ds.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let val: Vec<&HierGraph> = ds.subset(Split::Val);
    let n_targets = ds.n_targets();

    let vocab = build_vocab(train_idx.iter().map(|&i| &ds.graphs[i]))?;
    let mut model_config = config.model.clone().with_vocab(&vocab);
    model_config.n_targets = n_targets;
    let config = TrainConfig {
        model: model_config.clone(),
        ..config.clone()
    };
    config.validate()?;

    let standardizer = if config.standardize_targets {
        Standardizer::fit(train_idx.iter().map(|&i| ds.targets(i)), n_targets)
    } else {
        Standardizer::identity(n_targets)
    };
    let scaled: Vec<Vec<f64>> = (0..ds.len()).map(|i| standardizer.forward(ds.targets(i))).collect();

    let mut params = ModelParams::<T>::init(&model_config, config.seed)?;
    let mut adam = Adam::new(params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;

    let mut current = TrainedModel {
        config: model_config.clone(),
        vocab,
        params: params.clone(),
        standardizer: standardizer.clone(),
        target_names: ds.target_names.clone(),
    };
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut lr_trace = Vec::with_capacity(total_steps);
    let mut order = train_idx.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut abs_sum = vec![0.0; n_targets];
        let mut lr = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&HierGraph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let batch = collate(&graphs, &current.vocab, &model_config)?;
            let target_data: Vec<f64> = chunk.iter().flat_map(|&i| scaled[i].iter().copied()).collect();
            let target = Tensor::<T>::from_f64(chunk.len(), n_targets, &target_data)?;

            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &params, true);
            let vars = bound.vars().to_vec();
            let out = forward(&mut tape, &model_config, &batch, &bound)?;
            let loss = mae_loss(&mut tape, out.pred, &target)?;
            let pred = tape.value(out.pred)?.to_f64_vec();
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();

            lr = onecycle_lr(lr_trace.len(), total_steps, config.max_lr)?;
            lr_trace.push(lr);
            adam.step(params.tensors_mut(), &grads, lr)?;

            for (z, &i) in pred.chunks(n_targets).zip(chunk) {
                let y = standardizer.inverse(z);
                for (t, (p, truth)) in y.iter().zip(ds.targets(i)).enumerate() {
                    abs_sum[t] += (p - truth).abs();
                }
            }
        }
        let train_mae: Vec<f64> = abs_sum.iter().map(|s| s / train_idx.len() as f64).collect();

        current.params = params.clone();
        let val_mae = if val.is_empty() {
            None
        } else {
            Some(super::evaluate(&current, &val)?.mae)
        };
        let score = standardized_mae(val_mae.as_deref().unwrap_or(&train_mae), &standardizer);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => val.is_empty() || score < *b,
        };
        if improved {
            best = Some((score, epoch, params.clone()));
        }
        let line = EpochMetrics {
            epoch,
            train_mae,
            val_mae,
            lr,
        };
        log::info!("epoch {epoch}: train {:?} val {:?}", line.train_mae, line.val_mae);
        on_epoch(&line);
        metrics.push(line);
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    current.params = best_params;
    Ok(TrainOutcome {
        model: current,
        best_epoch,
        metrics,
        lr_trace,
    })
}
