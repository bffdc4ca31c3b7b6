use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{collate, forward, mae_loss, Bound, ModelConfig, ModelError, ModelParams};
use crate::hiergraph::{build_hier_graph, build_vocab, HierGraph};
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, OpKind, Tensor};

/// Molecules of the full-model gradient check: fused, chained and ringless.
pub const GRAD_CHECK_SMILES: [&str; 3] = ["c1ccc2ccccc2c1", "Cc1csc(c1)-c1cccs1", "CC(=O)NCC=C"];

/// Micro configuration of the full-model gradient check.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 16,
        heads: 2,
        pe_dim: 4,
        ..ModelConfig::desk(2)
    }
}

/// Finite-difference check of every parameter of a micro model on a
/// three-molecule batch with an MAE loss, in f64.
pub fn model_grad_check(seed: u64, tol: f64, fault: Option<OpKind>) -> Result<GradCheckReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = GRAD_CHECK_SMILES
        .iter()
        .map(|s| build_hier_graph(s, true))
        .collect::<Result<Vec<HierGraph>, _>>()
        .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    let vocab = build_vocab(&graphs).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    let config = grad_check_config().with_vocab(&vocab);
    let refs: Vec<&HierGraph> = graphs.iter().collect();
    let batch = collate(&refs, &vocab, &config)?;

    let mut params = ModelParams::<f64>::init(&config, rng.random())?;
    // nonzero biases and epsilons so every parameter path carries signal
    for (name, t) in params.names().to_vec().iter().zip(params.tensors_mut()) {
        if name.ends_with(".b") || name.ends_with(".eps") {
            t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.3..0.3));
        }
    }
    let target = Tensor::new(
        graphs.len(),
        config.n_targets,
        (0..graphs.len() * config.n_targets).map(|_| rng.random_range(-3.0..3.0)).collect(),
    )?;

    let layout = params.clone();
    let (_, mut tensors) = params.into_parts();
    let opts = GradCheckOptions {
        tol,
        seed,
        fault,
        ..GradCheckOptions::default()
    };
    grad_check(
        |tape, vars| {
            let p = Bound::from_vars(&layout, vars.to_vec());
            let out = forward(tape, &config, &batch, &p)?;
            mae_loss(tape, out.pred, &target)
        },
        &mut tensors,
        &opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sabotaged_matmul_fails() {
        let report = model_grad_check(1, 1e-4, Some(OpKind::MatMulT)).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn micro_model_passes() {
        let report = model_grad_check(7, 1e-4, None).unwrap();
        assert!(report.passed(), "max rel err {:e}", report.max_rel_err());
        assert!(report.excluded() * 50 < report.checked());
    }
}
