use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::tensor::{Real, Tensor};

/// Named parameters in a fixed order. Weight matrices are stored
/// `[out, in]` and applied as `x · Wᵀ`; biases are `1 × out` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

/// Parameter names and shapes for a configuration, in storage order.
fn layout(c: &ModelConfig) -> Vec<(String, [usize; 2])> {
    let d = c.hidden;
    let mut out: Vec<(String, [usize; 2])> = Vec::new();
    let mut push = |name: String, shape: [usize; 2]| out.push((name, shape));
    let mlp = |push: &mut dyn FnMut(String, [usize; 2]), prefix: &str, input: usize, hidden: usize, output: usize| {
        push(format!("{prefix}.0.w"), [hidden, input]);
        push(format!("{prefix}.0.b"), [1, hidden]);
        push(format!("{prefix}.1.w"), [output, hidden]);
        push(format!("{prefix}.1.b"), [1, output]);
    };

    push("atom_embed.w".into(), [d, c.atom_dim]);
    push("ring_embed.w".into(), [d - c.pe_dim, c.ring_dim]);
    // one row per clipped degree, plus a reserved row for the virtual node
    push("degree_pe".into(), [c.max_degree + 2, c.pe_dim]);
    push("virtual_embed".into(), [1, d]);
    for l in 0..c.layers {
        push(format!("atom.{l}.edge.w"), [d, c.bond_dim]);
        push(format!("atom.{l}.edge.b"), [1, d]);
        push(format!("atom.{l}.eps"), [1, 1]);
        mlp(&mut push, &format!("atom.{l}.mlp"), d, d, d);

        mlp(&mut push, &format!("ring.{l}.z"), d + c.conn_dim, d, d);
        // heads stacked by rows: head h owns rows h·d/C .. (h+1)·d/C
        for m in ["q", "k", "v", "s", "o"] {
            push(format!("ring.{l}.{m}"), [d, d]);
        }
        mlp(&mut push, &format!("ring.{l}.ffn"), d, 2 * d, d);

        push(format!("inter.{l}.eps"), [1, 1]);
        mlp(&mut push, &format!("inter.{l}.mlp"), d, d, d);

        mlp(&mut push, &format!("fuse_atom.{l}"), 2 * d, d, d);
        mlp(&mut push, &format!("fuse_ring.{l}"), 2 * d, d, d);
    }
    push("readout.w".into(), [c.n_targets, c.readout_dim()]);
    push("readout.b".into(), [1, c.n_targets]);
    out
}

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform weights and embeddings; zero biases and GIN epsilons.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, [r, c]) in layout(config) {
            let t = if name.ends_with(".b") || name.ends_with(".eps") {
                Tensor::zeros(r, c)
            } else {
                let a = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c).map(|_| T::from_f64_lossy(rng.random_range(-a..a))).collect();
                Tensor::new(r, c, data)?
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(ModelParams::from_parts(names, tensors))
    }

    /// Rebuilds from stored tensors, checking names and shapes against `config`.
    pub fn from_named(config: &ModelConfig, names: Vec<String>, tensors: Vec<Tensor<T>>) -> Result<ModelParams<T>, ModelError> {
        let expected = layout(config);
        if expected.len() != names.len() {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameters, found {}",
                expected.len(),
                names.len()
            )));
        }
        for ((name, shape), (n, t)) in expected.iter().zip(names.iter().zip(&tensors)) {
            if name != n || *shape != t.shape() {
                return Err(ModelError::InvalidConfig(format!(
                    "parameter {n} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(ModelParams::from_parts(names, tensors))
    }

    fn from_parts(names: Vec<String>, tensors: Vec<Tensor<T>>) -> ModelParams<T> {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ModelParams { names, tensors, index }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<Tensor<T>>) {
        (self.names, self.tensors)
    }

    pub fn position(&self, name: &str) -> Result<usize, ModelError> {
        self.index.get(name).copied().ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, ModelError> {
        Ok(&self.tensors[self.position(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, ModelError> {
        let i = self.position(name)?;
        Ok(&mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams::from_parts(self.names.clone(), self.tensors.iter().map(Tensor::cast).collect())
    }
}
