use std::sync::Arc;

use super::{AttnNorm, BatchedGraph, ModelConfig, ModelError, ModelParams};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Denominator guard of the linear attention normalization.
const LINEAR_ATTN_EPS: f64 = 1e-8;

/// Model parameters recorded on a tape, addressable by name.
pub struct Bound<'a, T> {
    params: &'a ModelParams<T>,
    vars: Vec<Var>,
}

impl<'a, T: Real> Bound<'a, T> {
    /// Records every parameter as a leaf; `trainable` controls gradients.
    pub fn new(tape: &mut Tape<T>, params: &'a ModelParams<T>, trainable: bool) -> Bound<'a, T> {
        let vars = params.tensors().iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        Bound { params, vars }
    }

    /// Uses existing variables, one per parameter in storage order.
    pub fn from_vars(params: &'a ModelParams<T>, vars: Vec<Var>) -> Bound<'a, T> {
        debug_assert_eq!(vars.len(), params.tensors().len());
        Bound { params, vars }
    }

    pub fn var(&self, name: &str) -> Result<Var, ModelError> {
        Ok(self.vars[self.params.position(name)?])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Batch constants recorded once per forward pass.
struct Inputs {
    atom_x: Var,
    bond_x: Var,
    ring_x: Var,
    ring_edge_x: Var,
    /// `d × C` indicator of which hidden unit belongs to which head.
    heads: Var,
}

fn constant<T: Real>(tape: &mut Tape<T>, rows: usize, cols: usize, data: &[f64]) -> Result<Var, ModelError> {
    Ok(tape.constant(Tensor::from_f64(rows, cols, data)?))
}

impl Inputs {
    fn new<T: Real>(tape: &mut Tape<T>, c: &ModelConfig, b: &BatchedGraph) -> Result<Inputs, ModelError> {
        let (d, heads) = (c.hidden, c.heads);
        let mut indicator = vec![0.0; d * heads];
        for i in 0..d {
            indicator[i * heads + i / (d / heads)] = 1.0;
        }
        Ok(Inputs {
            atom_x: constant(tape, b.num_atoms, c.atom_dim, &b.atom_x)?,
            bond_x: constant(tape, b.atom_src.len(), c.bond_dim, &b.bond_x)?,
            ring_x: constant(tape, b.num_rings, c.ring_dim, &b.ring_x)?,
            ring_edge_x: constant(tape, b.ring_src.len(), c.conn_dim, &b.ring_edge_x)?,
            heads: constant(tape, d, heads, &indicator)?,
        })
    }
}

fn linear<T: Real>(tape: &mut Tape<T>, p: &Bound<T>, x: Var, prefix: &str) -> Result<Var, ModelError> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let y = tape.matmul_t(x, w)?;
    Ok(tape.add(y, b)?)
}

/// Two-layer perceptron with a relu between the layers.
fn mlp<T: Real>(tape: &mut Tape<T>, p: &Bound<T>, x: Var, prefix: &str) -> Result<Var, ModelError> {
    let h = linear(tape, p, x, &format!("{prefix}.0"))?;
    let h = tape.relu(h)?;
    linear(tape, p, h, &format!("{prefix}.1"))
}

/// `(1 + ε)·h + m`.
fn gin_combine<T: Real>(tape: &mut Tape<T>, h: Var, eps: Var, m: Var) -> Result<Var, ModelError> {
    let eh = tape.scale_by(h, eps)?;
    let s = tape.add(h, eh)?;
    Ok(tape.add(s, m)?)
}

/// Atom rows `x · W_aᵀ`; real ring rows `(x · W_rᵀ) ‖ PE[degree]`; virtual
/// rows are a learned embedding plus the reserved encoding row placed in
/// the last `pe_dim` columns.
pub fn init_embeddings<T: Real>(
    tape: &mut Tape<T>,
    c: &ModelConfig,
    b: &BatchedGraph,
    p: &Bound<T>,
) -> Result<(Var, Var), ModelError> {
    let inputs = Inputs::new(tape, c, b)?;
    init_with(tape, c, b, p, &inputs)
}

fn init_with<T: Real>(
    tape: &mut Tape<T>,
    c: &ModelConfig,
    b: &BatchedGraph,
    p: &Bound<T>,
    inputs: &Inputs,
) -> Result<(Var, Var), ModelError> {
    let atom = tape.matmul_t(inputs.atom_x, p.var("atom_embed.w")?)?;

    let pe = p.var("degree_pe")?;
    let typed = tape.matmul_t(inputs.ring_x, p.var("ring_embed.w")?)?;
    let degrees: Arc<[usize]> = b.ring_degree.iter().map(|&g| g.min(c.max_degree)).collect();
    let pe_rows = tape.gather(pe, degrees)?;
    let mut ring = tape.concat_cols(&[typed, pe_rows])?;
    if b.num_virtual > 0 {
        let reserved = tape.gather(pe, Arc::from([c.max_degree + 1]))?;
        let zeros = tape.constant(Tensor::zeros(1, c.hidden - c.pe_dim));
        let pad = tape.concat_cols(&[zeros, reserved])?;
        let row = tape.add(p.var("virtual_embed")?, pad)?;
        let rows = tape.gather(row, std::iter::repeat_n(0, b.num_virtual).collect())?;
        ring = tape.concat_rows(&[ring, rows])?;
    }
    Ok((atom, ring))
}

/// GINE update: `m_i = Σ_j relu(h_j + W_e e_ij + b)`, `h' = MLP((1+ε)h_i + m_i)`.
pub fn atom_mp_layer<T: Real>(
    tape: &mut Tape<T>,
    l: usize,
    h: Var,
    b: &BatchedGraph,
    p: &Bound<T>,
    bond_x: Var,
) -> Result<Var, ModelError> {
    let e = linear(tape, p, bond_x, &format!("atom.{l}.edge"))?;
    let hj = tape.gather(h, b.atom_src.clone())?;
    let msg = tape.add(hj, e)?;
    let msg = tape.relu(msg)?;
    let m = tape.segment_sum(msg, b.atom_dst.clone(), b.num_atoms)?;
    let pre = gin_combine(tape, h, p.var(&format!("atom.{l}.eps"))?, m)?;
    mlp(tape, p, pre, &format!("atom.{l}.mlp"))
}

/// Edge-aware neighbourhood attention over ring-level nodes. Returns the
/// new ring rows and the `edges × heads` attention weights.
#[allow(clippy::too_many_arguments)]
pub fn ring_attention_layer<T: Real>(
    tape: &mut Tape<T>,
    l: usize,
    h: Var,
    c: &ModelConfig,
    b: &BatchedGraph,
    p: &Bound<T>,
    edge_x: Var,
    heads: Var,
) -> Result<(Var, Var), ModelError> {
    let n = b.num_ring_nodes();
    let hj = tape.gather(h, b.ring_src.clone())?;
    let tokens = tape.concat_cols(&[hj, edge_x])?;
    let z = mlp(tape, p, tokens, &format!("ring.{l}.z"))?;

    let q = tape.matmul_t(h, p.var(&format!("ring.{l}.q"))?)?;
    let qi = tape.gather(q, b.ring_dst.clone())?;
    let k = tape.matmul_t(z, p.var(&format!("ring.{l}.k"))?)?;
    let v = tape.matmul_t(z, p.var(&format!("ring.{l}.v"))?)?;

    let qk = tape.mul(qi, k)?;
    let scores = tape.matmul(qk, heads)?;
    let scores = tape.scale(scores, T::from_f64_lossy(1.0 / (c.hidden as f64).sqrt()))?;
    let alpha = match c.attn_norm {
        AttnNorm::Softmax => tape.segment_softmax(scores, b.ring_dst.clone())?,
        AttnNorm::Linear => tape.segment_normalize(scores, b.ring_dst.clone(), T::from_f64_lossy(LINEAR_ATTN_EPS))?,
    };
    let weights = tape.matmul_t(alpha, heads)?;
    let weighted = tape.mul(weights, v)?;
    let agg = tape.segment_sum(weighted, b.ring_dst.clone(), n)?;

    let self_part = tape.matmul_t(h, p.var(&format!("ring.{l}.s"))?)?;
    let neigh_part = tape.matmul_t(agg, p.var(&format!("ring.{l}.o"))?)?;
    let hat = tape.add(self_part, neigh_part)?;
    let res = tape.add(hat, h)?;
    let out = mlp(tape, p, res, &format!("ring.{l}.ffn"))?;
    Ok((out, alpha))
}

/// GIN over the bipartite atom/ring membership graph. Input and output
/// rows are all atoms followed by all real rings.
pub fn inter_mp_layer<T: Real>(
    tape: &mut Tape<T>,
    l: usize,
    atom_h: Var,
    ring_h: Var,
    b: &BatchedGraph,
    p: &Bound<T>,
) -> Result<Var, ModelError> {
    let real = tape.slice_rows(ring_h, 0, b.num_rings)?;
    let nodes = tape.concat_rows(&[atom_h, real])?;
    let hj = tape.gather(nodes, b.inter_src.clone())?;
    let m = tape.segment_sum(hj, b.inter_dst.clone(), b.num_atoms + b.num_rings)?;
    let pre = gin_combine(tape, nodes, p.var(&format!("inter.{l}.eps"))?, m)?;
    mlp(tape, p, pre, &format!("inter.{l}.mlp"))
}

/// `MLP(h ‖ h_I)` with the fusion network named `prefix`.
pub fn fuse<T: Real>(tape: &mut Tape<T>, prefix: &str, h: Var, h_inter: Var, p: &Bound<T>) -> Result<Var, ModelError> {
    let x = tape.concat_cols(&[h, h_inter])?;
    mlp(tape, p, x, prefix)
}

pub struct ForwardOutput {
    /// `graphs × targets`.
    pub pred: Var,
    /// Atom rows after embedding and after each layer.
    pub atom_h: Vec<Var>,
    /// Ring-level rows (virtual nodes last) after embedding and each layer.
    pub ring_h: Vec<Var>,
    /// Attention weights of each layer, `ring edges × heads`.
    pub attention: Vec<Var>,
    /// Pooled graph representation fed to the readout.
    pub graph_repr: Var,
}

pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    c: &ModelConfig,
    b: &BatchedGraph,
    p: &Bound<T>,
) -> Result<ForwardOutput, ModelError> {
    let inputs = Inputs::new(tape, c, b)?;
    let (mut atom, mut ring) = init_with(tape, c, b, p, &inputs)?;
    let mut atom_h = vec![atom];
    let mut ring_h = vec![ring];
    let mut attention = Vec::with_capacity(c.layers);
    for l in 0..c.layers {
        let ha = atom_mp_layer(tape, l, atom, b, p, inputs.bond_x)?;
        let (hr, alpha) = ring_attention_layer(tape, l, ring, c, b, p, inputs.ring_edge_x, inputs.heads)?;
        let hi = inter_mp_layer(tape, l, atom, ring, b, p)?;

        let hi_atoms = tape.slice_rows(hi, 0, b.num_atoms)?;
        let hi_rings = tape.slice_rows(hi, b.num_atoms, b.num_rings)?;
        atom = fuse(tape, &format!("fuse_atom.{l}"), ha, hi_atoms, p)?;
        let hr_real = tape.slice_rows(hr, 0, b.num_rings)?;
        let fused = fuse(tape, &format!("fuse_ring.{l}"), hr_real, hi_rings, p)?;
        ring = if b.num_virtual > 0 {
            let virt = tape.slice_rows(hr, b.num_rings, b.num_virtual)?;
            tape.concat_rows(&[fused, virt])?
        } else {
            fused
        };
        atom_h.push(atom);
        ring_h.push(ring);
        attention.push(alpha);
    }

    let atom_cat = tape.concat_cols(&atom_h)?;
    let mut real_rings = Vec::with_capacity(ring_h.len());
    for &r in &ring_h {
        real_rings.push(tape.slice_rows(r, 0, b.num_rings)?);
    }
    let ring_cat = tape.concat_cols(&real_rings)?;
    let pool_a = tape.segment_sum(atom_cat, b.atom_graph.clone(), b.num_graphs)?;
    let pool_r = tape.segment_sum(ring_cat, b.ring_graph.clone(), b.num_graphs)?;
    let graph_repr = tape.concat_cols(&[pool_a, pool_r])?;
    let pred = linear(tape, p, graph_repr, "readout")?;
    Ok(ForwardOutput {
        pred,
        atom_h,
        ring_h,
        attention,
        graph_repr,
    })
}

/// Mean absolute error over all entries.
pub fn mae_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: &Tensor<T>) -> Result<Var, ModelError> {
    let shape = tape.shape(pred)?;
    if shape != target.shape() {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "mae_loss",
            lhs: shape,
            rhs: target.shape(),
        }
        .into());
    }
    if target.data().iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFiniteTarget);
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let abs = tape.abs(diff)?;
    Ok(tape.mean(abs)?)
}
