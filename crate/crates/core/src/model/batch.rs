use std::sync::Arc;

use super::{ModelConfig, ModelError};
use crate::hiergraph::{encode_ring_attributes, one_hot, HierGraph, Vocabulary};
use crate::smiles::featurize_atom_graph;

/// Several hierarchical graphs packed into one set of index arrays.
///
/// Ring-level nodes are the real rings of every graph (graph-major), then
/// one virtual node per graph when virtual nodes are enabled. Inter-level
/// nodes are all atoms followed by all real rings.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub num_graphs: usize,
    pub num_atoms: usize,
    pub num_rings: usize,
    pub num_virtual: usize,

    /// Atom features, `num_atoms × atom_dim`.
    pub atom_x: Vec<f64>,
    /// Directed bonds (each bond both ways) and their features.
    pub atom_src: Arc<[usize]>,
    pub atom_dst: Arc<[usize]>,
    pub bond_x: Vec<f64>,
    /// Graph id of each atom, sorted.
    pub atom_graph: Arc<[usize]>,

    /// Ring-type one-hots, `num_rings × ring_dim`.
    pub ring_x: Vec<f64>,
    /// Real ring-graph degree of each real ring (virtual edges excluded).
    pub ring_degree: Vec<usize>,
    /// Graph id of each real ring, sorted.
    pub ring_graph: Arc<[usize]>,

    /// Directed ring-level edges, sorted by destination.
    pub ring_src: Arc<[usize]>,
    pub ring_dst: Arc<[usize]>,
    /// Connection-type one-hots, one row per directed edge.
    pub ring_edge_x: Vec<f64>,

    /// Directed membership edges over inter-level node ids.
    pub inter_src: Arc<[usize]>,
    pub inter_dst: Arc<[usize]>,

    /// `num_graphs × n_targets`, when every graph carries targets.
    pub targets: Option<Vec<f64>>,
    /// Rings whose type fell outside the vocabulary.
    pub oov_rings: usize,
}

impl BatchedGraph {
    pub fn num_ring_nodes(&self) -> usize {
        self.num_rings + self.num_virtual
    }
}

/// Packs graphs for one forward pass. Virtual nodes follow `config`, not
/// the graphs' own flags.
pub fn collate(graphs: &[&HierGraph], vocab: &Vocabulary, config: &ModelConfig) -> Result<BatchedGraph, ModelError> {
    if vocab.ring_dim() != config.ring_dim {
        return Err(ModelError::VocabMismatch {
            what: "ring type",
            expected: config.ring_dim,
            found: vocab.ring_dim(),
        });
    }
    if vocab.connection_dim() != config.conn_dim {
        return Err(ModelError::VocabMismatch {
            what: "connection type",
            expected: config.conn_dim,
            found: vocab.connection_dim(),
        });
    }
    let num_atoms: usize = graphs.iter().map(|h| h.num_atoms()).sum();
    let num_rings: usize = graphs.iter().map(|h| h.num_rings()).sum();
    let num_virtual = if config.use_virtual { graphs.len() } else { 0 };

    let mut b = BatchedGraph {
        num_graphs: graphs.len(),
        num_atoms,
        num_rings,
        num_virtual,
        atom_x: Vec::with_capacity(num_atoms * config.atom_dim),
        atom_src: Arc::from([]),
        atom_dst: Arc::from([]),
        bond_x: Vec::new(),
        atom_graph: Arc::from([]),
        ring_x: Vec::with_capacity(num_rings * config.ring_dim),
        ring_degree: Vec::with_capacity(num_rings),
        ring_graph: Arc::from([]),
        ring_src: Arc::from([]),
        ring_dst: Arc::from([]),
        ring_edge_x: Vec::new(),
        inter_src: Arc::from([]),
        inter_dst: Arc::from([]),
        targets: None,
        oov_rings: 0,
    };

    let (mut atom_src, mut atom_dst, mut atom_graph) = (Vec::new(), Vec::new(), Vec::with_capacity(num_atoms));
    let mut ring_graph = Vec::with_capacity(num_rings);
    // (dst, src, connection type)
    let mut ring_edges: Vec<(usize, usize, usize)> = Vec::new();
    let (mut inter_src, mut inter_dst) = (Vec::new(), Vec::new());
    let mut targets = Vec::new();
    let mut all_targets = true;

    let (mut atom_off, mut ring_off) = (0, 0);
    for (gi, h) in graphs.iter().enumerate() {
        let f = featurize_atom_graph(&h.atom_graph);
        if f.node.len() != h.num_atoms() * config.atom_dim {
            return Err(ModelError::VocabMismatch {
                what: "atom feature",
                expected: config.atom_dim,
                found: f.node.len() / h.num_atoms().max(1),
            });
        }
        b.atom_x.extend_from_slice(&f.node);
        atom_graph.extend(std::iter::repeat_n(gi, h.num_atoms()));
        for (k, bond) in h.atom_graph.bonds.iter().enumerate() {
            let (u, v) = bond.endpoints;
            for (s, d) in [(u, v), (v, u)] {
                atom_src.push(atom_off + s);
                atom_dst.push(atom_off + d);
                b.bond_x.extend_from_slice(f.edge_row(k));
            }
        }

        let enc = encode_ring_attributes(h, vocab);
        b.ring_x.extend(one_hot(&enc.ring_types, config.ring_dim));
        b.oov_rings += enc.ring_types.iter().filter(|&&t| t == Vocabulary::OOV).count();
        b.ring_degree.extend(h.ring_graph.real_degrees());
        ring_graph.extend(std::iter::repeat_n(gi, h.num_rings()));
        for (c, conn) in h.ring_graph.connections.iter().enumerate() {
            let (i, j) = (ring_off + conn.rings.0, ring_off + conn.rings.1);
            let t = enc.edge_types[c];
            ring_edges.push((j, i, t));
            ring_edges.push((i, j, t));
        }
        if config.use_virtual {
            let v = num_rings + gi;
            for r in ring_off..ring_off + h.num_rings() {
                ring_edges.push((v, r, Vocabulary::VIRTUAL));
                ring_edges.push((r, v, Vocabulary::VIRTUAL));
            }
        }
        for &(r, a) in &h.inter_edges {
            let (an, rn) = (atom_off + a, num_atoms + ring_off + r);
            inter_src.extend([an, rn]);
            inter_dst.extend([rn, an]);
        }

        match &h.targets {
            Some(y) if y.len() == config.n_targets => targets.extend_from_slice(y),
            _ => all_targets = false,
        }
        atom_off += h.num_atoms();
        ring_off += h.num_rings();
    }

    ring_edges.sort_unstable();
    b.ring_edge_x = one_hot(&ring_edges.iter().map(|e| e.2).collect::<Vec<_>>(), config.conn_dim);
    b.ring_dst = ring_edges.iter().map(|e| e.0).collect();
    b.ring_src = ring_edges.iter().map(|e| e.1).collect();
    b.atom_src = atom_src.into();
    b.atom_dst = atom_dst.into();
    b.atom_graph = atom_graph.into();
    b.ring_graph = ring_graph.into();
    b.inter_src = inter_src.into();
    b.inter_dst = inter_dst.into();
    b.targets = (all_targets && !graphs.is_empty()).then_some(targets);
    Ok(b)
}
