//! The three-level molecule graph: atoms, rings, and atom/ring membership.
//!
//! Also holds the ring and connection type vocabularies and the JSONL
//! record format used for dataset shards.

use std::collections::BTreeMap;
use std::io::BufRead;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rings::{build_ring_graph_with, ConnectionKind, Ring, RingConnection, RingError, RingGraph, RingLimits};
use crate::smiles::{parse_smiles, Atom, AtomGraph, Bond, BondOrder, Element, SmilesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierGraphError {
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierGraph {
    pub atom_graph: AtomGraph,
    pub ring_graph: RingGraph,
    /// `(ring, atom)` membership pairs, grouped by ring, atoms ascending.
    pub inter_edges: Vec<(usize, usize)>,
    pub targets: Option<Vec<f64>>,
}

impl HierGraph {
    /// Assembles the hierarchy from an atom graph whose rings were already perceived.
    pub fn from_parts(atom_graph: AtomGraph, ring_graph: RingGraph) -> HierGraph {
        let inter_edges = membership(&ring_graph.rings);
        HierGraph {
            atom_graph,
            ring_graph,
            inter_edges,
            targets: None,
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.atom_graph.num_atoms()
    }

    pub fn num_rings(&self) -> usize {
        self.ring_graph.num_rings()
    }

    pub fn smiles(&self) -> &str {
        &self.atom_graph.source_smiles
    }

    pub fn with_targets(mut self, targets: Vec<f64>) -> HierGraph {
        self.targets = Some(targets);
        self
    }
}

fn membership(rings: &[Ring]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(rings.iter().map(Ring::size).sum());
    for (r, ring) in rings.iter().enumerate() {
        let mut atoms = ring.atoms.clone();
        atoms.sort_unstable();
        out.extend(atoms.into_iter().map(|a| (r, a)));
    }
    out
}

pub fn build_hier_graph(smiles: &str, add_virtual: bool) -> Result<HierGraph, HierGraphError> {
    build_hier_graph_with(smiles, add_virtual, &RingLimits::default())
}

pub fn build_hier_graph_with(smiles: &str, add_virtual: bool, limits: &RingLimits) -> Result<HierGraph, HierGraphError> {
    let mut g = parse_smiles(smiles)?;
    let rg = build_ring_graph_with(&mut g, add_virtual, limits)?;
    Ok(HierGraph::from_parts(g, rg))
}

/// Dataset summary in the style of a corpus statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub graphs: usize,
    pub avg_atoms: f64,
    pub avg_bonds: f64,
    pub avg_rings: f64,
    pub avg_ring_edges: f64,
    pub avg_inter_edges: f64,
    pub max_rings: usize,
    /// Graphs without any ring.
    pub ringless: usize,
}

pub fn corpus_stats<'a, I>(corpus: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a HierGraph>,
{
    let mut s = CorpusStats {
        graphs: 0,
        avg_atoms: 0.0,
        avg_bonds: 0.0,
        avg_rings: 0.0,
        avg_ring_edges: 0.0,
        avg_inter_edges: 0.0,
        max_rings: 0,
        ringless: 0,
    };
    for h in corpus {
        s.graphs += 1;
        s.avg_atoms += h.num_atoms() as f64;
        s.avg_bonds += h.atom_graph.num_bonds() as f64;
        s.avg_rings += h.num_rings() as f64;
        s.avg_ring_edges += h.ring_graph.connections.len() as f64;
        s.avg_inter_edges += h.inter_edges.len() as f64;
        s.max_rings = s.max_rings.max(h.num_rings());
        s.ringless += usize::from(h.num_rings() == 0);
    }
    if s.graphs > 0 {
        let n = s.graphs as f64;
        for v in [
            &mut s.avg_atoms,
            &mut s.avg_bonds,
            &mut s.avg_rings,
            &mut s.avg_ring_edges,
            &mut s.avg_inter_edges,
        ] {
            *v /= n;
        }
    }
    s
}

/// Ring-type and connection-type index maps. Index 0 of both is the
/// out-of-vocabulary bucket; connection index 1 is the virtual edge type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabLists", into = "VocabLists")]
pub struct Vocabulary {
    ring_types: IndexMap<String, usize>,
    connection_types: IndexMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    ring_types: Vec<String>,
    connection_types: Vec<String>,
}

impl From<VocabLists> for Vocabulary {
    fn from(v: VocabLists) -> Self {
        Vocabulary::from_lists(v.ring_types, v.connection_types)
    }
}

impl From<Vocabulary> for VocabLists {
    fn from(v: Vocabulary) -> Self {
        VocabLists {
            ring_types: v.ring_types.into_keys().collect(),
            connection_types: v.connection_types.into_keys().collect(),
        }
    }
}

impl Vocabulary {
    pub const OOV: usize = 0;
    pub const VIRTUAL: usize = 1;
    const FIRST_RING: usize = 1;
    const FIRST_CONNECTION: usize = 2;

    /// Builds from signatures listed in index order, without reserved slots.
    pub fn from_lists(ring_types: Vec<String>, connection_types: Vec<String>) -> Vocabulary {
        let index = |sigs: Vec<String>, first: usize| -> IndexMap<String, usize> {
            sigs.into_iter().enumerate().map(|(i, s)| (s, first + i)).collect()
        };
        Vocabulary {
            ring_types: index(ring_types, Self::FIRST_RING),
            connection_types: index(connection_types, Self::FIRST_CONNECTION),
        }
    }

    /// Width of a ring-type one-hot row, OOV included.
    pub fn ring_dim(&self) -> usize {
        Self::FIRST_RING + self.ring_types.len()
    }

    /// Width of a connection-type one-hot row, OOV and virtual included.
    pub fn connection_dim(&self) -> usize {
        Self::FIRST_CONNECTION + self.connection_types.len()
    }

    pub fn ring_index(&self, signature: &str) -> usize {
        self.ring_types.get(signature).copied().unwrap_or(Self::OOV)
    }

    pub fn connection_index(&self, signature: &str) -> usize {
        self.connection_types.get(signature).copied().unwrap_or(Self::OOV)
    }

    /// Known ring signatures in index order.
    pub fn ring_types(&self) -> impl Iterator<Item = &str> {
        self.ring_types.keys().map(String::as_str)
    }

    pub fn connection_types(&self) -> impl Iterator<Item = &str> {
        self.connection_types.keys().map(String::as_str)
    }
}

/// Counts signatures over a training corpus and orders each table by
/// frequency (descending), then signature.
pub fn build_vocab<'a, I>(corpus: I) -> Result<Vocabulary, HierGraphError>
where
    I: IntoIterator<Item = &'a HierGraph>,
{
    let mut rings: BTreeMap<&str, usize> = BTreeMap::new();
    let mut conns: BTreeMap<&str, usize> = BTreeMap::new();
    let mut graphs = 0usize;
    for h in corpus {
        graphs += 1;
        for r in &h.ring_graph.rings {
            *rings.entry(&r.signature).or_default() += 1;
        }
        for c in &h.ring_graph.connections {
            *conns.entry(&c.signature).or_default() += 1;
        }
    }
    if graphs == 0 {
        return Err(HierGraphError::EmptyCorpus);
    }
    let ranked = |counts: BTreeMap<&str, usize>| -> Vec<String> {
        let mut v: Vec<(&str, usize)> = counts.into_iter().collect();
        // BTreeMap order already breaks ties by signature; the sort is stable
        v.sort_by_key(|e| std::cmp::Reverse(e.1));
        v.into_iter().map(|(s, _)| s.to_string()).collect()
    };
    Ok(Vocabulary::from_lists(ranked(rings), ranked(conns)))
}

/// Vocabulary indices of the ring-level attributes of one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingEncoding {
    /// One index per real ring.
    pub ring_types: Vec<usize>,
    /// One index per real connection, followed by one per virtual edge
    /// (ring `i` to the virtual node) when the graph has a virtual node.
    pub edge_types: Vec<usize>,
    pub ring_dim: usize,
    pub edge_dim: usize,
}

impl RingEncoding {
    pub fn ring_one_hot(&self) -> Vec<f64> {
        one_hot(&self.ring_types, self.ring_dim)
    }

    pub fn edge_one_hot(&self) -> Vec<f64> {
        one_hot(&self.edge_types, self.edge_dim)
    }
}

/// Row-major one-hot matrix, one row per index.
pub fn one_hot(indices: &[usize], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; indices.len() * width];
    for (row, &i) in indices.iter().enumerate() {
        out[row * width + i] = 1.0;
    }
    out
}

pub fn encode_ring_attributes(h: &HierGraph, v: &Vocabulary) -> RingEncoding {
    let rg = &h.ring_graph;
    let ring_types = rg.rings.iter().map(|r| v.ring_index(&r.signature)).collect();
    let mut edge_types: Vec<usize> = rg.connections.iter().map(|c| v.connection_index(&c.signature)).collect();
    if rg.has_virtual {
        edge_types.extend(std::iter::repeat_n(Vocabulary::VIRTUAL, rg.num_rings()));
    }
    RingEncoding {
        ring_types,
        edge_types,
        ring_dim: v.ring_dim(),
        edge_dim: v.connection_dim(),
    }
}

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    v: u32,
    smiles: String,
    atoms: Vec<AtomRecord>,
    bonds: Vec<(usize, usize, String)>,
    rings: Vec<Vec<usize>>,
    ring_sigs: Vec<String>,
    conns: Vec<(usize, usize, String, String, Vec<usize>)>,
    inter: Vec<(usize, usize)>,
    #[serde(rename = "virtual")]
    has_virtual: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    stereo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomRecord {
    el: String,
    ar: u8,
    chg: i8,
    hs: u8,
    ih: u8,
    #[serde(default, skip_serializing_if = "is_zero")]
    br: u8,
}

fn is_zero(x: &u8) -> bool {
    *x == 0
}

/// One JSON line (without the trailing newline).
pub fn serialize(h: &HierGraph) -> String {
    let g = &h.atom_graph;
    let rg = &h.ring_graph;
    let record = Record {
        v: SCHEMA_VERSION,
        smiles: g.source_smiles.clone(),
        atoms: g
            .atoms
            .iter()
            .map(|a| AtomRecord {
                el: a.element.symbol().to_string(),
                ar: u8::from(a.aromatic),
                chg: a.formal_charge,
                hs: a.explicit_h,
                ih: a.implicit_h,
                br: u8::from(a.bracket),
            })
            .collect(),
        bonds: g
            .bonds
            .iter()
            .map(|b| (b.endpoints.0, b.endpoints.1, b.order.name().to_string()))
            .collect(),
        rings: rg.rings.iter().map(|r| r.atoms.clone()).collect(),
        ring_sigs: rg.rings.iter().map(|r| r.signature.clone()).collect(),
        conns: rg
            .connections
            .iter()
            .map(|c| (c.rings.0, c.rings.1, c.kind.name().to_string(), c.signature.clone(), c.atoms.clone()))
            .collect(),
        inter: h.inter_edges.clone(),
        has_virtual: rg.has_virtual,
        stereo: g.stereo_ignored,
        y: h.targets.clone(),
    };
    serde_json::to_string(&record).expect("record serialization is infallible")
}

/// Parses one record; errors report line 1.
pub fn deserialize(line: &str) -> Result<HierGraph, HierGraphError> {
    deserialize_line(line, 1)
}

/// Parses one record, tagging errors with `line_no`.
pub fn deserialize_line(line: &str, line_no: usize) -> Result<HierGraph, HierGraphError> {
    let err = |msg: String| HierGraphError::Schema { line: line_no, msg };
    let rec: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    record_to_graph(rec).map_err(err)
}

/// Reads every non-empty line of a JSONL stream.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<HierGraph>, HierGraphError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HierGraphError::Schema {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(deserialize_line(&line, i + 1)?);
    }
    Ok(out)
}

fn record_to_graph(rec: Record) -> Result<HierGraph, String> {
    if rec.v != SCHEMA_VERSION {
        return Err(format!("unsupported schema version {}", rec.v));
    }
    let atoms = rec
        .atoms
        .iter()
        .map(|a| {
            let element = Element::from_symbol(&a.el).ok_or_else(|| format!("unknown element {:?}", a.el))?;
            let mut atom = Atom::new(element, a.ar != 0);
            atom.formal_charge = a.chg;
            atom.explicit_h = a.hs;
            atom.implicit_h = a.ih;
            atom.bracket = a.br != 0;
            Ok(atom)
        })
        .collect::<Result<Vec<_>, String>>()?;
    let bonds = rec
        .bonds
        .iter()
        .map(|(i, j, order)| {
            let order = BondOrder::from_name(order).ok_or_else(|| format!("unknown bond order {order:?}"))?;
            Ok(Bond {
                endpoints: (*i, *j),
                order,
                in_ring: false,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let mut g = AtomGraph::from_parts(atoms, bonds, rec.smiles).map_err(|e| e.to_string())?;
    g.stereo_ignored = rec.stereo;

    if rec.ring_sigs.len() != rec.rings.len() {
        return Err(format!("{} rings but {} ring signatures", rec.rings.len(), rec.ring_sigs.len()));
    }
    let mut rings = Vec::with_capacity(rec.rings.len());
    for (atoms, signature) in rec.rings.into_iter().zip(rec.ring_sigs) {
        if atoms.len() < 3 {
            return Err(format!("ring {atoms:?} has fewer than 3 atoms"));
        }
        for k in 0..atoms.len() {
            let (u, v) = (atoms[k], atoms[(k + 1) % atoms.len()]);
            if u >= g.num_atoms() || v >= g.num_atoms() {
                return Err(format!("ring atom index out of range in {atoms:?}"));
            }
            let b = g.bond_between(u, v).ok_or_else(|| format!("ring {atoms:?} is not closed by bonds"))?;
            g.atoms[u].in_ring = true;
            g.bonds[b].in_ring = true;
        }
        rings.push(Ring { atoms, signature });
    }

    let mut connections = Vec::with_capacity(rec.conns.len());
    for (ri, rj, kind, signature, atoms) in rec.conns {
        if ri >= rj || rj >= rings.len() {
            return Err(format!("invalid connection ring pair ({ri}, {rj})"));
        }
        let kind = ConnectionKind::from_name(&kind).ok_or_else(|| format!("unknown connection kind {kind:?}"))?;
        if atoms.iter().any(|&a| a >= g.num_atoms()) {
            return Err(format!("connection atom index out of range in {atoms:?}"));
        }
        let chain_bonds = match kind {
            ConnectionKind::Shared => Vec::new(),
            ConnectionKind::Chain => atoms
                .windows(2)
                .map(|w| g.bond_between(w[0], w[1]).ok_or_else(|| format!("chain {atoms:?} is not bonded")))
                .collect::<Result<Vec<_>, String>>()?,
        };
        connections.push(RingConnection {
            rings: (ri, rj),
            kind,
            signature,
            atoms,
            chain_bonds,
        });
    }

    let expected = membership(&rings);
    if rec.inter != expected {
        return Err("inter edges do not match ring membership".to_string());
    }
    Ok(HierGraph {
        atom_graph: g,
        ring_graph: RingGraph {
            rings,
            connections,
            has_virtual: rec.has_virtual,
        },
        inter_edges: rec.inter,
        targets: rec.y,
    })
}
