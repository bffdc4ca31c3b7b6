//! Smallest-ring perception and the ring-level graph.
//!
//! A smallest ring is an induced (chordless) simple cycle: no proper subset
//! of its atoms closes a shorter cycle. Two rings are connected when they
//! share atoms, or when a single chain of non-aromatic bonds whose interior
//! atoms belong to no ring joins them.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::smiles::{AtomGraph, BondOrder};

pub const DEFAULT_MAX_RING_SIZE: usize = 24;
pub const DEFAULT_MAX_RINGS: usize = 256;
pub const DEFAULT_CHAIN_MAX: usize = 8;

/// Connection signature reserved for virtual edges.
pub const VIRTUAL_SIGNATURE: &str = "V";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("found more than {limit} rings")]
    RingLimitExceeded { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RingLimits {
    pub max_ring_size: usize,
    pub max_rings: usize,
    /// Longest chain (in bonds) that still links two rings.
    pub chain_max: usize,
}

impl Default for RingLimits {
    fn default() -> Self {
        RingLimits {
            max_ring_size: DEFAULT_MAX_RING_SIZE,
            max_rings: DEFAULT_MAX_RINGS,
            chain_max: DEFAULT_CHAIN_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    /// Atoms in cycle order, starting at the smallest index and heading
    /// towards its smaller ring neighbour.
    pub atoms: Vec<usize>,
    pub signature: String,
}

impl Ring {
    pub fn size(&self) -> usize {
        self.atoms.len()
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.atoms.contains(&atom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectionKind {
    Shared,
    Chain,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Shared => "shared",
            ConnectionKind::Chain => "chain",
        }
    }

    pub fn from_name(s: &str) -> Option<ConnectionKind> {
        match s {
            "shared" => Some(ConnectionKind::Shared),
            "chain" => Some(ConnectionKind::Chain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingConnection {
    /// Ring indices, `rings.0 < rings.1`.
    pub rings: (usize, usize),
    pub kind: ConnectionKind,
    pub signature: String,
    /// Shared atoms (sorted) for `Shared`; the full chain path from a
    /// member of `rings.0` to a member of `rings.1` for `Chain`.
    pub atoms: Vec<usize>,
    /// Chain bonds in path order; empty for `Shared`.
    pub chain_bonds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RingGraph {
    pub rings: Vec<Ring>,
    pub connections: Vec<RingConnection>,
    /// When set, node `rings.len()` is a virtual node joined to every ring.
    pub has_virtual: bool,
}

impl RingGraph {
    pub fn num_rings(&self) -> usize {
        self.rings.len()
    }

    /// Ring-level node count including the virtual node.
    pub fn num_nodes(&self) -> usize {
        self.rings.len() + usize::from(self.has_virtual)
    }

    pub fn virtual_index(&self) -> Option<usize> {
        self.has_virtual.then_some(self.rings.len())
    }

    /// Degree over real connections only.
    pub fn real_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.rings.len()];
        for c in &self.connections {
            deg[c.rings.0] += 1;
            deg[c.rings.1] += 1;
        }
        deg
    }
}

/// Finds all chordless cycles up to the default size bound.
pub fn find_smallest_rings(g: &mut AtomGraph) -> Result<Vec<Ring>, RingError> {
    find_smallest_rings_with(g, &RingLimits::default())
}

/// Finds all chordless cycles of length `<= limits.max_ring_size`, sets ring
/// flags on `g` from the result, and returns the rings sorted by their
/// canonical atom sequence.
pub fn find_smallest_rings_with(g: &mut AtomGraph, limits: &RingLimits) -> Result<Vec<Ring>, RingError> {
    g.mark_cycle_members();
    let cyclic: Vec<bool> = g.atoms.iter().map(|a| a.in_ring).collect();
    let neighbors: Vec<Vec<usize>> = (0..g.num_atoms())
        .map(|i| {
            let mut n: Vec<usize> = g
                .neighbors(i)
                .filter(|&(_, b)| g.bonds[b].in_ring)
                .map(|(j, _)| j)
                .collect();
            n.sort_unstable();
            n
        })
        .collect();
    let cycles = chordless_cycles(&neighbors, &cyclic, limits)?;

    for a in &mut g.atoms {
        a.in_ring = false;
    }
    for b in &mut g.bonds {
        b.in_ring = false;
    }
    let mut rings: Vec<Ring> = cycles
        .into_iter()
        .map(|cycle| {
            for (k, &a) in cycle.iter().enumerate() {
                g.atoms[a].in_ring = true;
                let next = cycle[(k + 1) % cycle.len()];
                if let Some(b) = g.bond_between(a, next) {
                    g.bonds[b].in_ring = true;
                }
            }
            let signature = ring_signature(&cycle, g);
            Ring {
                atoms: cycle,
                signature,
            }
        })
        .collect();
    rings.sort_by(|a, b| a.atoms.cmp(&b.atoms));
    Ok(rings)
}

/// Enumerates induced cycles by growing induced paths from each start
/// vertex `s`, visiting only vertices greater than `s`.
fn chordless_cycles(
    neighbors: &[Vec<usize>],
    active: &[bool],
    limits: &RingLimits,
) -> Result<Vec<Vec<usize>>, RingError> {
    let n = neighbors.len();
    let adjacent = |u: usize, v: usize| neighbors[u].binary_search(&v).is_ok();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    let mut on_path = vec![false; n];

    for s in 0..n {
        if !active[s] {
            continue;
        }
        for &v1 in neighbors[s].iter().filter(|&&v| v > s) {
            let mut path = vec![s, v1];
            on_path[s] = true;
            on_path[v1] = true;
            // explicit stack of neighbour cursors
            let mut cursors = vec![0usize];
            while let Some(cursor) = cursors.last_mut() {
                let last = *path.last().unwrap();
                let nbrs = &neighbors[last];
                if *cursor >= nbrs.len() {
                    cursors.pop();
                    if path.len() > 2 {
                        let v = path.pop().unwrap();
                        on_path[v] = false;
                    }
                    continue;
                }
                let w = nbrs[*cursor];
                *cursor += 1;
                if w <= s || on_path[w] {
                    continue;
                }
                let interior = &path[1..path.len() - 1];
                if interior.iter().any(|&u| adjacent(u, w)) {
                    continue;
                }
                if adjacent(w, s) {
                    // closing vertex; extending past w would leave a chord w-s
                    if path[1] < w && path.len() < limits.max_ring_size {
                        let mut cycle = path.clone();
                        cycle.push(w);
                        let mut key = cycle.clone();
                        key.sort_unstable();
                        if seen.insert(key) {
                            out.push(canonical_cycle(cycle));
                            if out.len() > limits.max_rings {
                                return Err(RingError::RingLimitExceeded {
                                    limit: limits.max_rings,
                                });
                            }
                        }
                    }
                    continue;
                }
                if path.len() + 1 < limits.max_ring_size {
                    path.push(w);
                    on_path[w] = true;
                    cursors.push(0);
                }
            }
            on_path[s] = false;
            on_path[v1] = false;
        }
    }
    Ok(out)
}

/// Rotates a cycle to start at its smallest vertex, heading towards the
/// smaller of that vertex's two cycle neighbours.
fn canonical_cycle(mut cycle: Vec<usize>) -> Vec<usize> {
    let n = cycle.len();
    let start = (0..n).min_by_key(|&i| cycle[i]).unwrap();
    cycle.rotate_left(start);
    if cycle[n - 1] < cycle[1] {
        cycle[1..].reverse();
    }
    cycle
}

/// Canonical ring type: `size:` followed by the lexicographically smallest
/// `.`-joined token string over all rotations and both directions.
pub fn ring_signature(atoms: &[usize], g: &AtomGraph) -> String {
    let tokens: Vec<String> = atoms.iter().map(|&a| g.atoms[a].token()).collect();
    format!("{}:{}", atoms.len(), min_cyclic_join(&tokens))
}

fn min_cyclic_join(tokens: &[String]) -> String {
    let n = tokens.len();
    let mut best: Option<String> = None;
    for dir in [false, true] {
        for start in 0..n {
            let s = (0..n)
                .map(|k| {
                    let i = if dir { (start + n - k) % n } else { (start + k) % n };
                    tokens[i].as_str()
                })
                .collect::<Vec<_>>()
                .join(".");
            if best.as_ref().is_none_or(|b| s < *b) {
                best = Some(s);
            }
        }
    }
    best.unwrap_or_default()
}

/// A non-aromatic path between two ring atoms through non-ring atoms.
#[derive(Debug, Clone)]
struct Chain {
    atoms: Vec<usize>,
    bonds: Vec<usize>,
}

impl Chain {
    fn read(&self, g: &AtomGraph, reversed: bool) -> String {
        let mut s = String::new();
        let n = self.bonds.len();
        for k in 0..n {
            let (b, interior) = if reversed {
                (self.bonds[n - 1 - k], self.atoms[n - 1 - k])
            } else {
                (self.bonds[k], self.atoms[k + 1])
            };
            s.push_str(g.bonds[b].order.symbol());
            if k + 1 < n {
                s.push_str(g.atoms[interior].element.symbol());
            }
        }
        s
    }

    fn canonical(&self, g: &AtomGraph) -> String {
        let fwd = self.read(g, false);
        let rev = self.read(g, true);
        fwd.min(rev)
    }
}

fn ring_chains(g: &AtomGraph, chain_max: usize) -> Vec<Chain> {
    let mut chains = Vec::new();
    for start in 0..g.num_atoms() {
        if !g.atoms[start].in_ring {
            continue;
        }
        let mut atoms = vec![start];
        let mut bonds: Vec<usize> = Vec::new();
        extend_chain(g, chain_max, &mut atoms, &mut bonds, &mut chains);
    }
    chains
}

fn extend_chain(g: &AtomGraph, chain_max: usize, atoms: &mut Vec<usize>, bonds: &mut Vec<usize>, out: &mut Vec<Chain>) {
    let last = *atoms.last().unwrap();
    for (next, b) in g.neighbors(last) {
        let bond = &g.bonds[b];
        if bond.order == BondOrder::Aromatic || bond.in_ring || atoms.contains(&next) {
            continue;
        }
        atoms.push(next);
        bonds.push(b);
        if g.atoms[next].in_ring {
            out.push(Chain {
                atoms: atoms.clone(),
                bonds: bonds.clone(),
            });
        } else if bonds.len() < chain_max {
            extend_chain(g, chain_max, atoms, bonds, out);
        }
        atoms.pop();
        bonds.pop();
    }
}

/// Typed edges between ring pairs. Shared atoms take precedence over
/// chains; among several chains the shortest wins, ties broken by the
/// smaller canonical chain string.
pub fn find_ring_connections(g: &AtomGraph, rings: &[Ring], chain_max: usize) -> Vec<RingConnection> {
    let sets: Vec<BTreeSet<usize>> = rings.iter().map(|r| r.atoms.iter().copied().collect()).collect();
    let chains = ring_chains(g, chain_max);
    let mut out = Vec::new();
    for i in 0..rings.len() {
        for j in i + 1..rings.len() {
            let shared: Vec<usize> = sets[i].intersection(&sets[j]).copied().collect();
            if !shared.is_empty() {
                let mut symbols: Vec<&str> = shared.iter().map(|&a| g.atoms[a].element.symbol()).collect();
                symbols.sort_unstable();
                out.push(RingConnection {
                    rings: (i, j),
                    kind: ConnectionKind::Shared,
                    signature: format!("S:{}:{}", shared.len(), symbols.join(",")),
                    atoms: shared,
                    chain_bonds: Vec::new(),
                });
                continue;
            }
            let best = chains
                .iter()
                .filter(|c| sets[i].contains(&c.atoms[0]) && sets[j].contains(c.atoms.last().unwrap()))
                .map(|c| (c.bonds.len(), c.canonical(g), c))
                .min_by(|a, b| (a.0, &a.1, &a.2.atoms).cmp(&(b.0, &b.1, &b.2.atoms)));
            if let Some((_, sig, chain)) = best {
                out.push(RingConnection {
                    rings: (i, j),
                    kind: ConnectionKind::Chain,
                    signature: format!("C:{sig}"),
                    atoms: chain.atoms.clone(),
                    chain_bonds: chain.bonds.clone(),
                });
            }
        }
    }
    out
}

pub fn build_ring_graph(g: &mut AtomGraph, add_virtual: bool) -> Result<RingGraph, RingError> {
    build_ring_graph_with(g, add_virtual, &RingLimits::default())
}

pub fn build_ring_graph_with(g: &mut AtomGraph, add_virtual: bool, limits: &RingLimits) -> Result<RingGraph, RingError> {
    let rings = find_smallest_rings_with(g, limits)?;
    let connections = find_ring_connections(g, &rings, limits.chain_max);
    Ok(RingGraph {
        rings,
        connections,
        has_virtual: add_virtual,
    })
}
