//! Atom-level molecular graphs from SMILES.
//!
//! The accepted grammar is the practical subset used by organic
//! semiconductor datasets: organic-subset and bracket atoms, bond symbols
//! `- = # :`, branches, ring closures (including `%NN`) and lowercase
//! aromatic atoms. Stereo marks are accepted and dropped; `.` is rejected
//! because every record must be a single molecule.

mod element;
mod features;
mod parser;
mod valence;

pub use element::{Element, SUPPORTED};
pub use features::{featurize_atom_graph, Features, ATOM_FEATURE_DIM, BOND_FEATURE_DIM};
pub use parser::parse_smiles;
pub use valence::compute_implicit_hydrogens;

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("SMILES must be ASCII")]
    NonAscii,
    #[error("ring closure {0} is never closed")]
    UnclosedRing(u16),
    #[error("unclosed branch")]
    UnclosedBranch,
    #[error("unknown element `{symbol}` at position {pos}")]
    UnknownElement { symbol: String, pos: usize },
    #[error("valence exceeded on atom {atom} ({element})")]
    ValenceError { atom: usize, element: String },
    #[error("disconnected input ('.') is not supported")]
    DisconnectedInput,
    #[error("aromatic atom {0} is not in a ring")]
    AromaticOutsideRing(usize),
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Feature slot of the bond-order one-hot.
    pub fn slot(self) -> usize {
        match self {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        }
    }

    /// SMILES bond symbol (`:` for aromatic).
    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "-",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => ":",
        }
    }

    /// Name used in the graph JSONL records.
    pub fn name(self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }

    pub fn from_name(name: &str) -> Option<BondOrder> {
        match name {
            "single" => Some(BondOrder::Single),
            "double" => Some(BondOrder::Double),
            "triple" => Some(BondOrder::Triple),
            "aromatic" => Some(BondOrder::Aromatic),
            _ => None,
        }
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    pub explicit_h: u8,
    pub implicit_h: u8,
    /// Number of heavy-atom neighbours.
    pub degree: usize,
    pub in_ring: bool,
    /// Written in brackets; bracket atoms never carry implicit hydrogens.
    pub bracket: bool,
}

impl Atom {
    pub fn new(element: Element, aromatic: bool) -> Atom {
        Atom {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: 0,
            implicit_h: 0,
            degree: 0,
            in_ring: false,
            bracket: false,
        }
    }

    pub fn total_h(&self) -> u8 {
        self.explicit_h + self.implicit_h
    }

    /// Element symbol with the aromatic marker (lowercase when aromatic).
    pub fn token(&self) -> String {
        let s = self.element.symbol();
        if self.aromatic {
            s.to_ascii_lowercase()
        } else {
            s.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub endpoints: (usize, usize),
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    /// The endpoint opposite `atom`.
    pub fn other(&self, atom: usize) -> usize {
        if self.endpoints.0 == atom {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// Undirected simple graph of heavy atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Incident bond indices per atom, in bond order.
    pub adjacency: Vec<Vec<usize>>,
    pub source_smiles: String,
    /// Set when stereo marks were present and dropped.
    pub stereo_ignored: bool,
}

impl AtomGraph {
    /// Assembles a graph, rebuilding adjacency and degrees from `bonds`.
    pub fn from_parts(
        mut atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_smiles: impl Into<String>,
    ) -> Result<AtomGraph, SmilesError> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        let mut seen = std::collections::HashSet::new();
        for (i, b) in bonds.iter().enumerate() {
            let (u, v) = b.endpoints;
            if u == v || u >= atoms.len() || v >= atoms.len() {
                return Err(SmilesError::Syntax {
                    pos: i,
                    msg: format!("invalid bond endpoints ({u}, {v})"),
                });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(SmilesError::Syntax {
                    pos: i,
                    msg: format!("duplicate bond ({u}, {v})"),
                });
            }
            adjacency[u].push(i);
            adjacency[v].push(i);
        }
        for (atom, adj) in atoms.iter_mut().zip(&adjacency) {
            atom.degree = adj.len();
        }
        Ok(AtomGraph {
            atoms,
            bonds,
            adjacency,
            source_smiles: source_smiles.into(),
            stereo_ignored: false,
        })
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbour, bond index)` pairs of `atom`.
    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency[atom]
            .iter()
            .map(move |&b| (self.bonds[b].other(atom), b))
    }

    pub fn bond_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adjacency[u]
            .iter()
            .copied()
            .find(|&b| self.bonds[b].other(u) == v)
    }

    /// Marks every bond lying on some cycle (i.e. every non-bridge) and its
    /// endpoints as ring members; clears all other flags.
    pub fn mark_cycle_members(&mut self) {
        let bridges = self.bridges();
        for a in &mut self.atoms {
            a.in_ring = false;
        }
        for (i, b) in self.bonds.iter_mut().enumerate() {
            b.in_ring = !bridges[i];
            if b.in_ring {
                self.atoms[b.endpoints.0].in_ring = true;
                self.atoms[b.endpoints.1].in_ring = true;
            }
        }
    }

    /// Bridge flags per bond (iterative low-link DFS).
    fn bridges(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, bond used to enter, next adjacency cursor)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, parent_bond, ref mut cursor)) = stack.last_mut() {
                if *cursor < self.adjacency[v].len() {
                    let b = self.adjacency[v][*cursor];
                    *cursor += 1;
                    if b == parent_bond {
                        continue;
                    }
                    let w = self.bonds[b].other(v);
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, b, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }
}
