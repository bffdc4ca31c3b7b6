#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringkit_core::smiles::{Atom, AtomGraph, Bond, BondOrder, Element};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn surrogate_csv() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/osc_surrogate_350.csv")
}

/// Curated ring-system fixture: fused, chained, spiro and bridged systems.
pub const RING_FIXTURE: [&str; 50] = [
    "c1ccccc1",
    "c1ccc2ccccc2c1",
    "c1ccc(-c2ccccc2)cc1",
    "c1ccsc1",
    "c1csc(c1)-c1cccs1",
    "c1csc(c1)-c1ccc(s1)-c1cccs1",
    "c1csc(c1)-c1ccc(s1)-c1ccc(s1)-c1cccs1",
    "c1csc(c1)-c1ccc(s1)-c1ccc(s1)-c1ccc(s1)-c1cccs1",
    "CCCCCCc1cc(sc1-c1sc(cc1CCCCCC)-c1cccs1)-c1cccs1",
    "c1cc2sccc2s1",
    "c1ccc2cc3ccccc3cc2c1",
    "c1ccc2cc3cc4ccccc4cc3cc2c1",
    "c1ccc2cc3cc4cc5cc6ccccc6cc5cc4cc3cc2c1",
    "c1ccc2c(c1)ccc1ccccc12",
    "c1cc2ccc3cccc4ccc(c1)c2c34",
    "c1ccc2c(c1)c1ccccc1c1ccccc21",
    "c1ccc2c(c1)Cc1ccccc1-2",
    "c1ccc2c(c1)[nH]c1ccccc12",
    "c1ccc2c(c1)sc1ccccc12",
    "C1CCC2(CC1)CCCC2",
    "C1CC11CC1",
    "C1CC2(C1)CC2",
    "c1ccc2c(c1)-c1ccccc1C21c2ccccc2-c2ccccc21",
    "C1CC2CCC1C2",
    "C1CC2CCC1CC2",
    "C1C2CC3CC1CC(C2)C3",
    "C12C3C4C1C5C2C3C45",
    "C1CC2CC1C1CCCC21",
    "C1CCCCC1",
    "C1CC1",
    "C1CCC1",
    "C1CCCCCCCCCCC1",
    "O=C1C2=C(c3cccs3)N(C)C(=O)C2=C(c2cccs2)N1C",
    "c1ccc2nsnc2c1",
    "Cc1cc2c(s1)-c1sc(C)cc1[Si]2(C)C",
    "c1cc2cc3cc(sc3cc2s1)",
    "C(c1ccccc1)(c1ccccc1)c1ccccc1",
    "c1ccc(cc1)C=Cc1ccccc1",
    "c1ccc(cc1)C#Cc1ccccc1",
    "c1ccc(cc1)CCCCCCCCc1ccccc1",
    "c1ccc(cc1)Oc1ccc(cc1)Oc1ccccc1",
    "c1cc[se]c1-c1ccc[se]1",
    "C1=CC2=CC=C1C=C2",
    "c1ccc2c(c1)c1cccc3cccc2c13",
    "C1CC2C3CCC4CCCCC4C3CCC2C1",
    "c1cnc2c(c1)ccc1cccnc12",
    "N#Cc1ccc(cc1)-c1ccc(cc1)C#N",
    "c1ccc2c(c1)oc1ccccc12",
    "C1CCC(CC1)C1CCCCC1",
    "CCCC",
];

/// Induced cycles by subset enumeration: a vertex set is an induced cycle
/// iff its induced subgraph is connected and 2-regular. Only for n <= ~16.
pub fn induced_cycles_by_subsets(n: usize, edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    assert!(n <= 16);
    let mut adj = vec![0u32; n];
    for &(u, v) in edges {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    let mut out = BTreeSet::new();
    for mask in 1u32..(1u32 << n) {
        if mask.count_ones() < 3 {
            continue;
        }
        let regular = (0..n)
            .filter(|&v| mask & (1 << v) != 0)
            .all(|v| (adj[v] & mask).count_ones() == 2);
        if !regular {
            continue;
        }
        // connected?
        let start = mask.trailing_zeros() as usize;
        let mut seen = 1u32 << start;
        let mut frontier = seen;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = adj[v] & mask & !seen;
            seen |= new;
            frontier |= new;
        }
        if seen == mask {
            out.insert((0..n).filter(|&v| mask & (1 << v) != 0).collect());
        }
    }
    out
}

/// All simple cycles up to `max_len` by naive DFS, kept when chordless.
pub fn induced_cycles_by_simple_cycles(n: usize, edges: &[(usize, usize)], max_len: usize) -> BTreeSet<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut cycles: BTreeSet<Vec<usize>> = BTreeSet::new();
    fn dfs(
        s: usize,
        v: usize,
        adj: &[Vec<usize>],
        path: &mut Vec<usize>,
        max_len: usize,
        out: &mut BTreeSet<Vec<usize>>,
    ) {
        for &w in &adj[v] {
            if w == s && path.len() >= 3 {
                let mut set = path.clone();
                set.sort_unstable();
                out.insert(set);
            } else if w > s && !path.contains(&w) && path.len() < max_len {
                path.push(w);
                dfs(s, w, adj, path, max_len, out);
                path.pop();
            }
        }
    }
    for s in 0..n {
        let mut path = vec![s];
        dfs(s, s, &adj, &mut path, max_len, &mut cycles);
    }
    cycles
        .into_iter()
        .filter(|set| {
            let inside = edges
                .iter()
                .filter(|(u, v)| set.binary_search(u).is_ok() && set.binary_search(v).is_ok())
                .count();
            inside == set.len()
        })
        .collect()
}

pub fn edges_of(g: &AtomGraph) -> Vec<(usize, usize)> {
    g.bonds.iter().map(|b| b.endpoints).collect()
}

/// Random simple graph as an all-carbon atom graph.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> AtomGraph {
    let mut bonds = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                bonds.push(Bond {
                    endpoints: (u, v),
                    order: BondOrder::Single,
                    in_ring: false,
                });
            }
        }
    }
    let atoms = vec![Atom::new(Element::C, false); n];
    AtomGraph::from_parts(atoms, bonds, "").unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
