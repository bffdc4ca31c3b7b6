use super::{AtomGraph, SUPPORTED};

const ELEMENT_SLOTS: usize = SUPPORTED.len() + 1;
const DEGREE_SLOTS: usize = 7;
const HYDROGEN_SLOTS: usize = 5;
const CHARGE_SLOTS: usize = 6;
const CHARGE_MIN: i8 = -2;

/// Atom row: element(17) | degree 0..6 (7) | hydrogens 0..4 (5) |
/// charge -2..+3 (6) | aromatic | in_ring.
pub const ATOM_FEATURE_DIM: usize = ELEMENT_SLOTS + DEGREE_SLOTS + HYDROGEN_SLOTS + CHARGE_SLOTS + 2;
/// Bond row: order one-hot (single, double, triple, aromatic) | in_ring.
pub const BOND_FEATURE_DIM: usize = 5;

/// Row-major feature matrices of one atom graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

impl Features {
    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node[i * ATOM_FEATURE_DIM..(i + 1) * ATOM_FEATURE_DIM]
    }

    pub fn edge_row(&self, i: usize) -> &[f64] {
        &self.edge[i * BOND_FEATURE_DIM..(i + 1) * BOND_FEATURE_DIM]
    }
}

/// One-hot atom and bond features. Ring flags must already be set.
///
/// The hydrogen slot counts all attached hydrogens (implicit plus those
/// written in brackets), so `[nH]` and an implicit NH look the same.
pub fn featurize_atom_graph(g: &AtomGraph) -> Features {
    let mut node = vec![0.0; g.num_atoms() * ATOM_FEATURE_DIM];
    for (i, atom) in g.atoms.iter().enumerate() {
        let row = &mut node[i * ATOM_FEATURE_DIM..(i + 1) * ATOM_FEATURE_DIM];
        let mut off = 0;
        row[off + atom.element.slot()] = 1.0;
        off += ELEMENT_SLOTS;
        row[off + atom.degree.min(DEGREE_SLOTS - 1)] = 1.0;
        off += DEGREE_SLOTS;
        row[off + usize::from(atom.total_h()).min(HYDROGEN_SLOTS - 1)] = 1.0;
        off += HYDROGEN_SLOTS;
        let charge = atom.formal_charge.clamp(CHARGE_MIN, CHARGE_MIN + CHARGE_SLOTS as i8 - 1);
        row[off + (charge - CHARGE_MIN) as usize] = 1.0;
        off += CHARGE_SLOTS;
        row[off] = f64::from(u8::from(atom.aromatic));
        row[off + 1] = f64::from(u8::from(atom.in_ring));
    }

    let mut edge = vec![0.0; g.num_bonds() * BOND_FEATURE_DIM];
    for (i, bond) in g.bonds.iter().enumerate() {
        let row = &mut edge[i * BOND_FEATURE_DIM..(i + 1) * BOND_FEATURE_DIM];
        row[bond.order.slot()] = 1.0;
        row[4] = f64::from(u8::from(bond.in_ring));
    }
    Features { node, edge }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn hot(row: &[f64]) -> Vec<usize> {
        row.iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn width() {
        assert_eq!(ATOM_FEATURE_DIM, 37);
    }

    #[test]
    fn benzene_atom() {
        let f = featurize_atom_graph(&parse_smiles("c1ccccc1").unwrap());
        // C slot 2; degree 2 -> 17+2; 1 H -> 24+1; charge 0 -> 29+2; aromatic 35; ring 36
        assert_eq!(hot(f.node_row(0)), vec![2, 19, 25, 31, 35, 36]);
    }

    #[test]
    fn benzene_bond() {
        let f = featurize_atom_graph(&parse_smiles("c1ccccc1").unwrap());
        assert_eq!(f.edge_row(0), &[0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn ethane_bond() {
        let f = featurize_atom_graph(&parse_smiles("CC").unwrap());
        assert_eq!(f.edge_row(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn charge_is_clamped() {
        let f = featurize_atom_graph(&parse_smiles("[Fe+4]").unwrap());
        let row = f.node_row(0);
        assert_eq!(row[16], 1.0);
        assert_eq!(row[29 + 5], 1.0);
    }
}
