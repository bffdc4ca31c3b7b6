use super::{Atom, BondOrder, SmilesError};

/// Implicit hydrogen count of an atom given its incident bond orders.
///
/// Aromatic bonds count 1.5 each and the sum is rounded down, then the
/// smallest allowed valence that fits is used. Bracket atoms carry exactly
/// their written hydrogens, so the implicit count is always zero for them.
///
/// Aromatic atoms that overflow their lowest valence under the 1.5 rule are
/// lone-pair donors (thiophene S, furan O, N-substituted pyrrole N); for
/// those the aromatic bonds count 1 each.
pub fn compute_implicit_hydrogens(atom: &Atom, incident: &[BondOrder]) -> Result<u8, SmilesError> {
    if atom.bracket {
        return Ok(0);
    }
    let valences = atom.element.default_valences();
    let invalid = || SmilesError::ValenceError {
        atom: 0,
        element: atom.element.symbol().to_string(),
    };
    if valences.is_empty() {
        return Err(invalid());
    }
    let n_aromatic = incident.iter().filter(|o| **o == BondOrder::Aromatic).count() as u32;
    let others: u32 = incident
        .iter()
        .map(|o| match o {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 0,
        })
        .sum();
    let used = (3 * n_aromatic) / 2 + others + u32::from(atom.explicit_h);
    let fit = |sum: u32| {
        valences
            .iter()
            .map(|&v| u32::from(v))
            .find(|&v| sum <= v)
            .map(|v| (v - sum) as u8)
    };

    if atom.aromatic && n_aromatic > 0 {
        let lowest = u32::from(valences[0]);
        if used <= lowest {
            return Ok((lowest - used) as u8);
        }
        let donor = n_aromatic + others + u32::from(atom.explicit_h);
        return fit(donor).or_else(|| fit(used)).ok_or_else(invalid);
    }
    fit(used).ok_or_else(invalid)
}
