use std::collections::BTreeMap;

use super::valence::compute_implicit_hydrogens;
use super::{Atom, AtomGraph, Bond, BondOrder, Element, SmilesError};

/// Parses one SMILES string into an atom graph.
///
/// Atom order equals token order. Ring-membership flags are set from the
/// cycle structure; implicit aromatic bonds that end up outside every ring
/// (e.g. the inter-ring bond of `c1ccccc1c1ccccc1`) are read as single.
pub fn parse_smiles(text: &str) -> Result<AtomGraph, SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::Empty);
    }
    if !text.is_ascii() {
        return Err(SmilesError::NonAscii);
    }
    let mut p = Parser::new(text.as_bytes());
    p.run()?;
    p.finish(text)
}

struct PendingBond {
    endpoints: (usize, usize),
    order: BondOrder,
    implicit: bool,
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<PendingBond>,
    /// Open ring closures: label -> (atom, bond symbol written at the opening).
    rings: BTreeMap<u16, (usize, Option<BondOrder>)>,
    branches: Vec<usize>,
    prev: Option<usize>,
    pending: Option<BondOrder>,
    stereo: bool,
}

impl<'a> Parser<'a> {
    fn new(input: &'a [u8]) -> Self {
        Parser {
            input,
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            rings: BTreeMap::new(),
            branches: Vec::new(),
            prev: None,
            pending: None,
            stereo: false,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn syntax(&self, msg: impl Into<String>) -> SmilesError {
        SmilesError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let prev = self.prev.ok_or_else(|| self.syntax("branch without a preceding atom"))?;
                    if self.pending.is_some() {
                        return Err(self.syntax("bond symbol before '('"));
                    }
                    self.branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(self.syntax("dangling bond before ')'"));
                    }
                    self.prev = Some(self.branches.pop().ok_or_else(|| self.syntax("unmatched ')'"))?);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() {
                        return Err(self.syntax("consecutive bond symbols"));
                    }
                    self.pending = Some(match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        b'/' | b'\\' => {
                            self.stereo = true;
                            BondOrder::Single
                        }
                        _ => BondOrder::Single,
                    });
                    self.pos += 1;
                }
                b'$' => return Err(self.syntax("quadruple bonds are not supported")),
                b'.' => return Err(SmilesError::DisconnectedInput),
                b'0'..=b'9' => {
                    let label = u16::from(c - b'0');
                    self.pos += 1;
                    self.ring_bond(label)?;
                }
                b'%' => {
                    let digits = self.input.get(self.pos + 1..self.pos + 3);
                    let label = match digits {
                        Some([a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            u16::from(a - b'0') * 10 + u16::from(b - b'0')
                        }
                        _ => return Err(self.syntax("'%' must be followed by two digits")),
                    };
                    self.pos += 3;
                    self.ring_bond(label)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom)?;
                }
            }
        }
        if !self.branches.is_empty() {
            return Err(SmilesError::UnclosedBranch);
        }
        if let Some((&label, _)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing(label));
        }
        if self.pending.is_some() {
            return Err(self.syntax("dangling bond at end of input"));
        }
        if self.atoms.is_empty() {
            return Err(self.syntax("no atoms"));
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let written = self.pending.take();
            self.push_bond(prev, idx, written)?;
        } else if self.pending.is_some() {
            return Err(self.syntax("bond symbol without a preceding atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn push_bond(&mut self, u: usize, v: usize, written: Option<BondOrder>) -> Result<(), SmilesError> {
        if u == v {
            return Err(self.syntax("ring closure onto the same atom"));
        }
        if self
            .bonds
            .iter()
            .any(|b| b.endpoints == (u, v) || b.endpoints == (v, u))
        {
            return Err(self.syntax(format!("duplicate bond between atoms {u} and {v}")));
        }
        let both_aromatic = self.atoms[u].aromatic && self.atoms[v].aromatic;
        let (order, implicit) = match written {
            Some(o) => (o, false),
            None if both_aromatic => (BondOrder::Aromatic, true),
            None => (BondOrder::Single, true),
        };
        if order == BondOrder::Aromatic && !both_aromatic {
            return Err(self.syntax("aromatic bond between non-aromatic atoms"));
        }
        self.bonds.push(PendingBond {
            endpoints: (u, v),
            order,
            implicit,
        });
        Ok(())
    }

    fn ring_bond(&mut self, label: u16) -> Result<(), SmilesError> {
        let here = self.prev.ok_or_else(|| self.syntax("ring closure without a preceding atom"))?;
        let written = self.pending.take();
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, (here, written));
            }
            Some((open, open_written)) => {
                let order = match (open_written, written) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(self.syntax(format!("conflicting bond orders on ring closure {label}")))
                    }
                    (Some(a), _) => Some(a),
                    (None, b) => b,
                };
                self.push_bond(open, here, order)?;
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.input[self.pos];
        let two = self.input.get(self.pos..self.pos + 2);
        let (element, aromatic, len) = match (c, two) {
            (b'C', Some(b"Cl")) => (Element::Cl, false, 2),
            (b'B', Some(b"Br")) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => {
                let end = (start + 1..=self.input.len())
                    .find(|&i| i == self.input.len() || !self.input[i].is_ascii_lowercase())
                    .unwrap_or(start + 1);
                return Err(SmilesError::UnknownElement {
                    symbol: String::from_utf8_lossy(&self.input[start..end]).into_owned(),
                    pos: start,
                });
            }
        };
        self.pos += len;
        Ok(Atom::new(element, aromatic))
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let close = self.input[open..]
            .iter()
            .position(|&c| c == b']')
            .map(|i| open + i)
            .ok_or_else(|| self.syntax("unterminated bracket atom"))?;
        let body = &self.input[open + 1..close];
        let mut i = 0;

        // isotope (ignored)
        while i < body.len() && body[i].is_ascii_digit() {
            i += 1;
        }

        let sym_start = i;
        let (element, aromatic) = {
            let rest = &body[i..];
            let aromatic_two: [(&[u8], Element); 3] = [(b"se", Element::Se), (b"te", Element::Te), (b"as", Element::Other("As"))];
            if let Some((tok, el)) = aromatic_two.iter().find(|(t, _)| rest.starts_with(t)) {
                i += tok.len();
                (*el, true)
            } else if let Some(&c) = rest.first() {
                if c.is_ascii_lowercase() {
                    let el = match c {
                        b'b' => Element::B,
                        b'c' => Element::C,
                        b'n' => Element::N,
                        b'o' => Element::O,
                        b'p' => Element::P,
                        b's' => Element::S,
                        _ => {
                            return Err(SmilesError::UnknownElement {
                                symbol: (c as char).to_string(),
                                pos: open + 1 + i,
                            })
                        }
                    };
                    i += 1;
                    (el, true)
                } else if c.is_ascii_uppercase() {
                    // prefer the two-letter symbol when it is a real element
                    let two = rest
                        .get(..2)
                        .filter(|t| t[1].is_ascii_lowercase())
                        .and_then(|t| Element::from_symbol(std::str::from_utf8(t).ok()?));
                    if let Some(el) = two {
                        i += 2;
                        (el, false)
                    } else if let Some(el) = Element::from_symbol(std::str::from_utf8(&rest[..1]).unwrap_or("")) {
                        i += 1;
                        (el, false)
                    } else {
                        let end = rest
                            .iter()
                            .skip(1)
                            .position(|c| !c.is_ascii_lowercase())
                            .map_or(rest.len(), |p| p + 1);
                        return Err(SmilesError::UnknownElement {
                            symbol: String::from_utf8_lossy(&rest[..end]).into_owned(),
                            pos: open + 1 + sym_start,
                        });
                    }
                } else {
                    return Err(SmilesError::Syntax {
                        pos: open + 1 + i,
                        msg: "expected element symbol in bracket atom".into(),
                    });
                }
            } else {
                return Err(SmilesError::Syntax {
                    pos: open,
                    msg: "empty bracket atom".into(),
                });
            }
        };

        // chirality (ignored)
        if body.get(i) == Some(&b'@') {
            self.stereo = true;
            while i < body.len() && (body[i] == b'@' || body[i].is_ascii_uppercase() && body[i] != b'H') {
                i += 1;
            }
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
        }

        let mut explicit_h = 0u8;
        if body.get(i) == Some(&b'H') {
            i += 1;
            explicit_h = 1;
            if let Some(d) = body.get(i).filter(|c| c.is_ascii_digit()) {
                explicit_h = d - b'0';
                i += 1;
            }
        }

        let mut charge: i32 = 0;
        if let Some(&sign) = body.get(i).filter(|c| **c == b'+' || **c == b'-') {
            let unit = if sign == b'+' { 1 } else { -1 };
            i += 1;
            let mut magnitude = 1;
            if body.get(i).is_some_and(|c| c.is_ascii_digit()) {
                let mut m = 0;
                while let Some(d) = body.get(i).filter(|c| c.is_ascii_digit()) {
                    m = m * 10 + i32::from(d - b'0');
                    i += 1;
                }
                magnitude = m;
            } else {
                while body.get(i) == Some(&sign) {
                    magnitude += 1;
                    i += 1;
                }
            }
            charge = unit * magnitude;
        }
        if !(-4..=4).contains(&charge) {
            return Err(SmilesError::Syntax {
                pos: open,
                msg: format!("formal charge {charge} outside [-4, 4]"),
            });
        }

        // atom class (ignored)
        if body.get(i) == Some(&b':') {
            i += 1;
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
        }

        if i != body.len() {
            return Err(SmilesError::Syntax {
                pos: open + 1 + i,
                msg: "unexpected characters in bracket atom".into(),
            });
        }
        self.pos = close + 1;
        let mut atom = Atom::new(element, aromatic);
        atom.bracket = true;
        atom.explicit_h = explicit_h;
        atom.formal_charge = charge as i8;
        Ok(atom)
    }

    fn finish(self, text: &str) -> Result<AtomGraph, SmilesError> {
        let implicit: Vec<bool> = self.bonds.iter().map(|b| b.implicit).collect();
        let bonds = self
            .bonds
            .into_iter()
            .map(|b| Bond {
                endpoints: b.endpoints,
                order: b.order,
                in_ring: false,
            })
            .collect();
        let mut g = AtomGraph::from_parts(self.atoms, bonds, text)?;
        g.stereo_ignored = self.stereo;
        g.mark_cycle_members();

        for (bond, implicit) in g.bonds.iter_mut().zip(implicit) {
            if implicit && bond.order == BondOrder::Aromatic && !bond.in_ring {
                bond.order = BondOrder::Single;
            }
        }
        if let Some(i) = g.atoms.iter().position(|a| a.aromatic && !a.in_ring) {
            return Err(SmilesError::AromaticOutsideRing(i));
        }
        if let Some(b) = g.bonds.iter().find(|b| b.order == BondOrder::Aromatic && !b.in_ring) {
            return Err(SmilesError::Syntax {
                pos: 0,
                msg: format!("aromatic bond {:?} outside any ring", b.endpoints),
            });
        }

        for i in 0..g.atoms.len() {
            let orders: Vec<BondOrder> = g.adjacency[i].iter().map(|&b| g.bonds[b].order).collect();
            let h = compute_implicit_hydrogens(&g.atoms[i], &orders).map_err(|_| SmilesError::ValenceError {
                atom: i,
                element: g.atoms[i].element.symbol().to_string(),
            })?;
            g.atoms[i].implicit_h = h;
        }
        Ok(g)
    }
}
