use std::fmt;

/// Chemical element of an atom.
///
/// The sixteen elements common in organic semiconductors get their own
/// variant and feature slot; any other real element is carried as `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Se,
    Ge,
    Br,
    Sn,
    Te,
    I,
    Other(&'static str),
}

/// Elements with a dedicated feature slot, in slot order.
pub const SUPPORTED: [Element; 16] = [
    Element::H,
    Element::B,
    Element::C,
    Element::N,
    Element::O,
    Element::F,
    Element::Si,
    Element::P,
    Element::S,
    Element::Cl,
    Element::Se,
    Element::Ge,
    Element::Br,
    Element::Sn,
    Element::Te,
    Element::I,
];

const PERIODIC_TABLE: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

impl Element {
    /// Looks up a properly capitalised element symbol.
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        let supported = SUPPORTED.iter().find(|e| e.symbol() == symbol);
        if let Some(e) = supported {
            return Some(*e);
        }
        PERIODIC_TABLE
            .iter()
            .find(|s| **s == symbol)
            .map(|s| Element::Other(s))
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Se => "Se",
            Element::Ge => "Ge",
            Element::Br => "Br",
            Element::Sn => "Sn",
            Element::Te => "Te",
            Element::I => "I",
            Element::Other(s) => s,
        }
    }

    /// Feature slot: 0..16 for supported elements, 16 for everything else.
    pub fn slot(&self) -> usize {
        SUPPORTED
            .iter()
            .position(|e| e == self)
            .unwrap_or(SUPPORTED.len())
    }

    /// Allowed valences, ascending. Empty for elements without a table.
    pub fn default_valences(&self) -> &'static [u8] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::Si => &[4],
            Element::P => &[3, 5],
            Element::S | Element::Se => &[2, 4, 6],
            Element::Ge | Element::Sn => &[4],
            Element::Te => &[2],
            Element::Other(_) => &[],
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
