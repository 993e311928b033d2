//! Molecular data model: elements, atoms, typed bonds and the valence rules
//! used by the neutrality and validity metrics.

mod canon;
mod chirality;
mod sdf;
mod xyz;

pub use canon::{canonical_key, CanonicalKey};
pub(crate) use chirality::det3;
pub use chirality::{
    chirality_determinant, find_tetrahedral_centers, TetrahedralCenter, TetrahedralQuery,
};
pub use sdf::{parse_sdf, parse_sdf_records, write_sdf, SdfError, SdfErrorKind};
pub use xyz::{parse_xyz, XyzError};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Chemical elements supported by the field representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
}

impl Element {
    pub const ALL: [Element; 8] = [
        Element::H,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == symbol)
    }

    /// Bond-order sums at which the atom carries a formal charge of zero.
    pub fn neutral_valences(self) -> &'static [u32] {
        match self {
            Element::H | Element::F | Element::Cl => &[1],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
        }
    }

    /// Largest bond-order sum accepted by the validity check (charged states included).
    pub fn max_valence(self) -> u32 {
        match self {
            Element::H | Element::F | Element::Cl => 1,
            Element::C => 4,
            Element::N => 4,
            Element::O => 3,
            Element::P => 5,
            Element::S => 6,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Covalent bond order. Aromatic bonds have no representation; rings must be
/// given in Kekulé form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
}

impl BondOrder {
    pub const ALL: [BondOrder; 3] = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];

    pub fn value(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn from_value(v: u8) -> Option<BondOrder> {
        match v {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    /// Cartesian position in Å.
    pub position: [f64; 3],
}

impl Atom {
    pub fn new(element: Element, position: [f64; 3]) -> Self {
        Self { element, position }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(i: usize, j: usize, order: BondOrder) -> Self {
        Self { i, j, order }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoleculeError {
    #[error("bond {index} joins atom {atom} to itself")]
    SelfBond { index: usize, atom: usize },
    #[error("bond {index} references atom {atom}, but the molecule has {n_atoms} atoms")]
    BondOutOfRange {
        index: usize,
        atom: usize,
        n_atoms: usize,
    },
    #[error("atoms {i} and {j} are bonded more than once")]
    DuplicateBond { i: usize, j: usize },
    #[error("atom {index} has a non-finite coordinate")]
    NonFinitePosition { index: usize },
}

/// A molecule with atom positions and a typed bond graph.
///
/// Construction through [`Molecule::new`] guarantees that bond endpoints are
/// distinct and in range, that no atom pair is bonded twice and that every
/// coordinate is finite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
}

impl Molecule {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, MoleculeError> {
        for (index, atom) in atoms.iter().enumerate() {
            if atom.position.iter().any(|c| !c.is_finite()) {
                return Err(MoleculeError::NonFinitePosition { index });
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(bonds.len());
        for (index, bond) in bonds.iter().enumerate() {
            for atom in [bond.i, bond.j] {
                if atom >= atoms.len() {
                    return Err(MoleculeError::BondOutOfRange {
                        index,
                        atom,
                        n_atoms: atoms.len(),
                    });
                }
            }
            if bond.i == bond.j {
                return Err(MoleculeError::SelfBond {
                    index,
                    atom: bond.i,
                });
            }
            let key = (bond.i.min(bond.j), bond.i.max(bond.j));
            if !seen.insert(key) {
                return Err(MoleculeError::DuplicateBond { i: key.0, j: key.1 });
            }
        }
        Ok(Self { atoms, bonds })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    /// Same graph with new coordinates. Panics if the lengths differ.
    pub fn with_positions(&self, positions: &[[f64; 3]]) -> Molecule {
        assert_eq!(positions.len(), self.atoms.len(), "position count mismatch");
        let atoms = self
            .atoms
            .iter()
            .zip(positions)
            .map(|(a, &p)| Atom::new(a.element, p))
            .collect();
        Molecule {
            atoms,
            bonds: self.bonds.clone(),
        }
    }

    pub fn translated(&self, offset: [f64; 3]) -> Molecule {
        let positions: Vec<_> = self
            .atoms
            .iter()
            .map(|a| {
                [
                    a.position[0] + offset[0],
                    a.position[1] + offset[1],
                    a.position[2] + offset[2],
                ]
            })
            .collect();
        self.with_positions(&positions)
    }

    /// Mirror image through the x = 0 plane.
    pub fn mirrored(&self) -> Molecule {
        let positions: Vec<_> = self
            .atoms
            .iter()
            .map(|a| [-a.position[0], a.position[1], a.position[2]])
            .collect();
        self.with_positions(&positions)
    }

    /// Relabels atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let atoms = perm.iter().map(|&old| self.atoms[old]).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond::new(inverse[b.i], inverse[b.j], b.order))
            .collect();
        Molecule { atoms, bonds }
    }

    /// Neighbour lists `(atom, order)` for every atom.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        adj
    }

    /// Sum of bond orders incident to each atom.
    pub fn bond_order_sums(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.atoms.len()];
        for b in &self.bonds {
            let v = u32::from(b.order.value());
            sums[b.i] += v;
            sums[b.j] += v;
        }
        sums
    }

    pub fn count_element(&self, element: Element) -> usize {
        self.atoms.iter().filter(|a| a.element == element).count()
    }

    pub fn count_bonds(&self, order: BondOrder) -> usize {
        self.bonds.iter().filter(|b| b.order == order).count()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.atoms[i].position, self.atoms[j].position);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

/// Per-atom neutrality flags and whether every atom is neutral.
pub fn formal_neutrality(mol: &Molecule) -> (Vec<bool>, bool) {
    let flags: Vec<bool> = mol
        .bond_order_sums()
        .into_iter()
        .zip(mol.atoms())
        .map(|(sum, atom)| atom.element.neutral_valences().contains(&sum))
        .collect();
    let all = flags.iter().all(|&f| f);
    (flags, all)
}

/// Max-valence satisfiability: non-empty and no atom above its maximum valence.
pub fn validity(mol: &Molecule) -> bool {
    !mol.is_empty()
        && mol
            .bond_order_sums()
            .into_iter()
            .zip(mol.atoms())
            .all(|(sum, atom)| sum <= atom.element.max_valence())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn methane() -> Molecule {
        let d = 1.09 / 3f64.sqrt();
        let atoms = vec![
            Atom::new(Element::C, [0.0, 0.0, 0.0]),
            Atom::new(Element::H, [d, d, d]),
            Atom::new(Element::H, [-d, -d, d]),
            Atom::new(Element::H, [-d, d, -d]),
            Atom::new(Element::H, [d, -d, -d]),
        ];
        let bonds = (1..5).map(|h| Bond::new(0, h, BondOrder::Single)).collect();
        Molecule::new(atoms, bonds).unwrap()
    }

    pub fn star(center: Element, ligands: &[Element]) -> Molecule {
        let mut atoms = vec![Atom::new(center, [0.0; 3])];
        let mut bonds = Vec::new();
        for (k, &e) in ligands.iter().enumerate() {
            let phi = k as f64 * 2.0;
            atoms.push(Atom::new(e, [phi.cos(), phi.sin(), 0.3 * k as f64]));
            bonds.push(Bond::new(0, k + 1, BondOrder::Single));
        }
        Molecule::new(atoms, bonds).unwrap()
    }
}
