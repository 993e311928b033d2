use super::{BondOrder, Element, Molecule};
use serde::{Deserialize, Serialize};

/// Determinant of the matrix whose rows are `m_k - m_center` for the three
/// neighbours in the given order (Å³). The sign identifies the enantiomer,
/// the magnitude is the spanned volume.
pub fn chirality_determinant(mol: &Molecule, center: usize, neighbors: [usize; 3]) -> f64 {
    let c = mol.atoms()[center].position;
    let rows = neighbors.map(|k| {
        let p = mol.atoms()[k].position;
        [p[0] - c[0], p[1] - c[1], p[2] - c[2]]
    });
    det3(&rows)
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Which atoms count as tetrahedral centres and how their neighbours are ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetrahedralQuery {
    pub center: Element,
    /// Neighbour priority, highest first. Unlisted elements rank below every listed one.
    pub priority: Vec<Element>,
}

impl Default for TetrahedralQuery {
    fn default() -> Self {
        Self {
            center: Element::C,
            priority: vec![Element::O, Element::N, Element::H],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TetrahedralCenter {
    pub center: usize,
    pub neighbors: [usize; 3],
}

/// Centres with exactly four single-bonded neighbours whose priorities are
/// pairwise distinct; the triple holds the three highest-priority neighbours.
pub fn find_tetrahedral_centers(mol: &Molecule, query: &TetrahedralQuery) -> Vec<TetrahedralCenter> {
    let rank = |e: Element| {
        query
            .priority
            .iter()
            .position(|&p| p == e)
            .unwrap_or(query.priority.len())
    };
    let adj = mol.adjacency();
    let mut out = Vec::new();
    for (center, nbrs) in adj.iter().enumerate() {
        if mol.atoms()[center].element != query.center
            || nbrs.len() != 4
            || nbrs.iter().any(|&(_, o)| o != BondOrder::Single)
        {
            continue;
        }
        let mut ranked: Vec<(usize, usize)> = nbrs
            .iter()
            .map(|&(k, _)| (rank(mol.atoms()[k].element), k))
            .collect();
        ranked.sort_unstable();
        if ranked.windows(2).all(|w| w[0].0 < w[1].0) {
            out.push(TetrahedralCenter {
                center,
                neighbors: [ranked[0].1, ranked[1].1, ranked[2].1],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::fixtures::methane;
    use crate::molecule::{Atom, Bond};

    fn offsets_mol(offsets: [[f64; 3]; 3]) -> Molecule {
        let mut atoms = vec![Atom::new(Element::C, [0.5, -0.25, 2.0])];
        for o in offsets {
            atoms.push(Atom::new(Element::H, [0.5 + o[0], -0.25 + o[1], 2.0 + o[2]]));
        }
        Molecule::new(atoms, vec![]).unwrap()
    }

    #[test]
    fn identity_offsets() {
        let m = offsets_mol([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!((chirality_determinant(&m, 0, [1, 2, 3]) - 1.0).abs() < 1e-12);
        assert!((chirality_determinant(&m.mirrored(), 0, [1, 2, 3]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_is_zero() {
        let m = offsets_mol([[1.0, 0.0, 0.0], [0.3, 1.0, 0.0], [-0.7, 0.2, 0.0]]);
        assert_eq!(chirality_determinant(&m, 0, [1, 2, 3]), 0.0);
    }

    fn aminoethanol_center() -> Molecule {
        // C0 bonded to O1, N2, H3, C4
        let atoms = vec![
            Atom::new(Element::C, [0.0, 0.0, 0.0]),
            Atom::new(Element::C, [-0.9, -0.9, -0.9]),
            Atom::new(Element::N, [0.9, -0.9, 0.9]),
            Atom::new(Element::H, [-0.9, 0.9, 0.9]),
            Atom::new(Element::O, [0.9, 0.9, -0.9]),
        ];
        let bonds = (1..5).map(|k| Bond::new(0, k, BondOrder::Single)).collect();
        Molecule::new(atoms, bonds).unwrap()
    }

    #[test]
    fn finds_onhc_center_with_priority_order() {
        let m = aminoethanol_center();
        let centers = find_tetrahedral_centers(&m, &TetrahedralQuery::default());
        assert_eq!(
            centers,
            vec![TetrahedralCenter {
                center: 0,
                neighbors: [4, 2, 3]
            }]
        );
    }

    #[test]
    fn ties_and_unsaturated_centers_are_excluded() {
        assert!(find_tetrahedral_centers(&methane(), &TetrahedralQuery::default()).is_empty());
        let mut m = aminoethanol_center();
        let bonds: Vec<Bond> = m
            .bonds()
            .iter()
            .map(|b| if b.j == 1 { Bond::new(0, 1, BondOrder::Double) } else { *b })
            .collect();
        m = Molecule::new(m.atoms().to_vec(), bonds).unwrap();
        assert!(find_tetrahedral_centers(&m, &TetrahedralQuery::default()).is_empty());
        let three = Molecule::new(m.atoms()[..4].to_vec(), (1..4).map(|k| Bond::new(0, k, BondOrder::Single)).collect()).unwrap();
        assert!(find_tetrahedral_centers(&three, &TetrahedralQuery::default()).is_empty());
    }
}
