use crate::molecule::{chirality_determinant, find_tetrahedral_centers, Molecule, TetrahedralQuery};
use serde::{Deserialize, Serialize};

pub const DETERMINANT_BIN: f64 = 0.1;
pub const DEGENERATE_DETERMINANT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiralityReport {
    /// One determinant per matched centre, in molecule then centre order.
    pub determinants: Vec<f64>,
    /// (bin start, count) for non-empty bins of width 0.1 Å³ on multiples of the width.
    pub histogram: Vec<(f64, usize)>,
    /// Share of positive determinants among those with |det| ≥ 1e-6; 0 if none.
    pub sign_fraction: f64,
    pub degenerate: usize,
}

pub fn chirality_distribution(mols: &[Molecule], query: &TetrahedralQuery) -> ChiralityReport {
    let determinants: Vec<f64> = mols
        .iter()
        .flat_map(|m| {
            find_tetrahedral_centers(m, query)
                .into_iter()
                .map(move |c| chirality_determinant(m, c.center, c.neighbors))
        })
        .collect();
    let mut hist = std::collections::BTreeMap::<i64, usize>::new();
    for &d in &determinants {
        *hist.entry((d / DETERMINANT_BIN).floor() as i64).or_default() += 1;
    }
    let decided: Vec<f64> = determinants.iter().copied().filter(|d| d.abs() >= DEGENERATE_DETERMINANT).collect();
    let positive = decided.iter().filter(|&&d| d > 0.0).count();
    ChiralityReport {
        sign_fraction: if decided.is_empty() { 0.0 } else { positive as f64 / decided.len() as f64 },
        degenerate: determinants.len() - decided.len(),
        histogram: hist.into_iter().map(|(k, n)| (k as f64 * DETERMINANT_BIN, n)).collect(),
        determinants,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::{Atom, Bond, BondOrder, Element};
    use crate::synth::tetrahedral_center;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn handedness_and_mirror_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let right: Vec<Molecule> = (0..20).map(|_| tetrahedral_center(&mut rng, 1.0, 0.05)).collect();
        let q = TetrahedralQuery::default();
        let r = chirality_distribution(&right, &q);
        assert_eq!(r.determinants.len(), 20);
        assert_eq!(r.sign_fraction, 1.0);
        assert_eq!(r.histogram.iter().map(|h| h.1).sum::<usize>(), 20);
        let mut pooled = right.clone();
        pooled.extend(right.iter().map(Molecule::mirrored));
        assert_eq!(chirality_distribution(&pooled, &q).sign_fraction, 0.5);
    }

    #[test]
    fn coplanar_is_excluded() {
        let atoms = vec![
            Atom::new(Element::C, [0.0; 3]),
            Atom::new(Element::O, [1.4, 0.0, 0.0]),
            Atom::new(Element::N, [0.0, 1.4, 0.0]),
            Atom::new(Element::H, [-1.0, 0.0, 0.0]),
            Atom::new(Element::F, [0.0, -1.3, 0.0]),
        ];
        let bonds = (1..5).map(|k| Bond::new(0, k, BondOrder::Single)).collect();
        let flat = Molecule::new(atoms, bonds).unwrap();
        let r = chirality_distribution(&[flat], &TetrahedralQuery::default());
        assert_eq!(r.determinants.len(), 1);
        assert!(r.determinants[0].abs() < 1e-12);
        assert_eq!((r.degenerate, r.sign_fraction), (1, 0.0));
    }
}
