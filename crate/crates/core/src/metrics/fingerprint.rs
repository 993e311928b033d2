use crate::molecule::Molecule;
use fnv::FnvHasher;
use rayon::prelude::*;
use std::hash::Hasher;

pub const DEFAULT_FINGERPRINT_BITS: usize = 2048;
pub const DEFAULT_FINGERPRINT_RADIUS: usize = 2;

/// Circular-neighbourhood bit vector of a molecular graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    n_bits: usize,
    radius: usize,
}

impl Fingerprint {
    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn set(&mut self, id: u64) {
        let bit = (id % self.n_bits as u64) as usize;
        self.words[bit / 64] |= 1 << (bit % 64);
    }
}

fn hash_words(words: &[u64]) -> u64 {
    let mut h = FnvHasher::default();
    for &w in words {
        h.write_u64(w);
    }
    h.finish()
}

pub fn fingerprint(mol: &Molecule) -> Fingerprint {
    fingerprint_with(mol, DEFAULT_FINGERPRINT_RADIUS, DEFAULT_FINGERPRINT_BITS)
}

/// Morgan-style fingerprint. Atom identifiers start from (element, degree,
/// total bond order) and are rehashed `radius` times together with the sorted
/// (bond order, neighbour identifier) pairs; every identifier from every
/// iteration sets bit `id mod n_bits`.
pub fn fingerprint_with(mol: &Molecule, radius: usize, n_bits: usize) -> Fingerprint {
    assert!(n_bits > 0, "fingerprint needs at least one bit");
    let mut fp = Fingerprint {
        words: vec![0; n_bits.div_ceil(64)],
        n_bits,
        radius,
    };
    let adj = mol.adjacency();
    let sums = mol.bond_order_sums();
    let mut ids: Vec<u64> = mol
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| hash_words(&[a.element as u64, adj[i].len() as u64, sums[i] as u64]))
        .collect();
    for &id in &ids {
        fp.set(id);
    }
    for round in 1..=radius {
        let next: Vec<u64> = (0..ids.len())
            .map(|i| {
                let mut env: Vec<(u64, u64)> = adj[i].iter().map(|&(j, o)| (o.value() as u64, ids[j])).collect();
                env.sort_unstable();
                let mut words = vec![round as u64, ids[i]];
                words.extend(env.into_iter().flat_map(|(o, id)| [o, id]));
                hash_words(&words)
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set(id);
        }
    }
    fp
}

/// |a ∩ b| / |a ∪ b|, with an empty union scoring 0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    assert_eq!(a.n_bits, b.n_bits, "fingerprints of different widths");
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean over `generated` of the best Tanimoto similarity against `test`.
pub(crate) fn max_similarity_mean(generated: &[Fingerprint], test: &[Fingerprint]) -> f64 {
    let best: Vec<f64> = generated
        .par_iter()
        .map(|g| test.iter().map(|t| tanimoto(g, t)).fold(0.0, f64::max))
        .collect();
    best.iter().sum::<f64>() / best.len() as f64
}
