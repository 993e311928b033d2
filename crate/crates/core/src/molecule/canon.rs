//! Canonical labelling of molecular graphs.
//!
//! Colour refinement (element, then multisets of `(bond order, neighbour
//! colour)`) is run to an equitable partition. Non-discrete partitions are
//! resolved by individualising each vertex of the first non-singleton cell in
//! turn and refining again; the lexicographically smallest certificate over
//! all leaves is the canonical form. Vertices with identical labelled
//! neighbourhoods are interchangeable by an automorphism that fixes the
//! current partition, so only one representative per such class is explored.

use super::Molecule;
use sha2::{Digest, Sha256};
use std::fmt;

/// SHA-256 digest of the canonical labelled graph.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub [u8; 32]);

impl fmt::Debug for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalKey({self})")
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

struct Graph {
    labels: Vec<u32>,
    adj: Vec<Vec<(usize, u8)>>,
}

type Certificate = (Vec<u32>, Vec<(usize, usize, u8)>);

pub fn canonical_key(mol: &Molecule) -> CanonicalKey {
    let graph = Graph {
        labels: mol.atoms().iter().map(|a| a.element as u32).collect(),
        adj: mol
            .adjacency()
            .into_iter()
            .map(|n| n.into_iter().map(|(j, o)| (j, o.value())).collect())
            .collect(),
    };
    let colors = refine(&graph, graph.labels.clone());
    let mut best: Option<Certificate> = None;
    search(&graph, colors, &mut best);
    let (labels, edges) = best.unwrap_or_default();

    let mut hasher = Sha256::new();
    hasher.update((labels.len() as u64).to_le_bytes());
    for l in &labels {
        hasher.update(l.to_le_bytes());
    }
    hasher.update((edges.len() as u64).to_le_bytes());
    for &(a, b, o) in &edges {
        hasher.update((a as u64).to_le_bytes());
        hasher.update((b as u64).to_le_bytes());
        hasher.update([o]);
    }
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    CanonicalKey(out)
}

/// Refines `colors` to the coarsest equitable partition, renumbering cells
/// to `0..n_cells` in an isomorphism-invariant order.
fn refine(g: &Graph, mut colors: Vec<u32>) -> Vec<u32> {
    let n = colors.len();
    colors = compress(&colors);
    let mut n_cells = count_distinct(&colors);
    loop {
        let signatures: Vec<(u32, Vec<(u8, u32)>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<(u8, u32)> = g.adj[v].iter().map(|&(u, o)| (o, colors[u])).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let next = compress(&signatures);
        let next_cells = count_distinct(&next);
        colors = next;
        if next_cells == n_cells {
            return colors;
        }
        n_cells = next_cells;
    }
}

fn compress<T: Ord + Clone>(signatures: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = signatures.to_vec();
    sorted.sort();
    sorted.dedup();
    signatures
        .iter()
        .map(|s| sorted.binary_search(s).expect("present") as u32)
        .collect()
}

fn count_distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn search(g: &Graph, colors: Vec<u32>, best: &mut Option<Certificate>) {
    let n = colors.len();
    let mut cell_sizes = vec![0usize; n];
    for &c in &colors {
        cell_sizes[c as usize] += 1;
    }
    let Some(target) = (0..n).find(|&c| cell_sizes[c] > 1) else {
        let cert = certificate(g, &colors);
        if best.as_ref().map_or(true, |b| cert < *b) {
            *best = Some(cert);
        }
        return;
    };
    let cell: Vec<usize> = (0..n).filter(|&v| colors[v] as usize == target).collect();
    let mut representatives: Vec<usize> = Vec::new();
    for &v in &cell {
        if representatives.iter().any(|&r| are_twins(g, r, v)) {
            continue;
        }
        representatives.push(v);
        let individualised: Vec<u32> = colors
            .iter()
            .enumerate()
            .map(|(u, &c)| if u == v { 2 * c } else { 2 * c + 1 })
            .collect();
        search(g, refine(g, individualised), best);
    }
}

/// True when swapping `a` and `b` is a graph automorphism.
fn are_twins(g: &Graph, a: usize, b: usize) -> bool {
    if g.labels[a] != g.labels[b] {
        return false;
    }
    let others = |v: usize, skip: usize| {
        let mut n: Vec<(usize, u8)> = g.adj[v].iter().copied().filter(|&(u, _)| u != skip).collect();
        n.sort_unstable();
        n
    };
    let bond = |v: usize, u: usize| g.adj[v].iter().find(|&&(w, _)| w == u).map(|&(_, o)| o);
    bond(a, b) == bond(b, a) && others(a, b) == others(b, a)
}

fn certificate(g: &Graph, colors: &[u32]) -> Certificate {
    let n = colors.len();
    let mut labels = vec![0u32; n];
    for v in 0..n {
        labels[colors[v] as usize] = g.labels[v];
    }
    let mut edges: Vec<(usize, usize, u8)> = Vec::new();
    for v in 0..n {
        for &(u, o) in &g.adj[v] {
            let (a, b) = (colors[v] as usize, colors[u] as usize);
            if a < b {
                edges.push((a, b, o));
            }
        }
    }
    edges.sort_unstable();
    (labels, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::fixtures::methane;
    use crate::molecule::{Atom, Bond, BondOrder, Element};

    fn graph(elements: &[Element], bonds: &[(usize, usize, u8)]) -> Molecule {
        let atoms = elements
            .iter()
            .enumerate()
            .map(|(k, &e)| Atom::new(e, [k as f64, 0.0, 0.0]))
            .collect();
        let bonds = bonds
            .iter()
            .map(|&(i, j, o)| Bond::new(i, j, BondOrder::from_value(o).unwrap()))
            .collect();
        Molecule::new(atoms, bonds).unwrap()
    }

    fn ethanol() -> Molecule {
        use Element::*;
        // C0-C1-O2, hydrogens 3..8
        graph(
            &[C, C, O, H, H, H, H, H, H],
            &[(0, 1, 1), (1, 2, 1), (0, 3, 1), (0, 4, 1), (0, 5, 1), (1, 6, 1), (1, 7, 1), (2, 8, 1)],
        )
    }

    fn dimethyl_ether() -> Molecule {
        use Element::*;
        graph(
            &[C, O, C, H, H, H, H, H, H],
            &[(0, 1, 1), (1, 2, 1), (0, 3, 1), (0, 4, 1), (0, 5, 1), (2, 6, 1), (2, 7, 1), (2, 8, 1)],
        )
    }

    /// Exhaustive isomorphism test for tiny graphs.
    fn brute_isomorphic(a: &Molecule, b: &Molecule) -> bool {
        if a.len() != b.len() || a.bonds().len() != b.bonds().len() {
            return false;
        }
        let n = a.len();
        let edge_set = |m: &Molecule, p: &[usize]| {
            let mut e: Vec<(usize, usize, u8)> = m
                .bonds()
                .iter()
                .map(|bd| {
                    let (x, y) = (p[bd.i], p[bd.j]);
                    (x.min(y), x.max(y), bd.order.value())
                })
                .collect();
            e.sort_unstable();
            e
        };
        let identity: Vec<usize> = (0..n).collect();
        let target = edge_set(b, &identity);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut found = false;
        heap_permutations(&mut perm, n, &mut |p| {
            if !found
                && (0..n).all(|i| a.atoms()[i].element == b.atoms()[p[i]].element)
                && edge_set(a, p) == target
            {
                found = true;
            }
        });
        found
    }

    fn heap_permutations(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            f(p);
            return;
        }
        for i in 0..k {
            heap_permutations(p, k - 1, f);
            if k % 2 == 0 {
                p.swap(i, k - 1);
            } else {
                p.swap(0, k - 1);
            }
        }
    }

    #[test]
    fn methane_reversed_has_same_key() {
        let m = methane();
        let r = m.permuted(&[4, 3, 2, 1, 0]);
        assert_eq!(canonical_key(&m), canonical_key(&r));
    }

    #[test]
    fn ethanol_and_dimethyl_ether_differ() {
        assert!(!brute_isomorphic(&ethanol(), &dimethyl_ether()));
        assert_ne!(canonical_key(&ethanol()), canonical_key(&dimethyl_ether()));
    }

    #[test]
    fn mirror_images_share_a_key() {
        let m = ethanol();
        assert_eq!(canonical_key(&m), canonical_key(&m.mirrored()));
    }

    #[test]
    fn bond_order_matters() {
        use Element::*;
        let single = graph(&[C, C], &[(0, 1, 1)]);
        let double = graph(&[C, C], &[(0, 1, 2)]);
        assert_ne!(canonical_key(&single), canonical_key(&double));
    }

    #[test]
    fn regular_graphs_are_separated() {
        use Element::*;
        // two triangles vs one hexagon: both 2-regular, refinement alone cannot tell them apart
        let triangles = graph(&[C; 6], &[(0, 1, 1), (1, 2, 1), (2, 0, 1), (3, 4, 1), (4, 5, 1), (5, 3, 1)]);
        let hexagon = graph(&[C; 6], &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1), (5, 0, 1)]);
        assert_ne!(canonical_key(&triangles), canonical_key(&hexagon));
        let shuffled = hexagon.permuted(&[3, 0, 5, 1, 4, 2]);
        assert_eq!(canonical_key(&hexagon), canonical_key(&shuffled));
    }

    #[test]
    fn agrees_with_brute_force_on_small_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pool = [Element::C, Element::N, Element::O];
        let random_graph = |rng: &mut rand_chacha::ChaCha8Rng| {
            let n = 5;
            let elements: Vec<Element> = (0..n).map(|_| pool[rng.random_range(0..2)]).collect();
            let mut bonds = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(0.4) {
                        bonds.push((i, j, rng.random_range(1..=2u8)));
                    }
                }
            }
            graph(&elements, &bonds)
        };
        let mut hits = 0;
        for _ in 0..300 {
            let a = random_graph(&mut rng);
            // perturb one bond of a shuffled copy: sometimes isomorphic, usually not
            let mut perm: Vec<usize> = (0..a.len()).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let shuffled = a.permuted(&perm);
            let b = if rng.random_bool(0.5) || shuffled.bonds().is_empty() {
                shuffled
            } else {
                let mut bonds = shuffled.bonds().to_vec();
                let k = rng.random_range(0..bonds.len());
                bonds[k].order = if bonds[k].order == BondOrder::Single { BondOrder::Double } else { BondOrder::Single };
                Molecule::new(shuffled.atoms().to_vec(), bonds).unwrap()
            };
            let iso = brute_isomorphic(&a, &b);
            hits += iso as usize;
            assert_eq!(iso, canonical_key(&a) == canonical_key(&b));
        }
        assert!(hits > 100 && hits < 300, "sample should mix isomorphic and distinct pairs");
    }
}
