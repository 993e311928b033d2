//! Synthetic molecules: random acyclic graphs embedded in 3D with idealised
//! geometry, and a few fixed reference molecules.

use crate::extract::{bond_length, reference_bond_length};
use crate::field::{check_coverage, place_molecule, FieldLayout, RbfParams};
use crate::molecule::{chirality_determinant, Atom, Bond, BondOrder, Element, Molecule};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub min_heavy: usize,
    pub max_heavy: usize,
    /// Relative weights of C, N, O, F among heavy atoms.
    pub element_weights: [f64; 4],
    /// Chance, applied repeatedly, that a tree bond is promoted by one order when valences allow.
    pub multiple_bond_rate: f64,
    /// Extra clearance (Å) beyond `L(a, b) + 0.35` between non-bonded atoms.
    pub clearance: f64,
    /// Uniform jitter of bond lengths (Å).
    pub length_jitter: f64,
    /// Standard deviation of the direction jitter (radians, approximately).
    pub angle_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_heavy: 1,
            max_heavy: 9,
            element_weights: [0.6, 0.15, 0.15, 0.1],
            multiple_bond_rate: 0.25,
            clearance: 0.25,
            length_jitter: 0.02,
            angle_jitter: 0.04,
        }
    }
}

const HEAVY: [Element; 4] = [Element::C, Element::N, Element::O, Element::F];
const SCREEN_MARGIN: f64 = 0.35;

fn valence(e: Element) -> u32 {
    e.neutral_valences()[0]
}

/// Molecular graph without coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub elements: Vec<Element>,
    pub bonds: Vec<Bond>,
}

impl Graph {
    fn order_sum(&self, i: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.i == i || b.j == i)
            .map(|b| u32::from(b.order.value()))
            .sum()
    }

    /// Saturates every heavy atom with hydrogens up to its neutral valence.
    pub fn fill_hydrogens(&mut self) {
        let n = self.elements.len();
        for i in 0..n {
            let free = valence(self.elements[i]).saturating_sub(self.order_sum(i));
            for _ in 0..free {
                self.elements.push(Element::H);
                self.bonds.push(Bond::new(i, self.elements.len() - 1, BondOrder::Single));
            }
        }
    }
}

/// Random tree of heavy atoms with occasional multiple bonds, hydrogens filled.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, config: &SynthConfig) -> Graph {
    let n = rng.random_range(config.min_heavy.max(1)..=config.max_heavy.max(config.min_heavy.max(1)));
    let total: f64 = config.element_weights.iter().sum();
    let pick = |rng: &mut R| {
        let mut x = rng.random::<f64>() * total;
        for (k, w) in config.element_weights.iter().enumerate() {
            if x < *w {
                return HEAVY[k];
            }
            x -= w;
        }
        Element::C
    };
    let mut g = Graph {
        elements: vec![pick(rng)],
        bonds: Vec::new(),
    };
    for _ in 1..n {
        let open: Vec<usize> = (0..g.elements.len())
            .filter(|&i| g.order_sum(i) < valence(g.elements[i]))
            .collect();
        let Some(&parent) = open.as_slice().choose(rng) else {
            break;
        };
        g.elements.push(pick(rng));
        g.bonds.push(Bond::new(parent, g.elements.len() - 1, BondOrder::Single));
    }
    for b in 0..g.bonds.len() {
        let (i, j) = (g.bonds[b].i, g.bonds[b].j);
        while rng.random::<f64>() < config.multiple_bond_rate {
            let spare = |g: &Graph, a: usize| valence(g.elements[a]) > g.order_sum(a);
            let Some(order) = BondOrder::from_value(g.bonds[b].order.value() + 1) else {
                break;
            };
            if !(spare(&g, i) && spare(&g, j) && bond_length(g.elements[i], g.elements[j], order).is_some()) {
                break;
            }
            g.bonds[b].order = order;
        }
    }
    g.fill_hydrogens();
    g
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [0; 3].map(|_| rng.sample::<f64, _>(StandardNormal));
        let n2 = v.iter().map(|x| x * x).sum::<f64>();
        if n2 > 1e-6 {
            return normalize(v);
        }
    }
}

/// Unit directions of an idealised coordination shell; the first points along +x.
fn template(degree: usize, pi_bonds: u32) -> Vec<[f64; 3]> {
    let shell = |theta: f64, phis: &[f64]| -> Vec<[f64; 3]> {
        let mut v = vec![[1.0, 0.0, 0.0]];
        for &phi in phis {
            v.push([theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()]);
        }
        v
    };
    let tet = 109.471_f64.to_radians();
    let tri = 120f64.to_radians();
    let all = match pi_bonds {
        0 => shell(tet, &[0.0, tri, 2.0 * tri]),
        1 => shell(tri, &[0.0, std::f64::consts::PI]),
        _ => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
    };
    all.into_iter().take(degree.max(1)).collect()
}

/// Places a graph in 3D by walking the tree from atom 0, using idealised
/// shells with random torsions. Fails when no clash-free placement is found.
pub fn embed<R: Rng + ?Sized>(graph: &Graph, rng: &mut R, config: &SynthConfig, attempts: usize) -> Option<Molecule> {
    let n = graph.elements.len();
    let mut adj = vec![Vec::new(); n];
    for b in &graph.bonds {
        adj[b.i].push((b.j, b.order));
        adj[b.j].push((b.i, b.order));
    }
    let pi: Vec<u32> = (0..n)
        .map(|i| adj[i].iter().map(|&(_, o)| u32::from(o.value()) - 1).sum())
        .collect();
    'attempt: for _ in 0..attempts {
        let mut pos: Vec<Option<[f64; 3]>> = vec![None; n];
        pos[0] = Some([0.0; 3]);
        let mut parent = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut bonded = std::collections::HashSet::new();
        for b in &graph.bonds {
            bonded.insert((b.i.min(b.j), b.i.max(b.j)));
        }
        while let Some(a) = queue.pop_front() {
            let pa = pos[a].expect("queued atoms are placed");
            let children: Vec<(usize, BondOrder)> = adj[a].iter().copied().filter(|&(c, _)| pos[c].is_none()).collect();
            if children.is_empty() {
                continue;
            }
            let axis = if parent[a] == usize::MAX {
                random_unit(rng)
            } else {
                let pp = pos[parent[a]].expect("parent placed");
                normalize([pp[0] - pa[0], pp[1] - pa[1], pp[2] - pa[2]])
            };
            let mut slots = template(adj[a].len(), pi[a]);
            let first = if parent[a] == usize::MAX { 0 } else { 1 };
            let mut free: Vec<[f64; 3]> = slots.drain(first.min(slots.len())..).collect();
            free.shuffle(rng);
            let mut placed_ok = false;
            for _ in 0..30 {
                let r = random_unit(rng);
                let e1 = normalize(cross(axis, r));
                let e2 = cross(axis, e1);
                let mut trial = Vec::new();
                let mut clash = false;
                for (&(c, order), t) in children.iter().zip(&free) {
                    let mut d = [0, 1, 2].map(|k| t[0] * axis[k] + t[1] * e1[k] + t[2] * e2[k]);
                    let jitter = [0; 3].map(|_| config.angle_jitter * rng.sample::<f64, _>(StandardNormal));
                    d = normalize([d[0] + jitter[0], d[1] + jitter[1], d[2] + jitter[2]]);
                    let len = bond_length(graph.elements[a], graph.elements[c], order).expect("graph uses tabulated orders")
                        + rng.random_range(-config.length_jitter..=config.length_jitter);
                    let p = [0, 1, 2].map(|k| pa[k] + len * d[k]);
                    let others = pos.iter().enumerate().filter_map(|(i, q)| q.map(|q| (i, q))).chain(trial.iter().copied());
                    for (i, q) in others {
                        if bonded.contains(&(i.min(c), i.max(c))) {
                            continue;
                        }
                        let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                        let limit = reference_bond_length(graph.elements[i], graph.elements[c]) + SCREEN_MARGIN + config.clearance;
                        if dist <= limit {
                            clash = true;
                            break;
                        }
                    }
                    if clash {
                        break;
                    }
                    trial.push((c, p));
                }
                if !clash {
                    for (c, p) in trial {
                        pos[c] = Some(p);
                        parent[c] = a;
                        queue.push_back(c);
                    }
                    placed_ok = true;
                    break;
                }
            }
            if !placed_ok {
                continue 'attempt;
            }
        }
        let atoms = graph
            .elements
            .iter()
            .zip(&pos)
            .map(|(&e, p)| Atom::new(e, p.expect("tree is connected")))
            .collect();
        return Molecule::new(atoms, graph.bonds.clone()).ok();
    }
    None
}

/// Random molecule that satisfies the grid coverage rule after canonical
/// orientation on `layout`.
pub fn random_molecule<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SynthConfig,
    layout: &FieldLayout,
    params: &RbfParams,
) -> Molecule {
    loop {
        let g = random_graph(rng, config);
        let Some(m) = embed(&g, rng, config, 50) else {
            continue;
        };
        if check_coverage(&place_molecule(&m, &layout.spec, true), layout, params).is_ok() {
            return m;
        }
    }
}

fn graph(elements: &[Element], bonds: &[(usize, usize, u8)]) -> Graph {
    Graph {
        elements: elements.to_vec(),
        bonds: bonds
            .iter()
            .map(|&(i, j, o)| Bond::new(i, j, BondOrder::from_value(o).expect("order 1-3")))
            .collect(),
    }
}

fn embed_fixed(mut g: Graph, seed: u64) -> Molecule {
    g.fill_hydrogens();
    let config = SynthConfig {
        angle_jitter: 0.0,
        length_jitter: 0.0,
        ..SynthConfig::default()
    };
    embed(&g, &mut ChaCha8Rng::seed_from_u64(seed), &config, 1000).expect("reference molecules embed")
}

pub fn methane() -> Molecule {
    embed_fixed(graph(&[Element::C], &[]), 1)
}

pub fn water() -> Molecule {
    embed_fixed(graph(&[Element::O], &[]), 1)
}

pub fn ethane() -> Molecule {
    embed_fixed(graph(&[Element::C, Element::C], &[(0, 1, 1)]), 1)
}

pub fn ethanol() -> Molecule {
    embed_fixed(graph(&[Element::C, Element::C, Element::O], &[(0, 1, 1), (1, 2, 1)]), 1)
}

pub fn dimethyl_ether() -> Molecule {
    embed_fixed(graph(&[Element::O, Element::C, Element::C], &[(0, 1, 1), (0, 2, 1)]), 1)
}

pub fn formaldehyde() -> Molecule {
    embed_fixed(graph(&[Element::C, Element::O], &[(0, 1, 2)]), 1)
}

/// Benzene in Kekulé form (alternating single and double ring bonds).
pub fn benzene() -> Molecule {
    let mut atoms = Vec::new();
    let mut bonds = Vec::new();
    for k in 0..6 {
        let phi = std::f64::consts::PI / 3.0 * k as f64;
        atoms.push(Atom::new(Element::C, [1.39 * phi.cos(), 1.39 * phi.sin(), 0.0]));
    }
    for k in 0..6 {
        let phi = std::f64::consts::PI / 3.0 * k as f64;
        atoms.push(Atom::new(Element::H, [2.47 * phi.cos(), 2.47 * phi.sin(), 0.0]));
        let order = if k % 2 == 0 { BondOrder::Double } else { BondOrder::Single };
        bonds.push(Bond::new(k, (k + 1) % 6, order));
        bonds.push(Bond::new(k, k + 6, BondOrder::Single));
    }
    Molecule::new(atoms, bonds).expect("benzene is well formed")
}

/// Tetrahedral carbon bearing O, N, H and C (atoms 1..=4 in that order),
/// with jittered geometry. The determinant of the O, N, H offsets has the
/// sign of `handedness`.
pub fn tetrahedral_center<R: Rng + ?Sized>(rng: &mut R, handedness: f64, jitter: f64) -> Molecule {
    let ligands = [Element::O, Element::N, Element::H, Element::C];
    let t = template(4, 0);
    let atoms: Vec<Atom> = std::iter::once(Atom::new(Element::C, [0.0; 3]))
        .chain(ligands.iter().zip(&t).map(|(&e, d)| {
            let len = bond_length(Element::C, e, BondOrder::Single).expect("single radii exist")
                + rng.random_range(-jitter..=jitter);
            let d = normalize([0, 1, 2].map(|k| d[k] + jitter * rng.sample::<f64, _>(StandardNormal)));
            Atom::new(e, d.map(|x| len * x))
        }))
        .collect();
    let bonds = (1..5).map(|k| Bond::new(0, k, BondOrder::Single)).collect();
    let m = Molecule::new(atoms, bonds).expect("star is well formed");
    if chirality_determinant(&m, 0, [1, 2, 3]).signum() == handedness.signum() {
        m
    } else {
        m.mirrored()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{grid_default, DatasetKind};
    use crate::molecule::{canonical_key, formal_neutrality, validity};

    #[test]
    fn random_molecules_are_neutral_and_clash_free() {
        let layout = FieldLayout::qm9(grid_default(DatasetKind::Qm9));
        let params = RbfParams::defaults_for(&layout);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = SynthConfig::default();
        let mut sizes = std::collections::BTreeSet::new();
        for _ in 0..50 {
            let m = random_molecule(&mut rng, &config, &layout, &params);
            assert!(validity(&m));
            assert!(formal_neutrality(&m).1);
            let heavy = m.atoms().iter().filter(|a| a.element != Element::H).count();
            assert!((1..=9).contains(&heavy));
            sizes.insert(heavy);
            let bonded: std::collections::HashSet<(usize, usize)> = m.bonds().iter().map(|b| (b.i.min(b.j), b.i.max(b.j))).collect();
            for i in 0..m.len() {
                for j in i + 1..m.len() {
                    if !bonded.contains(&(i, j)) {
                        let l = reference_bond_length(m.atoms()[i].element, m.atoms()[j].element);
                        assert!(m.distance(i, j) > l + 0.35);
                    } else {
                        assert!(m.distance(i, j) < 1.6);
                    }
                }
            }
        }
        assert!(sizes.len() > 4);
    }

    #[test]
    fn reference_molecules() {
        assert_eq!(methane().len(), 5);
        assert_eq!(ethanol().len(), 9);
        assert_eq!(dimethyl_ether().len(), 9);
        assert_ne!(canonical_key(&ethanol()), canonical_key(&dimethyl_ether()));
        assert!(formal_neutrality(&benzene()).1);
        assert!(formal_neutrality(&formaldehyde()).1);
        assert_eq!(water().len(), 3);
        assert_eq!(ethane().count_element(Element::H), 6);
        let b = benzene();
        for bd in b.bonds() {
            assert!(b.distance(bd.i, bd.j) < 1.4);
        }
    }

    #[test]
    fn tetrahedral_handedness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for h in [1.0, -1.0] {
            for _ in 0..20 {
                let m = tetrahedral_center(&mut rng, h, 0.03);
                assert_eq!(chirality_determinant(&m, 0, [1, 2, 3]).signum(), h);
            }
        }
    }
}
