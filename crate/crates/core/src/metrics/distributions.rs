use super::MetricsError;
use crate::molecule::{BondOrder, Element, Molecule};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const BOND_LENGTH_BIN: f64 = 0.01;
pub const BOND_ANGLE_BIN: f64 = 0.1;

fn count_tv(generated: &[Vec<usize>], reference: &[Vec<usize>]) -> f64 {
    let types = generated[0].len();
    let mut total = 0.0;
    for k in 0..types {
        let mut hist: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for g in generated {
            hist.entry(g[k]).or_default().0 += 1.0;
        }
        for r in reference {
            hist.entry(r[k]).or_default().1 += 1.0;
        }
        let (ng, nr) = (generated.len() as f64, reference.len() as f64);
        total += hist.values().map(|(g, r)| (g / ng - r / nr).abs()).sum::<f64>();
    }
    total
}

/// Summed total-variation distances between per-molecule atom counts (per
/// element) and bond counts (per order), over the union of observed counts.
pub fn tv_counts(generated: &[Molecule], reference: &[Molecule]) -> Result<(f64, f64), MetricsError> {
    if generated.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptySet("tv_counts"));
    }
    let atoms = |set: &[Molecule]| -> Vec<Vec<usize>> {
        set.iter().map(|m| Element::ALL.iter().map(|&e| m.count_element(e)).collect()).collect()
    };
    let bonds = |set: &[Molecule]| -> Vec<Vec<usize>> {
        set.iter().map(|m| BondOrder::ALL.iter().map(|&o| m.count_bonds(o)).collect()).collect()
    };
    Ok((
        count_tv(&atoms(generated), &atoms(reference)),
        count_tv(&bonds(generated), &bonds(reference)),
    ))
}

/// W1 between two samples through empirical CDFs on a shared grid of
/// `width`-wide bins anchored at the smallest observed value.
pub fn binned_w1(a: &[f64], b: &[f64], width: f64) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "binned_w1 needs samples on both sides");
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = ((hi - lo) / width).floor() as usize + 1;
    let hist = |xs: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in xs {
            h[(((x - lo) / width).floor() as usize).min(bins - 1)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (mut fa, mut fb, mut sum) = (0.0, 0.0, 0.0);
    for k in 0..bins {
        fa += ha[k];
        fb += hb[k];
        sum += (fa - fb).abs();
    }
    sum * width
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Report {
    /// Mean of the per-type distances.
    pub value: f64,
    pub per_type: Vec<(String, f64)>,
    /// Types observed on only one side.
    pub skipped: Vec<String>,
}

fn typed_w1(
    generated: BTreeMap<String, Vec<f64>>,
    reference: BTreeMap<String, Vec<f64>>,
    width: f64,
    what: &'static str,
) -> Result<W1Report, MetricsError> {
    let keys: BTreeSet<&String> = generated.keys().chain(reference.keys()).collect();
    let mut per_type = Vec::new();
    let mut skipped = Vec::new();
    for k in keys {
        match (generated.get(k), reference.get(k)) {
            (Some(g), Some(r)) => per_type.push((k.clone(), binned_w1(g, r, width))),
            _ => skipped.push(k.clone()),
        }
    }
    if per_type.is_empty() {
        return Err(MetricsError::NoSharedTypes(what));
    }
    let value = per_type.iter().map(|(_, v)| v).sum::<f64>() / per_type.len() as f64;
    Ok(W1Report { value, per_type, skipped })
}

fn bond_lengths(set: &[Molecule]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in set {
        for b in m.bonds() {
            out.entry(format!("order{}", b.order.value())).or_default().push(m.distance(b.i, b.j));
        }
    }
    out
}

/// Angles in degrees between every pair of bonds meeting at an atom with two
/// or more bonds, keyed by the central element; H and F never act as centres.
pub fn bond_angles(mol: &Molecule) -> Vec<(Element, f64)> {
    let adj = mol.adjacency();
    let atoms = mol.atoms();
    let mut out = Vec::new();
    for (k, nbrs) in adj.iter().enumerate() {
        let e = atoms[k].element;
        if matches!(e, Element::H | Element::F) || nbrs.len() < 2 {
            continue;
        }
        let c = atoms[k].position;
        let v: Vec<[f64; 3]> = nbrs
            .iter()
            .map(|&(j, _)| {
                let p = atoms[j].position;
                [p[0] - c[0], p[1] - c[1], p[2] - c[2]]
            })
            .collect();
        for a in 0..v.len() {
            for b in a + 1..v.len() {
                let dot: f64 = (0..3).map(|t| v[a][t] * v[b][t]).sum();
                let na = v[a].iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = v[b].iter().map(|x| x * x).sum::<f64>().sqrt();
                out.push((e, (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()));
            }
        }
    }
    out
}

fn bond_angle_map(set: &[Molecule]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in set {
        for (e, theta) in bond_angles(m) {
            out.entry(e.symbol().to_string()).or_default().push(theta);
        }
    }
    out
}

pub fn w1_bond_lengths(generated: &[Molecule], reference: &[Molecule]) -> Result<W1Report, MetricsError> {
    typed_w1(bond_lengths(generated), bond_lengths(reference), BOND_LENGTH_BIN, "bond lengths")
}

pub fn w1_bond_angles(generated: &[Molecule], reference: &[Molecule]) -> Result<W1Report, MetricsError> {
    typed_w1(bond_angle_map(generated), bond_angle_map(reference), BOND_ANGLE_BIN, "bond angles")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::{Atom, Bond};
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_w1(a: &[f64], b: &[f64]) -> f64 {
        let mut pts: Vec<(f64, usize)> = a.iter().map(|&x| (x, 0)).chain(b.iter().map(|&x| (x, 1))).collect();
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (mut fa, mut fb, mut sum) = (0.0, 0.0, 0.0);
        for w in 0..pts.len() {
            if pts[w].1 == 0 {
                fa += 1.0 / a.len() as f64;
            } else {
                fb += 1.0 / b.len() as f64;
            }
            if w + 1 < pts.len() {
                sum += (fa - fb).abs() * (pts[w + 1].0 - pts[w].0);
            }
        }
        sum
    }

    fn brute_tv(g: &[Molecule], r: &[Molecule], count: impl Fn(&Molecule) -> usize) -> f64 {
        let max = g.iter().chain(r).map(&count).max().unwrap();
        (0..=max)
            .map(|n| {
                let pg = g.iter().filter(|m| count(m) == n).count() as f64 / g.len() as f64;
                let pr = r.iter().filter(|m| count(m) == n).count() as f64 / r.len() as f64;
                (pg - pr).abs()
            })
            .sum()
    }

    fn random_set(seed: u64, n: usize) -> Vec<Molecule> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = synth::SynthConfig { max_heavy: 5, ..Default::default() };
        (0..n)
            .filter_map(|_| {
                let g = synth::random_graph(&mut rng, &cfg);
                synth::embed(&g, &mut rng, &cfg, 50)
            })
            .collect()
    }

    #[test]
    fn tv_examples() {
        let m = vec![synth::methane(); 3];
        let e = vec![synth::ethane(); 2];
        assert_eq!(tv_counts(&m, &m).unwrap(), (0.0, 0.0));
        let (ta, tb) = tv_counts(&m, &e).unwrap();
        // C: 1 vs 2, H: 4 vs 6, single bonds: 4 vs 7.
        assert_eq!(ta, 4.0);
        assert_eq!(tb, 2.0);
        assert!(matches!(tv_counts(&[], &m), Err(MetricsError::EmptySet(_))));
    }

    #[test]
    fn tv_matches_brute_force() {
        let (g, r) = (random_set(1, 15), random_set(2, 11));
        let (ta, tb) = tv_counts(&g, &r).unwrap();
        let oa: f64 = Element::ALL.iter().map(|&e| brute_tv(&g, &r, |m| m.count_element(e))).sum();
        let ob: f64 = BondOrder::ALL.iter().map(|&o| brute_tv(&g, &r, |m| m.count_bonds(o))).sum();
        assert!((ta - oa).abs() < 1e-12 && (tb - ob).abs() < 1e-12);
    }

    #[test]
    fn w1_point_masses() {
        let d = binned_w1(&[1.0], &[1.237], BOND_LENGTH_BIN);
        assert!((d - 0.237).abs() <= BOND_LENGTH_BIN, "{d}");
        assert_eq!(binned_w1(&[2.0, 3.0], &[3.0, 2.0], 0.01), 0.0);
    }

    #[test]
    fn w1_against_order_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(0.9..1.6)).collect();
            let b: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(1.0..1.8)).collect();
            let (binned, exact) = (binned_w1(&a, &b, BOND_LENGTH_BIN), exact_w1(&a, &b));
            assert!((binned - exact).abs() <= BOND_LENGTH_BIN, "{binned} {exact}");
        }
    }

    fn bent(angle_deg: f64) -> Molecule {
        let t = angle_deg.to_radians() / 2.0;
        Molecule::new(
            vec![
                Atom::new(Element::O, [0.0; 3]),
                Atom::new(Element::H, [0.96 * t.sin(), 0.96 * t.cos(), 0.0]),
                Atom::new(Element::H, [-0.96 * t.sin(), 0.96 * t.cos(), 0.0]),
            ],
            vec![Bond::new(0, 1, BondOrder::Single), Bond::new(0, 2, BondOrder::Single)],
        )
        .unwrap()
    }

    #[test]
    fn water_vs_linear() {
        let r = w1_bond_angles(&[bent(180.0)], &[bent(104.5)]).unwrap();
        assert!((r.value - 75.5).abs() <= BOND_ANGLE_BIN, "{}", r.value);
        assert_eq!(r.per_type.len(), 1);
        assert!(matches!(
            w1_bond_angles(&[synth::methane()], &[bent(104.5)]),
            Err(MetricsError::NoSharedTypes(_))
        ));
    }

    #[test]
    fn skipped_types_are_reported() {
        let r = w1_bond_lengths(&[synth::formaldehyde()], &[synth::methane()]).unwrap();
        assert_eq!(r.skipped, vec!["order2".to_string()]);
        assert_eq!(r.per_type.len(), 1);
    }

    #[test]
    fn angles_exclude_terminal_and_halogen_centres() {
        let ang = bond_angles(&synth::methane());
        assert_eq!(ang.len(), 6);
        assert!(ang.iter().all(|&(e, t)| e == Element::C && (t - 109.47).abs() < 0.5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn prop_self_zero_and_permutation(seed in 0u64..1000, rot in 0usize..7) {
            let s = random_set(seed, 6);
            prop_assume!(!s.is_empty());
            let mut p = s.clone();
            p.rotate_left(rot % s.len());
            prop_assert_eq!(tv_counts(&s, &s).unwrap(), (0.0, 0.0));
            prop_assert_eq!(w1_bond_lengths(&s, &s).unwrap().value, 0.0);
            let r = random_set(seed + 1, 5);
            prop_assume!(!r.is_empty());
            let (a, b) = (tv_counts(&s, &r).unwrap(), tv_counts(&p, &r).unwrap());
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
            let (x, y) = (w1_bond_lengths(&s, &r).unwrap(), w1_bond_lengths(&p, &r).unwrap());
            prop_assert!((x.value - y.value).abs() < 1e-12);
            if let (Ok(x), Ok(y)) = (w1_bond_angles(&s, &r), w1_bond_angles(&p, &r)) {
                prop_assert!((x.value - y.value).abs() < 1e-12);
            }
        }
    }
}
