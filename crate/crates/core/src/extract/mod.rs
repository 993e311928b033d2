//! Recovering molecular graphs from (possibly noisy) fields.

mod peaks;
mod refine;
mod table;

pub use peaks::{peak_extract, Peak};
pub use refine::{gradient_descent, Descent, GammaObjective, PositionObjective};
pub use table::{bond_length, covalent_radius, reference_bond_length, BOND_TABLE_VERSION};

use crate::field::{Channel, FieldError, FieldTensor, RbfParams};
use crate::molecule::{Atom, Bond, BondOrder, Element, Molecule, MoleculeError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("non-finite objective in the {stage} stage")]
    NonFinite { stage: &'static str },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub peak_threshold: f64,
    pub bond_margin: f64,
    pub bond_probe_radius: f64,
    pub bond_value_threshold: f64,
    pub opt_iterations: usize,
    pub opt_learning_rate: f64,
    pub gamma_keep_threshold: f64,
    pub refine_positions: bool,
    pub gamma_optimization: bool,
    /// Value-weighted component centres instead of plain voxel means.
    pub weighted_peaks: bool,
    /// Field parameters; defaults for the field's layout when absent.
    pub params: Option<RbfParams>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            peak_threshold: 0.3,
            bond_margin: 0.35,
            bond_probe_radius: 0.45,
            bond_value_threshold: 0.3,
            opt_iterations: 500,
            opt_learning_rate: 5.0,
            gamma_keep_threshold: 0.5,
            refine_positions: true,
            gamma_optimization: true,
            weighted_peaks: false,
            params: None,
        }
    }
}

/// A screened atom pair and the bond types whose channel supports it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondCandidate {
    pub i: usize,
    pub j: usize,
    /// Supported bond types with the largest channel value found near the midpoint.
    pub orders: Vec<(BondOrder, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondDiagnostic {
    pub i: usize,
    pub j: usize,
    pub order: u8,
    pub gamma: f64,
    pub probe_max: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionDiagnostics {
    pub component_voxels: Vec<usize>,
    pub bonds: Vec<BondDiagnostic>,
    pub removed_bonds: Vec<(usize, usize, u8)>,
    pub position_loss: Option<(f64, f64)>,
    pub gamma_loss: Option<(f64, f64)>,
    pub bond_table: &'static str,
}

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub molecule: Molecule,
    pub diagnostics: ExtractionDiagnostics,
}

/// Pairs closer than `L(a, b) + d1` whose bond channels exceed `r` somewhere
/// within `d2` of the pair midpoint.
pub fn candidate_bonds(atoms: &[(Element, [f64; 3])], field: &FieldTensor, config: &ExtractionConfig) -> Vec<BondCandidate> {
    let spec = field.spec();
    let layout = field.layout();
    let mut out = Vec::new();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let (ei, pi) = atoms[i];
            let (ej, pj) = atoms[j];
            let d = (0..3).map(|a| (pi[a] - pj[a]).powi(2)).sum::<f64>().sqrt();
            if !(d < reference_bond_length(ei, ej) + config.bond_margin) {
                continue;
            }
            let mid = [0, 1, 2].map(|a| (pi[a] + pj[a]) / 2.0);
            let probe = spec.voxels_within(mid, config.bond_probe_radius);
            let mut orders = Vec::new();
            for order in BondOrder::ALL {
                let Some(k) = layout.channel_index(Channel::Bond(order)) else {
                    continue;
                };
                let ch = field.channel(k);
                let best = probe.iter().map(|&f| ch[f]).fold(f64::NEG_INFINITY, f64::max);
                if best > config.bond_value_threshold {
                    orders.push((order, best));
                }
            }
            if !orders.is_empty() {
                out.push(BondCandidate { i, j, orders });
            }
        }
    }
    out
}

/// Peak extraction, position refinement, bond screening and amplitude
/// fitting, in that order.
pub fn extract_molecule(field: &FieldTensor, config: &ExtractionConfig) -> Result<ExtractionResult, ExtractError> {
    let layout = field.layout();
    let params = match &config.params {
        Some(p) => p.clone(),
        None => RbfParams::defaults_for(layout),
    };
    params.validate(layout)?;
    let spec = field.spec();

    let mut typed: Vec<(usize, Element, [f64; 3])> = Vec::new();
    let mut component_voxels = Vec::new();
    for (k, ch) in layout.channels.iter().enumerate() {
        if let Channel::Atom(e) = *ch {
            for p in peak_extract(field.channel(k), spec, config.peak_threshold, config.weighted_peaks) {
                typed.push((k, e, p.position));
                component_voxels.push(p.voxels);
            }
        }
    }

    let mut position_loss = None;
    if config.refine_positions && !typed.is_empty() {
        let start: Vec<(usize, [f64; 3])> = typed.iter().map(|&(k, _, p)| (k, p)).collect();
        let obj = PositionObjective::new(field, &params, &start);
        let x0 = start.iter().flat_map(|s| s.1).collect();
        let d = gradient_descent(x0, config.opt_iterations, config.opt_learning_rate, "position", |x| {
            obj.value_and_gradient(x)
        })?;
        for (i, t) in typed.iter_mut().enumerate() {
            t.2 = [d.x[3 * i], d.x[3 * i + 1], d.x[3 * i + 2]];
        }
        position_loss = Some((d.initial_loss, d.final_loss));
    }

    let atoms: Vec<(Element, [f64; 3])> = typed.iter().map(|&(_, e, p)| (e, p)).collect();
    let candidates = candidate_bonds(&atoms, field, config);
    let flat: Vec<(usize, usize, BondOrder, f64)> = candidates
        .iter()
        .flat_map(|c| c.orders.iter().map(move |&(o, v)| (c.i, c.j, o, v)))
        .collect();

    let mut gamma = vec![1.0; flat.len()];
    let mut gamma_loss = None;
    if config.gamma_optimization && !flat.is_empty() {
        let comps: Vec<(usize, [f64; 3])> = flat
            .iter()
            .map(|&(i, j, o, _)| {
                let k = layout.channel_index(Channel::Bond(o)).expect("candidate channels exist");
                (k, [0, 1, 2].map(|a| (atoms[i].1[a] + atoms[j].1[a]) / 2.0))
            })
            .collect();
        let obj = GammaObjective::new(field, &params, &comps);
        let d = gradient_descent(gamma, config.opt_iterations, config.opt_learning_rate, "gamma", |g| {
            obj.value_and_gradient(g)
        })?;
        gamma = d.x;
        gamma_loss = Some((d.initial_loss, d.final_loss));
    }

    let mut diag_bonds: Vec<BondDiagnostic> = flat
        .iter()
        .zip(&gamma)
        .map(|(&(i, j, o, v), &g)| BondDiagnostic {
            i,
            j,
            order: o.value(),
            gamma: g,
            probe_max: v,
            kept: false,
        })
        .collect();
    let mut bonds = Vec::new();
    let mut start = 0;
    for c in &candidates {
        let group = start..start + c.orders.len();
        start = group.end;
        let best = group
            .clone()
            .filter(|&k| diag_bonds[k].gamma >= config.gamma_keep_threshold)
            .max_by(|&a, &b| {
                let (x, y) = (&diag_bonds[a], &diag_bonds[b]);
                x.gamma
                    .total_cmp(&y.gamma)
                    .then(x.probe_max.total_cmp(&y.probe_max))
                    .then(b.cmp(&a))
            });
        if let Some(k) = best {
            diag_bonds[k].kept = true;
            let order = BondOrder::from_value(diag_bonds[k].order).expect("valid order");
            bonds.push(Bond::new(c.i, c.j, order));
        }
    }
    let removed_bonds = diag_bonds.iter().filter(|b| !b.kept).map(|b| (b.i, b.j, b.order)).collect();
    let molecule = Molecule::new(atoms.iter().map(|&(e, p)| Atom::new(e, p)).collect(), bonds)?;
    Ok(ExtractionResult {
        molecule,
        diagnostics: ExtractionDiagnostics {
            component_voxels,
            bonds: diag_bonds,
            removed_bonds,
            position_loss,
            gamma_loss,
            bond_table: BOND_TABLE_VERSION,
        },
    })
}

/// RMSD between same-element atoms of two molecules, pairing closest atoms
/// first. `None` when the element counts differ or the molecules are empty.
pub fn matched_rmsd(reference: &Molecule, extracted: &Molecule) -> Option<f64> {
    if reference.is_empty() || reference.len() != extracted.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in reference.atoms().iter().enumerate() {
        for (j, b) in extracted.atoms().iter().enumerate() {
            if a.element == b.element {
                let d2 = (0..3).map(|k| (a.position[k] - b.position[k]).powi(2)).sum::<f64>();
                pairs.push((d2, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut used_a, mut used_b) = (vec![false; reference.len()], vec![false; extracted.len()]);
    let (mut sum, mut matched) = (0.0, 0);
    for (d2, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            sum += d2;
            matched += 1;
        }
    }
    (matched == reference.len()).then(|| (sum / matched as f64).sqrt())
}

/// Adds independent `U(0, λ)` noise to every voxel of every channel.
pub fn add_uniform_noise<R: Rng + ?Sized>(field: &mut FieldTensor, lambda: f64, rng: &mut R) {
    if lambda <= 0.0 {
        return;
    }
    for v in field.data_mut() {
        *v += rng.random_range(0.0..lambda);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{grid_default, voxelize, DatasetKind, FieldLayout};
    use crate::molecule::{canonical_key, fixtures};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qm9() -> FieldLayout {
        FieldLayout::qm9(grid_default(DatasetKind::Qm9))
    }

    fn ethane() -> Molecule {
        let (c1, c2) = ([-0.765, 0.0, 0.0], [0.765, 0.0, 0.0]);
        let mut atoms = vec![Atom::new(Element::C, c1), Atom::new(Element::C, c2)];
        let mut bonds = vec![Bond::new(0, 1, BondOrder::Single)];
        for (ci, c, sx) in [(0usize, c1, -1.0), (1, c2, 1.0)] {
            for k in 0..3 {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / 3.0 + if ci == 1 { std::f64::consts::PI / 3.0 } else { 0.0 };
                atoms.push(Atom::new(Element::H, [c[0] + sx * 0.363, 1.027 * phi.cos(), 1.027 * phi.sin()]));
                bonds.push(Bond::new(ci, atoms.len() - 1, BondOrder::Single));
            }
        }
        Molecule::new(atoms, bonds).unwrap()
    }

    #[test]
    fn methane_round_trip() {
        let l = qm9();
        let m = fixtures::methane();
        let f = voxelize(&m, &l, &RbfParams::defaults_for(&l), true).unwrap();
        let placed = crate::field::place_molecule(&m, &l.spec, true);
        let r = extract_molecule(&f, &ExtractionConfig::default()).unwrap();
        assert_eq!(canonical_key(&r.molecule), canonical_key(&m));
        assert!(matched_rmsd(&placed, &r.molecule).unwrap() < 0.05);
        assert!(r.diagnostics.removed_bonds.is_empty());
    }

    #[test]
    fn empty_field_gives_empty_molecule() {
        let r = extract_molecule(&FieldTensor::zeros(qm9()), &ExtractionConfig::default()).unwrap();
        assert!(r.molecule.is_empty());
    }

    #[test]
    fn screening_and_probing() {
        let l = qm9();
        let cc = Molecule::new(
            vec![Atom::new(Element::C, [-0.77, 0.0, 0.0]), Atom::new(Element::C, [0.77, 0.0, 0.0])],
            vec![Bond::new(0, 1, BondOrder::Single)],
        )
        .unwrap();
        let f = voxelize(&cc, &l, &RbfParams::defaults_for(&l), false).unwrap();
        let atoms = [(Element::C, [-0.77, 0.0, 0.0]), (Element::C, [0.77, 0.0, 0.0])];
        let c = candidate_bonds(&atoms, &f, &ExtractionConfig::default());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].orders.len(), 1);
        assert_eq!(c[0].orders[0].0, BondOrder::Single);
        let far = [(Element::C, [0.0; 3]), (Element::H, [3.0, 0.0, 0.0])];
        assert!(candidate_bonds(&far, &f, &ExtractionConfig::default()).is_empty());
        assert!(candidate_bonds(&atoms, &FieldTensor::zeros(l), &ExtractionConfig::default()).is_empty());
    }

    #[test]
    fn noisy_ethane_recovers_graph() {
        let l = qm9();
        let m = ethane();
        let params = RbfParams::defaults_for(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let mut f = voxelize(&m, &l, &params, true).unwrap();
            add_uniform_noise(&mut f, 0.1, &mut rng);
            let r = extract_molecule(&f, &ExtractionConfig::default()).unwrap();
            assert_eq!(canonical_key(&r.molecule), canonical_key(&m));
        }
    }

    #[test]
    fn spurious_candidate_is_removed() {
        let l = qm9();
        let params = RbfParams::defaults_for(&l);
        // O=C with a strong single-bond ghost painted at the same midpoint
        let spec = l.spec;
        let c = spec.position([16, 16, 16]);
        let m = Molecule::new(
            vec![
                Atom::new(Element::C, [c[0] - 0.62, c[1], c[2]]),
                Atom::new(Element::O, [c[0] + 0.62, c[1], c[2]]),
            ],
            vec![Bond::new(0, 1, BondOrder::Double)],
        )
        .unwrap();
        let mut f = voxelize(&m, &l, &params, false).unwrap();
        let k1 = l.channel_index(Channel::Bond(BondOrder::Single)).unwrap();
        crate::field::add_gaussian(f.channel_mut(k1), &spec, c, 0.224, 0.35);
        let r = extract_molecule(&f, &ExtractionConfig::default()).unwrap();
        assert_eq!(r.molecule.bonds(), &[Bond::new(0, 1, BondOrder::Double)]);
        let ghost = r.diagnostics.bonds.iter().find(|b| b.order == 1).unwrap();
        assert!(!ghost.kept && ghost.gamma < 0.5);
        assert_eq!(r.diagnostics.removed_bonds, vec![(0, 1, 1)]);
    }
}
