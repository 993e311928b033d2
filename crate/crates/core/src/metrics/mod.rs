//! Evaluation of generated molecule sets against reference data.

mod chirality;
mod counts;
mod distributions;
mod fingerprint;

pub use chirality::{chirality_distribution, ChiralityReport, DEGENERATE_DETERMINANT, DETERMINANT_BIN};
pub use counts::{count_fidelity, neutrality_validity_novelty, ConditionedCount, CountBin, CountFidelity, GraphQuality};
pub use distributions::{
    binned_w1, bond_angles, tv_counts, w1_bond_angles, w1_bond_lengths, W1Report, BOND_ANGLE_BIN, BOND_LENGTH_BIN,
};
pub use fingerprint::{
    fingerprint, fingerprint_with, tanimoto, Fingerprint, DEFAULT_FINGERPRINT_BITS, DEFAULT_FINGERPRINT_RADIUS,
};

use crate::molecule::{validity, CanonicalKey, Molecule, TetrahedralQuery};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty set passed to {0}")]
    EmptySet(&'static str),
    #[error("no type shared between the two sets for {0}")]
    NoSharedTypes(&'static str),
    #[error("generated molecule {0} has no usable conditioning bin")]
    MissingCondition(usize),
}

/// Mean over valid generated molecules of the best Tanimoto similarity to any
/// test molecule.
pub fn mst(generated: &[Molecule], test: &[Molecule]) -> Result<f64, MetricsError> {
    let valid: Vec<Fingerprint> = generated.iter().filter(|m| validity(m)).map(fingerprint).collect();
    if valid.is_empty() {
        return Err(MetricsError::EmptySet("mst (valid generated)"));
    }
    if test.is_empty() {
        return Err(MetricsError::EmptySet("mst (test)"));
    }
    let test: Vec<Fingerprint> = test.iter().map(fingerprint).collect();
    Ok(fingerprint::max_similarity_mean(&valid, &test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub neutrality_atom: f64,
    pub neutrality_mol: f64,
    pub validity: f64,
    pub novelty: f64,
    pub tv_a: f64,
    pub tv_b: f64,
    pub mst: Option<f64>,
    pub ba: Option<f64>,
    pub bl: Option<f64>,
    pub ba_skipped: Vec<String>,
    pub bl_skipped: Vec<String>,
    pub chirality: ChiralityReport,
    pub count_fidelity: Option<CountFidelity>,
}

/// Every set-level metric that needs only the two sets and the training keys.
/// Metrics that cannot be formed (no valid molecules, no shared bond types)
/// are left empty rather than failing the whole report.
pub fn evaluate(
    generated: &[Molecule],
    reference: &[Molecule],
    train_keys: &HashSet<CanonicalKey>,
    query: &TetrahedralQuery,
) -> Result<MetricsReport, MetricsError> {
    let q = neutrality_validity_novelty(generated, train_keys)?;
    let (tv_a, tv_b) = tv_counts(generated, reference)?;
    let ba = w1_bond_angles(generated, reference).ok();
    let bl = w1_bond_lengths(generated, reference).ok();
    Ok(MetricsReport {
        neutrality_atom: q.neutrality_atom,
        neutrality_mol: q.neutrality_mol,
        validity: q.validity,
        novelty: q.novelty,
        tv_a,
        tv_b,
        mst: mst(generated, reference).ok(),
        ba: ba.as_ref().map(|r| r.value),
        bl: bl.as_ref().map(|r| r.value),
        ba_skipped: ba.map(|r| r.skipped).unwrap_or_default(),
        bl_skipped: bl.map(|r| r.skipped).unwrap_or_default(),
        chirality: chirality_distribution(generated, query),
        count_fidelity: None,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// `metric,value` rows; absent metrics have an empty value.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "metric,value")?;
        let rows = [
            ("neutrality_atom", self.neutrality_atom.to_string()),
            ("neutrality_mol", self.neutrality_mol.to_string()),
            ("validity", self.validity.to_string()),
            ("novelty", self.novelty.to_string()),
            ("tv_a", self.tv_a.to_string()),
            ("tv_b", self.tv_b.to_string()),
            ("mst", opt(self.mst)),
            ("ba", opt(self.ba)),
            ("bl", opt(self.bl)),
            ("chirality_sign_fraction", self.chirality.sign_fraction.to_string()),
            ("chirality_centers", self.chirality.determinants.len().to_string()),
            ("count_accuracy", opt(self.count_fidelity.map(|c| c.accuracy))),
            ("count_mean_l1", opt(self.count_fidelity.map(|c| c.mean_l1))),
            ("count_l1_lower", opt(self.count_fidelity.map(|c| c.l1_lower))),
        ];
        for (k, v) in rows {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

impl ChiralityReport {
    pub fn write_determinants_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "index,determinant")?;
        for (k, d) in self.determinants.iter().enumerate() {
            writeln!(w, "{k},{d}")?;
        }
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "bin_start,bin_end,count")?;
        for &(start, n) in &self.histogram {
            writeln!(w, "{start},{},{n}", start + DETERMINANT_BIN)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::canonical_key;
    use crate::synth;

    fn brute_mst(g: &[Molecule], t: &[Molecule]) -> f64 {
        let g: Vec<&Molecule> = g.iter().filter(|m| validity(m)).collect();
        let mut sum = 0.0;
        for a in &g {
            let mut best = 0.0f64;
            for b in t {
                let (fa, fb) = (fingerprint(a), fingerprint(b));
                let inter = (0..fa.n_bits()).filter(|&k| fa.get(k) && fb.get(k)).count();
                let union = (0..fa.n_bits()).filter(|&k| fa.get(k) || fb.get(k)).count();
                best = best.max(if union == 0 { 0.0 } else { inter as f64 / union as f64 });
            }
            sum += best;
        }
        sum / g.len() as f64
    }

    #[test]
    fn mst_examples() {
        let test = vec![synth::methane(), synth::ethanol(), synth::formaldehyde()];
        assert_eq!(mst(&test[..2], &test).unwrap(), 1.0);
        let gen = vec![synth::ethane(), synth::dimethyl_ether(), synth::water()];
        assert!((mst(&gen, &test).unwrap() - brute_mst(&gen, &test)).abs() < 1e-12);
        assert!(mst(&[], &test).is_err());
        assert!(mst(&gen, &[]).is_err());
    }

    #[test]
    fn report_round_trips_json() {
        let gen = vec![synth::ethanol(), synth::ethane()];
        let reference = vec![synth::ethanol(), synth::methane()];
        let train: HashSet<_> = reference.iter().map(canonical_key).collect();
        let r = evaluate(&gen, &reference, &train, &TetrahedralQuery::default()).unwrap();
        assert_eq!(r.novelty, 50.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"neutrality_atom\"") && json.contains("\"tv_b\""));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("validity,100\n"));
    }

    #[test]
    fn self_comparison_is_zero() {
        let s = vec![synth::ethanol(), synth::benzene(), synth::formaldehyde()];
        let r = evaluate(&s, &s, &HashSet::new(), &TetrahedralQuery::default()).unwrap();
        assert_eq!((r.tv_a, r.tv_b, r.ba, r.bl, r.mst), (0.0, 0.0, Some(0.0), Some(0.0), Some(1.0)));
    }
}
