use super::MetricsError;
use crate::molecule::{canonical_key, formal_neutrality, validity, CanonicalKey, Molecule};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphQuality {
    pub neutrality_atom: f64,
    pub neutrality_mol: f64,
    pub validity: f64,
    /// Share of valid molecules whose canonical key is absent from training.
    pub novelty: f64,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn neutrality_validity_novelty(
    generated: &[Molecule],
    train_keys: &HashSet<CanonicalKey>,
) -> Result<GraphQuality, MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::EmptySet("neutrality_validity_novelty"));
    }
    let (mut atoms, mut neutral_atoms, mut neutral_mols, mut valid, mut novel) = (0, 0, 0, 0, 0);
    for m in generated {
        let (flags, all) = formal_neutrality(m);
        atoms += flags.len();
        neutral_atoms += flags.iter().filter(|&&f| f).count();
        neutral_mols += usize::from(all && !m.is_empty());
        if validity(m) {
            valid += 1;
            novel += usize::from(!train_keys.contains(&canonical_key(m)));
        }
    }
    Ok(GraphQuality {
        neutrality_atom: percent(neutral_atoms, atoms),
        neutrality_mol: percent(neutral_mols, generated.len()),
        validity: percent(valid, generated.len()),
        novelty: percent(novel, valid),
    })
}

/// Inclusive range of atom counts forming one conditioning bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountBin {
    pub low: usize,
    pub high: usize,
}

impl CountBin {
    pub fn new(low: usize, high: usize) -> Self {
        assert!(low <= high, "empty count bin");
        Self { low, high }
    }

    pub fn single(n: usize) -> Self {
        Self { low: n, high: n }
    }

    pub fn contains(&self, n: usize) -> bool {
        self.low <= n && n <= self.high
    }
}

/// Generated atom count together with the index of the bin it was
/// conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionedCount {
    pub bin: Option<usize>,
    pub atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountFidelity {
    pub accuracy: f64,
    pub mean_l1: f64,
    /// Fraction of the summed L1 coming from molecules below their bin.
    pub l1_lower: f64,
}

/// Counts outside every bin fall into a singleton bin of their own.
pub fn count_fidelity(samples: &[ConditionedCount], bins: &[CountBin]) -> Result<CountFidelity, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySet("count_fidelity"));
    }
    let (mut hits, mut total, mut lower) = (0usize, 0.0, 0.0);
    for (k, s) in samples.iter().enumerate() {
        let target = s
            .bin
            .and_then(|b| bins.get(b))
            .copied()
            .ok_or(MetricsError::MissingCondition(k))?;
        let got = bins.iter().copied().find(|b| b.contains(s.atoms)).unwrap_or(CountBin::single(s.atoms));
        if got == target {
            hits += 1;
            continue;
        }
        let l1 = got.high.abs_diff(target.low).min(target.high.abs_diff(got.low)) as f64;
        total += l1;
        if got.high < target.low {
            lower += l1;
        }
    }
    Ok(CountFidelity {
        accuracy: percent(hits, samples.len()),
        mean_l1: total / samples.len() as f64,
        l1_lower: if total == 0.0 { 0.0 } else { lower / total },
    })
}
