use super::{channel_coefficients, Condition, Denoiser, DiffusionError, NoiseSchedule};
use crate::field::FieldTensor;

/// Posterior weights of each dataset element given `u_t`, normalised via log-sum-exp.
pub(crate) fn oracle_weights(
    dataset: &[&FieldTensor],
    u_t: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    schedule.check_step(step)?;
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let coeffs = channel_coefficients(u_t, schedule, step);
    // step 0 is the noise-free endpoint of the reverse process
    if step == 0 || coeffs.iter().any(|&(_, s)| s <= 0.0) {
        return Err(DiffusionError::ZeroNoise(step));
    }
    let mut logw = Vec::with_capacity(dataset.len());
    for u in dataset {
        u_t.ensure_same_layout(u)?;
        let mut acc = 0.0;
        for (k, &(a, s)) in coeffs.iter().enumerate() {
            let d2: f64 = u_t
                .channel(k)
                .iter()
                .zip(u.channel(k))
                .map(|(x, y)| (x - a * y) * (x - a * y))
                .sum();
            acc -= d2 / (2.0 * s * s);
        }
        logw.push(acc);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logw.iter().map(|l| (l - max).exp()).sum();
    Ok(logw.iter().map(|l| (l - max).exp() / z).collect())
}

fn predict_from(
    dataset: &[&FieldTensor],
    u_t: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
) -> Result<FieldTensor, DiffusionError> {
    let w = oracle_weights(dataset, u_t, step, schedule)?;
    let coeffs = channel_coefficients(u_t, schedule, step);
    let mut mean = vec![0.0; u_t.len()];
    for (u, &wk) in dataset.iter().zip(&w) {
        if wk == 0.0 {
            continue;
        }
        for (m, &v) in mean.iter_mut().zip(u.data()) {
            *m += wk * v;
        }
    }
    let mut out = FieldTensor::zeros(u_t.layout().clone());
    let n = u_t.spec().n_points();
    for (k, &(a, s)) in coeffs.iter().enumerate() {
        let m = &mean[k * n..(k + 1) * n];
        for ((o, &x), &mk) in out.channel_mut(k).iter_mut().zip(u_t.channel(k)).zip(m) {
            *o = (x - a * mk) / s;
        }
    }
    Ok(out)
}

/// Bayes-optimal noise prediction for a finite dataset:
/// `ε̂ = (u_t − α_t Σ_k w_k u^(k)) / σ_t`.
pub fn oracle_predict_noise(
    dataset: &[FieldTensor],
    u_t: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
) -> Result<FieldTensor, DiffusionError> {
    let refs: Vec<&FieldTensor> = dataset.iter().collect();
    predict_from(&refs, u_t, step, schedule)
}

/// Oracle denoiser over a finite dataset. With atom counts attached, an
/// atom-count condition restricts the posterior to matching elements.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    dataset: Vec<FieldTensor>,
    atom_counts: Option<Vec<usize>>,
}

impl OracleDenoiser {
    pub fn new(dataset: Vec<FieldTensor>) -> Result<Self, DiffusionError> {
        let first = dataset.first().ok_or(DiffusionError::EmptyDataset)?;
        for u in &dataset[1..] {
            first.ensure_same_layout(u)?;
        }
        Ok(Self {
            dataset,
            atom_counts: None,
        })
    }

    pub fn with_atom_counts(mut self, counts: Vec<usize>) -> Result<Self, DiffusionError> {
        if counts.len() != self.dataset.len() {
            return Err(DiffusionError::InvalidConfig(format!(
                "{} atom counts for {} fields",
                counts.len(),
                self.dataset.len()
            )));
        }
        self.atom_counts = Some(counts);
        Ok(self)
    }

    pub fn dataset(&self) -> &[FieldTensor] {
        &self.dataset
    }

    fn subset(&self, cond: &Condition) -> Result<Vec<&FieldTensor>, DiffusionError> {
        match (cond.atom_count, &self.atom_counts) {
            (Some(n), Some(counts)) => {
                let sel: Vec<&FieldTensor> = self
                    .dataset
                    .iter()
                    .zip(counts)
                    .filter(|(_, &c)| c == n)
                    .map(|(u, _)| u)
                    .collect();
                if sel.is_empty() {
                    return Err(DiffusionError::UnmatchedCondition(n));
                }
                Ok(sel)
            }
            _ => Ok(self.dataset.iter().collect()),
        }
    }
}

impl Denoiser for OracleDenoiser {
    fn predict_noise(
        &self,
        u_t: &FieldTensor,
        step: usize,
        schedule: &NoiseSchedule,
        cond: &Condition,
    ) -> Result<FieldTensor, DiffusionError> {
        cond.validate()?;
        let subset = self.subset(cond)?;
        predict_from(&subset, u_t, step, schedule)
    }
}
