use super::ExtractError;
use crate::field::{FieldTensor, RbfParams};
use std::collections::BTreeSet;

/// Residuals are evaluated on voxels within this many σ of a starting centre.
const SUPPORT_SIGMAS: f64 = 3.0;

/// Voxels of one channel that enter an objective, with the components that
/// model them.
#[derive(Debug, Clone)]
struct SampleSet {
    sigma: f64,
    amplitude: f64,
    points: Vec<[f64; 3]>,
    values: Vec<f64>,
    members: Vec<usize>,
}

fn sample_sets(field: &FieldTensor, params: &RbfParams, components: &[(usize, [f64; 3])]) -> (Vec<SampleSet>, usize) {
    let spec = field.spec();
    let mut sets = Vec::new();
    let mut total = 0;
    for k in 0..field.channels().len() {
        let members: Vec<usize> = (0..components.len()).filter(|&i| components[i].0 == k).collect();
        if members.is_empty() {
            continue;
        }
        let sigma = params.sigma[k];
        let mut voxels = BTreeSet::new();
        for &i in &members {
            voxels.extend(spec.voxels_within(components[i].1, SUPPORT_SIGMAS * sigma));
        }
        let channel = field.channel(k);
        let points: Vec<[f64; 3]> = voxels.iter().map(|&f| spec.position(spec.unflat(f))).collect();
        let values = voxels.iter().map(|&f| channel[f]).collect();
        total += points.len();
        sets.push(SampleSet {
            sigma,
            amplitude: params.amplitude[k],
            points,
            values,
            members,
        });
    }
    (sets, total.max(1))
}

fn gauss(x: &[f64; 3], m: &[f64], inv2s2: f64) -> f64 {
    let d2 = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2) + (x[2] - m[2]).powi(2);
    (-d2 * inv2s2).exp()
}

/// Mean squared residual of atom channels against `γ_a Σ exp(−‖x − m_i‖²/2σ_a²)`
/// as a function of all atom centres (flattened `3n` vector).
#[derive(Debug, Clone)]
pub struct PositionObjective {
    sets: Vec<SampleSet>,
    n: usize,
    norm: f64,
}

impl PositionObjective {
    /// `atoms` are `(channel index, starting centre)`; the evaluated voxels are
    /// fixed from the starting centres.
    pub fn new(field: &FieldTensor, params: &RbfParams, atoms: &[(usize, [f64; 3])]) -> Self {
        let (sets, total) = sample_sets(field, params, atoms);
        Self {
            sets,
            n: atoms.len(),
            norm: total as f64,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; 3 * self.n];
        let v = self.eval(x, Some(&mut g));
        (v, g)
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let mut loss = 0.0;
        for s in &self.sets {
            let inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
            let mut e = vec![0.0; s.members.len()];
            for (p, &u) in s.points.iter().zip(&s.values) {
                let mut model = 0.0;
                for (ek, &i) in e.iter_mut().zip(&s.members) {
                    *ek = gauss(p, &x[3 * i..3 * i + 3], inv2s2);
                    model += *ek;
                }
                let r = u - s.amplitude * model;
                loss += r * r;
                if let Some(g) = grad.as_deref_mut() {
                    // ∂/∂m_i of r² = −2 r γ e_i (x − m_i)/σ²
                    let c = -2.0 * r * s.amplitude * 2.0 * inv2s2 / self.norm;
                    for (ek, &i) in e.iter().zip(&s.members) {
                        for a in 0..3 {
                            g[3 * i + a] += c * ek * (p[a] - x[3 * i + a]);
                        }
                    }
                }
            }
        }
        loss / self.norm
    }
}

/// Mean squared residual of bond channels against `Σ γ_k exp(−‖x − m_k‖²/2σ_b²)`
/// as a function of the candidate amplitudes, centres fixed.
#[derive(Debug, Clone)]
pub struct GammaObjective {
    sets: Vec<SampleSet>,
    /// Per set, per point, the basis value of each member.
    basis: Vec<Vec<Vec<f64>>>,
    n: usize,
    norm: f64,
}

impl GammaObjective {
    /// `candidates` are `(bond channel index, bond midpoint)`.
    pub fn new(field: &FieldTensor, params: &RbfParams, candidates: &[(usize, [f64; 3])]) -> Self {
        let (sets, total) = sample_sets(field, params, candidates);
        let basis = sets
            .iter()
            .map(|s| {
                let inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
                s.points
                    .iter()
                    .map(|p| s.members.iter().map(|&i| gauss(p, &candidates[i].1, inv2s2)).collect())
                    .collect()
            })
            .collect();
        Self {
            sets,
            basis,
            n: candidates.len(),
            norm: total as f64,
        }
    }

    pub fn value(&self, gamma: &[f64]) -> f64 {
        self.eval(gamma, None)
    }

    pub fn value_and_gradient(&self, gamma: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.n];
        let v = self.eval(gamma, Some(&mut g));
        (v, g)
    }

    fn eval(&self, gamma: &[f64], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let mut loss = 0.0;
        for (s, basis) in self.sets.iter().zip(&self.basis) {
            for (&u, e) in s.values.iter().zip(basis) {
                let model: f64 = e.iter().zip(&s.members).map(|(ek, &i)| gamma[i] * ek).sum();
                let r = u - model;
                loss += r * r;
                if let Some(g) = grad.as_deref_mut() {
                    for (ek, &i) in e.iter().zip(&s.members) {
                        g[i] -= 2.0 * r * ek / self.norm;
                    }
                }
            }
        }
        loss / self.norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub x: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Plain gradient descent. A step that would raise the loss is retried with
/// half the rate, and the reduced rate is kept, so the loss never increases.
pub fn gradient_descent(
    x0: Vec<f64>,
    iterations: usize,
    learning_rate: f64,
    stage: &'static str,
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> Result<Descent, ExtractError> {
    let mut x = x0;
    let (mut loss, mut grad) = f(&x);
    if !loss.is_finite() {
        return Err(ExtractError::NonFinite { stage });
    }
    let initial_loss = loss;
    let mut lr = learning_rate;
    'outer: for _ in 0..iterations {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - lr * g).collect();
            let (l, g) = f(&trial);
            if l.is_finite() && l <= loss {
                x = trial;
                loss = l;
                grad = g;
                break;
            }
            lr *= 0.5;
            if lr < learning_rate * 1e-12 {
                break 'outer;
            }
        }
    }
    if !loss.is_finite() {
        return Err(ExtractError::NonFinite { stage });
    }
    Ok(Descent {
        x,
        initial_loss,
        final_loss: loss,
    })
}
