//! Variance-preserving diffusion over field tensors.

mod oracle;
mod sampler;
mod schedule;
mod toy;

pub use oracle::{oracle_predict_noise, OracleDenoiser};
pub use sampler::{sample, sample_rng, sample_stream, standard_normal};
pub use schedule::{
    build_schedule, build_schedule_with, cosine_alpha, GroupSchedule, NoiseSchedule, ScheduleReading, DEFAULT_NU_ATOMS,
    DEFAULT_NU_BONDS, DEFAULT_OFFSET, DEFAULT_STEPS,
};
pub use toy::{
    read_fmgd, time_embedding, train_toy_denoiser, write_fmgd, write_loss_trace, Batch, ToyArch, ToyDenoiser,
    TrainConfig, TrainingOutcome, FMGD_MAGIC, FMGD_VERSION,
};

use crate::field::{ChannelGroup, FieldError, FieldTensor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("step {step} outside 0..={steps}")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("posterior needs s < t, got s = {s}, t = {t}")]
    InvalidStepPair { s: usize, t: usize },
    #[error("signal amplitude is zero at step {0}")]
    ZeroSignal(usize),
    #[error("noise amplitude is zero at step {0}")]
    ZeroNoise(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no dataset element has {0} atoms")]
    UnmatchedCondition(usize),
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("training diverged at iteration {0}")]
    Diverged(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed FMGD data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Conditioning signal for the denoiser. The default value is the null
/// condition used for unconditional evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Condition {
    pub atom_count: Option<usize>,
    pub property: Option<f64>,
}

impl Condition {
    pub fn null() -> Self {
        Self::default()
    }

    pub fn atoms(n: usize) -> Self {
        Self {
            atom_count: Some(n),
            property: None,
        }
    }

    pub fn is_null(&self) -> bool {
        self.atom_count.is_none() && self.property.is_none()
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.atom_count == Some(0) {
            return Err(DiffusionError::InvalidCondition("atom count must be at least 1".into()));
        }
        if let Some(c) = self.property {
            if !c.is_finite() {
                return Err(DiffusionError::InvalidCondition("property must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A noise predictor `ε̂(u_t, t, y)`.
pub trait Denoiser: Send + Sync {
    fn predict_noise(
        &self,
        u_t: &FieldTensor,
        step: usize,
        schedule: &NoiseSchedule,
        cond: &Condition,
    ) -> Result<FieldTensor, DiffusionError>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(
        &self,
        u_t: &FieldTensor,
        step: usize,
        schedule: &NoiseSchedule,
        cond: &Condition,
    ) -> Result<FieldTensor, DiffusionError> {
        (**self).predict_noise(u_t, step, schedule, cond)
    }
}

/// `(α, σ)` of every channel of `field` at `step`.
pub(crate) fn channel_coefficients(field: &FieldTensor, schedule: &NoiseSchedule, step: usize) -> Vec<(f64, f64)> {
    field
        .channels()
        .iter()
        .map(|c| (schedule.alpha(c.group(), step), schedule.sigma(c.group(), step)))
        .collect()
}

fn zip_channels(
    a: &FieldTensor,
    b: &FieldTensor,
    coeffs: &[(f64, f64)],
    f: impl Fn(f64, f64, (f64, f64)) -> f64,
) -> Result<FieldTensor, DiffusionError> {
    a.ensure_same_layout(b)?;
    let mut out = FieldTensor::zeros(a.layout().clone());
    for (k, &c) in coeffs.iter().enumerate() {
        for ((o, &x), &y) in out.channel_mut(k).iter_mut().zip(a.channel(k)).zip(b.channel(k)) {
            *o = f(x, y, c);
        }
    }
    Ok(out)
}

/// `u_t = α_t u_0 + σ_t ε`, with each channel following its group's schedule.
pub fn forward_sample(
    u0: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
    noise: &FieldTensor,
) -> Result<FieldTensor, DiffusionError> {
    schedule.check_step(step)?;
    let coeffs = channel_coefficients(u0, schedule, step);
    zip_channels(u0, noise, &coeffs, |x, e, (a, s)| a * x + s * e)
}

/// `û = u_t/α_t − σ_t ε̂/α_t`.
pub fn predicted_u0(
    u_t: &FieldTensor,
    eps_hat: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
) -> Result<FieldTensor, DiffusionError> {
    schedule.check_step(step)?;
    let coeffs = channel_coefficients(u_t, schedule, step);
    if coeffs.iter().any(|&(a, _)| a <= 0.0) {
        return Err(DiffusionError::ZeroSignal(step));
    }
    zip_channels(u_t, eps_hat, &coeffs, |x, e, (a, s)| x / a - s * e / a)
}

/// `ε̃ = (1+β) ε_cond − β ε_uncond`.
pub fn guided_noise(eps_cond: &FieldTensor, eps_uncond: &FieldTensor, beta: f64) -> Result<FieldTensor, DiffusionError> {
    let coeffs = vec![(0.0, 0.0); eps_cond.channels().len()];
    zip_channels(eps_cond, eps_uncond, &coeffs, |c, u, _| (1.0 + beta) * c - beta * u)
}

/// Coefficients of `q(u_s | u_t, u_0) = N(c_t·u_t + c_0·u_0, var)` for one channel group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefficients {
    pub c_t: f64,
    pub c_0: f64,
    pub var: f64,
}

/// Posterior coefficients for `s < t`. At `s = 0` the endpoint is taken as
/// noise-free (`α = 1`, `σ = 0`) so the mean is exactly `u_0`.
pub fn posterior_coefficients(
    schedule: &NoiseSchedule,
    group: ChannelGroup,
    s: usize,
    t: usize,
) -> Result<PosteriorCoefficients, DiffusionError> {
    if s >= t {
        return Err(DiffusionError::InvalidStepPair { s, t });
    }
    schedule.check_step(t)?;
    let (a_s, s_s) = if s == 0 {
        (1.0, 0.0)
    } else {
        (schedule.alpha(group, s), schedule.sigma(group, s))
    };
    if a_s <= 0.0 {
        return Err(DiffusionError::ZeroSignal(s));
    }
    let (a_t, s_t) = (schedule.alpha(group, t), schedule.sigma(group, t));
    Ok(posterior_from_amplitudes(a_s, s_s, a_t, s_t))
}

pub(crate) fn posterior_from_amplitudes(a_s: f64, s_s: f64, a_t: f64, s_t: f64) -> PosteriorCoefficients {
    let a_ts = a_t / a_s;
    let var_ts = s_t * s_t - a_ts * a_ts * s_s * s_s;
    let v_t = s_t * s_t;
    PosteriorCoefficients {
        c_t: a_ts * s_s * s_s / v_t,
        c_0: a_s * var_ts / v_t,
        var: (var_ts * s_s * s_s / v_t).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: FieldTensor,
    /// Standard deviation per channel.
    pub std: Vec<f64>,
}

pub fn posterior_params(
    u_t: &FieldTensor,
    u0_hat: &FieldTensor,
    s: usize,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Posterior, DiffusionError> {
    let atoms = posterior_coefficients(schedule, ChannelGroup::Atoms, s, t)?;
    let bonds = posterior_coefficients(schedule, ChannelGroup::Bonds, s, t)?;
    let per_channel: Vec<PosteriorCoefficients> = u_t
        .channels()
        .iter()
        .map(|c| match c.group() {
            ChannelGroup::Atoms => atoms,
            ChannelGroup::Bonds => bonds,
        })
        .collect();
    let coeffs: Vec<(f64, f64)> = per_channel.iter().map(|p| (p.c_t, p.c_0)).collect();
    let mean = zip_channels(u_t, u0_hat, &coeffs, |x, y, (ct, c0)| ct * x + c0 * y)?;
    Ok(Posterior {
        mean,
        std: per_channel.iter().map(|p| p.var.sqrt()).collect(),
    })
}

/// Mean-squared `L_simple` between injected and predicted noise.
pub fn simple_loss(eps: &FieldTensor, eps_hat: &FieldTensor) -> f64 {
    eps.squared_distance(eps_hat) / eps.len() as f64
}
