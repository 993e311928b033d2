use super::DiffusionError;
use crate::field::ChannelGroup;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_NU_ATOMS: f64 = 1.0;
pub const DEFAULT_NU_BONDS: f64 = 1.5;
pub const DEFAULT_OFFSET: f64 = 0.008;

/// How the cosine expression maps to the signal amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScheduleReading {
    /// `α_t = cos(π/2 · (t+s)^ν / (1+s))²`.
    #[default]
    Literal,
    /// `α_t² = cos(π/2 · (t+s)^ν / (1+s))²`, i.e. `α_t = cos(…)`.
    SquaredAlpha,
}

/// Signal/noise amplitudes of one channel group at `t_k = k/T`, `k = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub nu: f64,
    pub offset: f64,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GroupSchedule {
    fn build(steps: usize, nu: f64, offset: f64, reading: ScheduleReading) -> Self {
        let alpha: Vec<f64> = (0..=steps)
            .map(|k| cosine_alpha(k as f64 / steps as f64, nu, offset, reading))
            .collect();
        let sigma = alpha.iter().map(|a| (1.0 - a * a).max(0.0).sqrt()).collect();
        Self {
            nu,
            offset,
            alpha,
            sigma,
        }
    }
}

/// Signal amplitude at continuous time `t ∈ [0, 1]`. The cosine argument is
/// clamped at π/2 so the amplitude reaches exactly zero and never rises again.
pub fn cosine_alpha(t: f64, nu: f64, offset: f64, reading: ScheduleReading) -> f64 {
    let arg = FRAC_PI_2 * (t + offset).powf(nu) / (1.0 + offset);
    if arg >= FRAC_PI_2 {
        return 0.0;
    }
    let c = arg.cos();
    match reading {
        ScheduleReading::Literal => c * c,
        ScheduleReading::SquaredAlpha => c,
    }
}

/// Discrete variance-preserving schedule with separate atom and bond groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub reading: ScheduleReading,
    pub atoms: GroupSchedule,
    pub bonds: GroupSchedule,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        build_schedule(DEFAULT_STEPS, DEFAULT_NU_ATOMS, DEFAULT_NU_BONDS, DEFAULT_OFFSET)
            .expect("default schedule parameters are valid")
    }
}

impl NoiseSchedule {
    pub fn group(&self, group: ChannelGroup) -> &GroupSchedule {
        match group {
            ChannelGroup::Atoms => &self.atoms,
            ChannelGroup::Bonds => &self.bonds,
        }
    }

    pub fn alpha(&self, group: ChannelGroup, step: usize) -> f64 {
        self.group(group).alpha[step]
    }

    pub fn sigma(&self, group: ChannelGroup, step: usize) -> f64 {
        self.group(group).sigma[step]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 / self.steps as f64
    }

    pub(crate) fn check_step(&self, step: usize) -> Result<(), DiffusionError> {
        if step > self.steps {
            return Err(DiffusionError::StepOutOfRange {
                step,
                steps: self.steps,
            });
        }
        Ok(())
    }
}

pub fn build_schedule(steps: usize, nu_atoms: f64, nu_bonds: f64, offset: f64) -> Result<NoiseSchedule, DiffusionError> {
    build_schedule_with(steps, nu_atoms, nu_bonds, offset, ScheduleReading::Literal)
}

pub fn build_schedule_with(
    steps: usize,
    nu_atoms: f64,
    nu_bonds: f64,
    offset: f64,
    reading: ScheduleReading,
) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::InvalidSchedule("step count must be at least 1".into()));
    }
    for (name, v) in [("nu_atoms", nu_atoms), ("nu_bonds", nu_bonds), ("offset", offset)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(DiffusionError::InvalidSchedule(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(NoiseSchedule {
        steps,
        reading,
        atoms: GroupSchedule::build(steps, nu_atoms, offset, reading),
        bonds: GroupSchedule::build(steps, nu_bonds, offset, reading),
    })
}
