use super::{guided_noise, posterior_params, predicted_u0, Condition, Denoiser, DiffusionError, NoiseSchedule};
use crate::field::{FieldLayout, FieldTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Independent random stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(layout: &FieldLayout, rng: &mut R) -> FieldTensor {
    let data = (0..layout.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    FieldTensor::from_vec(layout.clone(), data).expect("length matches layout")
}

fn guided_prediction<D: Denoiser + ?Sized>(
    denoiser: &D,
    u: &FieldTensor,
    step: usize,
    schedule: &NoiseSchedule,
    cond: &Condition,
    beta: f64,
) -> Result<FieldTensor, DiffusionError> {
    let eps = denoiser.predict_noise(u, step, schedule, cond)?;
    if cond.is_null() || beta == 0.0 {
        return Ok(eps);
    }
    let uncond = denoiser.predict_noise(u, step, schedule, &Condition::null())?;
    guided_noise(&eps, &uncond, beta)
}

/// Ancestral sampling `p(u_s | u_t) = q(u_s | u_t, û(u_t))` with `s = t − 1`.
///
/// The prior draw `N(0, I)` stands in for `u_{T−1}` (where `σ ≈ 1`), since
/// `û` is undefined at `t = 1`. The last step returns the posterior mean,
/// which is `û` itself. `observer` sees the state at each step, starting
/// with the prior draw.
pub fn sample_stream<D: Denoiser + ?Sized>(
    denoiser: &D,
    layout: &FieldLayout,
    schedule: &NoiseSchedule,
    cond: &Condition,
    beta: f64,
    rng: &mut ChaCha20Rng,
    mut observer: impl FnMut(usize, &FieldTensor),
) -> Result<FieldTensor, DiffusionError> {
    cond.validate()?;
    let start = schedule.steps.saturating_sub(1).max(1);
    let mut u = standard_normal(layout, rng);
    observer(start, &u);
    for t in (1..=start).rev() {
        let eps = guided_prediction(denoiser, &u, t, schedule, cond, beta)?;
        let u0 = predicted_u0(&u, &eps, t, schedule)?;
        let post = posterior_params(&u, &u0, t - 1, t, schedule)?;
        u = post.mean;
        if t > 1 {
            for (k, &sd) in post.std.iter().enumerate() {
                for v in u.channel_mut(k) {
                    *v += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if !u.is_finite() {
            return Err(DiffusionError::Diverged(t));
        }
        observer(t - 1, &u);
    }
    Ok(u)
}

pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    layout: &FieldLayout,
    schedule: &NoiseSchedule,
    cond: &Condition,
    beta: f64,
    seed: u64,
) -> Result<FieldTensor, DiffusionError> {
    sample_stream(denoiser, layout, schedule, cond, beta, &mut sample_rng(seed, 0), |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::OracleDenoiser;
    use crate::field::{grid_default, Channel, DatasetKind};
    use crate::molecule::{BondOrder, Element};

    fn layout() -> FieldLayout {
        let spec = grid_default(DatasetKind::Toy { dims: [4, 4, 4] });
        FieldLayout::new(spec, vec![Channel::Atom(Element::C), Channel::Bond(BondOrder::Single)])
    }

    fn mode(sign: f64) -> FieldTensor {
        let l = layout();
        let data = (0..l.len()).map(|i| sign * (0.3 + 0.1 * ((i % 7) as f64))).collect();
        FieldTensor::from_vec(l, data).unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let oracle = OracleDenoiser::new(vec![mode(1.0), mode(-1.0)]).unwrap();
        let s = NoiseSchedule::default();
        let a = sample(&oracle, &layout(), &s, &Condition::null(), 2.0, 9).unwrap();
        let b = sample(&oracle, &layout(), &s, &Condition::null(), 2.0, 9).unwrap();
        assert_eq!(a, b);
        let mut r1 = sample_rng(9, 1);
        let c = sample_stream(&oracle, &layout(), &s, &Condition::null(), 2.0, &mut r1, |_, _| {}).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_mode_collapses() {
        let target = mode(1.0);
        let oracle = OracleDenoiser::new(vec![target.clone()]).unwrap();
        let s = NoiseSchedule::default();
        for seed in 0..5 {
            let out = sample(&oracle, &layout(), &s, &Condition::null(), 0.0, seed).unwrap();
            assert!(out.squared_distance(&target).sqrt() < 1e-9);
        }
    }

    #[test]
    fn observer_sees_every_step() {
        let oracle = OracleDenoiser::new(vec![mode(1.0)]).unwrap();
        let s = NoiseSchedule::default();
        let mut seen = Vec::new();
        sample_stream(&oracle, &layout(), &s, &Condition::null(), 0.0, &mut sample_rng(1, 0), |k, _| seen.push(k)).unwrap();
        assert_eq!(seen, (0..=99).rev().collect::<Vec<_>>());
    }

    #[test]
    fn two_modes_are_balanced() {
        let oracle = OracleDenoiser::new(vec![mode(1.0), mode(-1.0)]).unwrap();
        let s = NoiseSchedule::default();
        let (a, b) = (mode(1.0), mode(-1.0));
        let n = 400;
        let hits = (0..n)
            .filter(|&i| {
                let out = sample_stream(&oracle, &layout(), &s, &Condition::null(), 0.0, &mut sample_rng(5, i), |_, _| {})
                    .unwrap();
                out.squared_distance(&a) < out.squared_distance(&b)
            })
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.075, "{frac}");
    }
}
