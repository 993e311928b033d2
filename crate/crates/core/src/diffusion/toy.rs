//! Small fully-connected noise predictor standing in for a 3D U-Net.
//!
//! ```text
//! x  = [u_t ; emb(t)]
//! a1 = tanh(W1 x + b1 + E[bin(N_a)])
//! h1 = a1 ⊙ (1 + c·p_s) + c·p_b
//! a2 = tanh(W2 h1 + b2)
//! ε̂  = (W3 a2 + b3 + g(t)·u_t) / σ_t,   g(t) = q0 + q·emb(t)
//! ```
//!
//! The output is divided by the channel group's σ_t so the network only has
//! to produce quantities of order one at every noise level.

use super::{channel_coefficients, forward_sample, Condition, Denoiser, DiffusionError, NoiseSchedule};
use crate::field::{Channel, FieldLayout, FieldTensor, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

pub const FMGD_MAGIC: &[u8; 4] = b"FMGD";
pub const FMGD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArch {
    pub hidden1: usize,
    pub hidden2: usize,
    /// Even number of sinusoidal time features.
    pub time_dim: usize,
    /// Bin 0 is "no atom count"; counts at or above `count_bins − 1` share the last bin.
    pub count_bins: usize,
}

impl Default for ToyArch {
    fn default() -> Self {
        Self {
            hidden1: 64,
            hidden2: 64,
            time_dim: 16,
            count_bins: 32,
        }
    }
}

impl ToyArch {
    fn validate(&self) -> Result<(), DiffusionError> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(DiffusionError::InvalidConfig("hidden layers must be non-empty".into()));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(DiffusionError::InvalidConfig("time_dim must be a positive even number".into()));
        }
        if self.count_bins < 2 {
            return Err(DiffusionError::InvalidConfig("count_bins must be at least 2".into()));
        }
        Ok(())
    }
}

/// Sinusoidal features `sin(ω_j t), cos(ω_j t)` with `ω_j = π/2 · 2^j`.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim / 2 {
        let w = std::f64::consts::FRAC_PI_2 * (1u64 << j) as f64;
        out.push((w * t).sin());
        out.push((w * t).cos());
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    emb: usize,
    ps: usize,
    pb: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    q: usize,
    total: usize,
}

impl Offsets {
    fn new(l: usize, a: &ToyArch) -> Self {
        let n_in = l + a.time_dim;
        let w1 = 0;
        let b1 = w1 + a.hidden1 * n_in;
        let emb = b1 + a.hidden1;
        let ps = emb + a.count_bins * a.hidden1;
        let pb = ps + a.hidden1;
        let w2 = pb + a.hidden1;
        let b2 = w2 + a.hidden2 * a.hidden1;
        let w3 = b2 + a.hidden2;
        let b3 = w3 + l * a.hidden2;
        let q = b3 + l;
        let total = q + a.time_dim + 1;
        Self {
            w1,
            b1,
            emb,
            ps,
            pb,
            w2,
            b2,
            w3,
            b3,
            q,
            total,
        }
    }
}

/// One training example: a noised field, the injected noise and its context.
#[derive(Debug, Clone)]
pub struct Batch {
    pub u_t: FieldTensor,
    pub eps: FieldTensor,
    pub step: usize,
    pub cond: Condition,
}

struct Activations {
    x: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    out: Vec<f64>,
    inv_sigma: Vec<f64>,
    bin: usize,
    c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    layout: FieldLayout,
    arch: ToyArch,
    params: Vec<f64>,
}

fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl ToyDenoiser {
    /// Training initialisation: Gaussian input layers, zero output layer, so
    /// the initial prediction is identically zero.
    pub fn new(layout: FieldLayout, arch: ToyArch, seed: u64) -> Result<Self, DiffusionError> {
        arch.validate()?;
        let off = Offsets::new(layout.len(), &arch);
        let mut params = vec![0.0; off.total];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n_in = layout.len() + arch.time_dim;
        let s1 = (1.0 / n_in as f64).sqrt();
        for p in &mut params[off.w1..off.b1] {
            *p = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let s2 = (1.0 / arch.hidden1 as f64).sqrt();
        for p in &mut params[off.w2..off.b2] {
            *p = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(Self { layout, arch, params })
    }

    pub fn from_params(layout: FieldLayout, arch: ToyArch, params: Vec<f64>) -> Result<Self, DiffusionError> {
        arch.validate()?;
        let off = Offsets::new(layout.len(), &arch);
        if params.len() != off.total {
            return Err(DiffusionError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                off.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(DiffusionError::InvalidConfig("parameters must be finite".into()));
        }
        Ok(Self { layout, arch, params })
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn arch(&self) -> ToyArch {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Offsets {
        Offsets::new(self.layout.len(), &self.arch)
    }

    fn forward(&self, u_t: &FieldTensor, step: usize, schedule: &NoiseSchedule, cond: &Condition) -> Activations {
        let a = &self.arch;
        let off = self.offsets();
        let p = &self.params;
        let l = self.layout.len();
        let temb = time_embedding(schedule.time(step), a.time_dim);
        let mut x = Vec::with_capacity(l + a.time_dim);
        x.extend_from_slice(u_t.data());
        x.extend_from_slice(&temb);

        let bin = cond.atom_count.map_or(0, |n| n.clamp(1, a.count_bins - 1));
        let c = cond.property.unwrap_or(0.0);
        let mut z1 = p[off.b1..off.emb].to_vec();
        for (z, e) in z1.iter_mut().zip(&p[off.emb + bin * a.hidden1..off.emb + (bin + 1) * a.hidden1]) {
            *z += e;
        }
        matvec(&p[off.w1..off.b1], &x, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|z| z.tanh()).collect();
        let h1: Vec<f64> = (0..a.hidden1)
            .map(|i| a1[i] * (1.0 + c * p[off.ps + i]) + c * p[off.pb + i])
            .collect();
        let mut z2 = p[off.b2..off.w3].to_vec();
        matvec(&p[off.w2..off.b2], &h1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|z| z.tanh()).collect();
        let gate = p[off.q] + temb.iter().zip(&p[off.q + 1..off.total]).map(|(e, w)| e * w).sum::<f64>();

        let n = self.layout.spec.n_points();
        let inv_sigma: Vec<f64> = channel_coefficients(u_t, schedule, step)
            .iter()
            .flat_map(|&(_, s)| std::iter::repeat_n(1.0 / s, n))
            .collect();
        let mut m = p[off.b3..off.q].to_vec();
        matvec(&p[off.w3..off.b3], &a2, &mut m);
        let out = m
            .iter()
            .zip(u_t.data())
            .zip(&inv_sigma)
            .map(|((mi, ui), is)| (mi + gate * ui) * is)
            .collect();
        Activations {
            x,
            a1,
            h1,
            a2,
            out,
            inv_sigma,
            bin,
            c,
        }
    }

    fn check_batch(&self, batch: &[Batch], schedule: &NoiseSchedule) -> Result<(), DiffusionError> {
        for b in batch {
            if b.u_t.layout() != &self.layout || b.eps.layout() != &self.layout {
                return Err(crate::field::FieldError::LayoutMismatch.into());
            }
            schedule.check_step(b.step)?;
        }
        Ok(())
    }

    /// Mean-squared `L_simple` over the batch.
    pub fn loss(&self, batch: &[Batch], schedule: &NoiseSchedule) -> Result<f64, DiffusionError> {
        self.check_batch(batch, schedule)?;
        let mut total = 0.0;
        for b in batch {
            let act = self.forward(&b.u_t, b.step, schedule, &b.cond);
            total += act.out.iter().zip(b.eps.data()).map(|(o, e)| (o - e) * (o - e)).sum::<f64>();
        }
        Ok(total / (batch.len() * self.layout.len()) as f64)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[Batch], schedule: &NoiseSchedule) -> Result<(f64, Vec<f64>), DiffusionError> {
        self.check_batch(batch, schedule)?;
        let a = &self.arch;
        let off = self.offsets();
        let p = &self.params;
        let l = self.layout.len();
        let n_in = l + a.time_dim;
        let scale = 1.0 / (batch.len() * l) as f64;
        let mut grad = vec![0.0; off.total];
        let mut total = 0.0;
        for b in batch {
            let act = self.forward(&b.u_t, b.step, schedule, &b.cond);
            let u = b.u_t.data();
            let mut dm = vec![0.0; l];
            let mut dgate = 0.0;
            for i in 0..l {
                let r = act.out[i] - b.eps.data()[i];
                total += r * r;
                let d = 2.0 * r * scale * act.inv_sigma[i];
                dm[i] = d;
                dgate += d * u[i];
            }
            let temb = &act.x[l..];
            grad[off.q] += dgate;
            for (g, e) in grad[off.q + 1..off.total].iter_mut().zip(temb) {
                *g += dgate * e;
            }
            let mut da2 = vec![0.0; a.hidden2];
            for i in 0..l {
                let di = dm[i];
                grad[off.b3 + i] += di;
                if di == 0.0 {
                    continue;
                }
                let row = off.w3 + i * a.hidden2;
                for j in 0..a.hidden2 {
                    grad[row + j] += di * act.a2[j];
                    da2[j] += di * p[row + j];
                }
            }
            let dz2: Vec<f64> = da2.iter().zip(&act.a2).map(|(d, y)| d * (1.0 - y * y)).collect();
            let mut dh1 = vec![0.0; a.hidden1];
            for (j, &dz) in dz2.iter().enumerate() {
                grad[off.b2 + j] += dz;
                let row = off.w2 + j * a.hidden1;
                for k in 0..a.hidden1 {
                    grad[row + k] += dz * act.h1[k];
                    dh1[k] += dz * p[row + k];
                }
            }
            for k in 0..a.hidden1 {
                grad[off.ps + k] += dh1[k] * act.a1[k] * act.c;
                grad[off.pb + k] += dh1[k] * act.c;
                let da1 = dh1[k] * (1.0 + act.c * p[off.ps + k]);
                let dz1 = da1 * (1.0 - act.a1[k] * act.a1[k]);
                grad[off.b1 + k] += dz1;
                grad[off.emb + act.bin * a.hidden1 + k] += dz1;
                if dz1 == 0.0 {
                    continue;
                }
                let row = off.w1 + k * n_in;
                for (g, xv) in grad[row..row + n_in].iter_mut().zip(&act.x) {
                    *g += dz1 * xv;
                }
            }
        }
        Ok((total * scale, grad))
    }
}

impl Denoiser for ToyDenoiser {
    fn predict_noise(
        &self,
        u_t: &FieldTensor,
        step: usize,
        schedule: &NoiseSchedule,
        cond: &Condition,
    ) -> Result<FieldTensor, DiffusionError> {
        cond.validate()?;
        schedule.check_step(step)?;
        if u_t.layout() != &self.layout {
            return Err(crate::field::FieldError::LayoutMismatch.into());
        }
        let act = self.forward(u_t, step, schedule, cond);
        Ok(FieldTensor::from_vec(self.layout.clone(), act.out)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub cond_drop: f64,
    pub seed: u64,
    pub arch: ToyArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            batch_size: 16,
            cond_drop: 0.1,
            seed: 0,
            arch: ToyArch::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub denoiser: ToyDenoiser,
    pub loss_trace: Vec<f64>,
}

const ADAM_BETAS: (f64, f64) = (0.9, 0.99);
const ADAM_EPS: f64 = 1e-8;

/// Minimises `L_simple` with Adam over uniformly drawn steps `1..=T`.
/// `conditions`, when given, pairs each dataset field with its condition;
/// each draw is replaced by the null condition with probability `cond_drop`.
pub fn train_toy_denoiser(
    dataset: &[FieldTensor],
    conditions: Option<&[Condition]>,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
) -> Result<TrainingOutcome, DiffusionError> {
    let first = dataset.first().ok_or(DiffusionError::EmptyDataset)?;
    for u in dataset {
        first.ensure_same_layout(u)?;
    }
    if let Some(c) = conditions {
        if c.len() != dataset.len() {
            return Err(DiffusionError::InvalidConfig("one condition per dataset field required".into()));
        }
        for cond in c {
            cond.validate()?;
        }
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(0.0..=1.0).contains(&config.cond_drop) {
        return Err(DiffusionError::InvalidConfig(format!("{config:?}")));
    }
    let layout = first.layout().clone();
    let mut model = ToyDenoiser::new(layout.clone(), config.arch, config.seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut m = vec![0.0; model.params.len()];
    let mut v = vec![0.0; model.params.len()];
    let (b1, b2) = ADAM_BETAS;
    let mut trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let batch: Vec<Batch> = (0..config.batch_size)
            .map(|_| {
                let idx = rng.random_range(0..dataset.len());
                let step = rng.random_range(1..=schedule.steps);
                let eps = super::standard_normal(&layout, &mut rng);
                let u_t = forward_sample(&dataset[idx], step, schedule, &eps).expect("layouts checked");
                let mut cond = conditions.map_or(Condition::null(), |c| c[idx]);
                if rng.random::<f64>() < config.cond_drop {
                    cond = Condition::null();
                }
                Batch { u_t, eps, step, cond }
            })
            .collect();
        let (loss, grad) = model.loss_and_gradient(&batch, schedule)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DiffusionError::Diverged(it));
        }
        trace.push(loss);
        let k = (it + 1) as i32;
        let (c1, c2) = (1.0 - b1.powi(k), 1.0 - b2.powi(k));
        for i in 0..grad.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            model.params[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(TrainingOutcome {
        denoiser: model,
        loss_trace: trace,
    })
}

pub fn write_loss_trace<W: Write>(mut w: W, trace: &[f64]) -> io::Result<()> {
    writeln!(w, "iteration,loss")?;
    for (i, l) in trace.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()
}

// FMGD layout, little-endian:
//   "FMGD" | version u32 | H W D u32 | resolution f64 | origin 3×f64
//   | K u32 | K × (name length u32, ASCII name)
//   | hidden1 hidden2 time_dim count_bins u32 | parameter count u64 | parameters f64
pub fn write_fmgd<W: Write>(mut w: W, model: &ToyDenoiser) -> io::Result<()> {
    let spec = model.layout.spec;
    w.write_all(FMGD_MAGIC)?;
    w.write_all(&FMGD_VERSION.to_le_bytes())?;
    for d in spec.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&spec.resolution().to_le_bytes())?;
    for o in spec.origin() {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&(model.layout.channels.len() as u32).to_le_bytes())?;
    for c in &model.layout.channels {
        let name = c.name();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    let a = model.arch;
    for v in [a.hidden1, a.hidden2, a.time_dim, a.count_bins] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(model.params.len() * 8);
    for p in &model.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_fmgd<R: Read>(mut r: R) -> Result<ToyDenoiser, DiffusionError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FMGD_MAGIC {
        return Err(DiffusionError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FMGD_VERSION {
        return Err(DiffusionError::Format(format!("unsupported version {version}")));
    }
    let dims = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let resolution = read_f64(&mut r)?;
    let origin = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
    let spec = GridSpec::new(dims, resolution, origin)?;
    let k = read_u32(&mut r)? as usize;
    let mut channels = Vec::with_capacity(k);
    for _ in 0..k {
        let len = read_u32(&mut r)? as usize;
        if len > 64 {
            return Err(DiffusionError::Format(format!("channel name of length {len}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| DiffusionError::Format("non-ASCII channel name".into()))?;
        channels.push(Channel::parse(&name).ok_or_else(|| DiffusionError::Format(format!("unknown channel {name:?}")))?);
    }
    let arch = ToyArch {
        hidden1: read_u32(&mut r)? as usize,
        hidden2: read_u32(&mut r)? as usize,
        time_dim: read_u32(&mut r)? as usize,
        count_bins: read_u32(&mut r)? as usize,
    };
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb)?;
    let n = u64::from_le_bytes(nb) as usize;
    let layout = FieldLayout::new(spec, channels);
    arch.validate()?;
    if n != Offsets::new(layout.len(), &arch).total {
        return Err(DiffusionError::Format(format!("parameter count {n} does not match layer sizes")));
    }
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ToyDenoiser::from_params(layout, arch, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{oracle_predict_noise, simple_loss, standard_normal};
    use crate::field::{grid_default, DatasetKind};
    use crate::molecule::{BondOrder, Element};

    fn small_layout() -> FieldLayout {
        let spec = grid_default(DatasetKind::Toy { dims: [3, 2, 2] });
        FieldLayout::new(spec, vec![Channel::Atom(Element::C), Channel::Bond(BondOrder::Single)])
    }

    fn small_arch() -> ToyArch {
        ToyArch {
            hidden1: 5,
            hidden2: 4,
            time_dim: 4,
            count_bins: 4,
        }
    }

    fn random_model(rng: &mut ChaCha20Rng) -> ToyDenoiser {
        let l = small_layout();
        let n = Offsets::new(l.len(), &small_arch()).total;
        let params = (0..n).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        ToyDenoiser::from_params(l, small_arch(), params).unwrap()
    }

    fn random_batch(rng: &mut ChaCha20Rng, sched: &NoiseSchedule) -> Vec<Batch> {
        let l = small_layout();
        (0..3)
            .map(|i| {
                let u0 = standard_normal(&l, rng);
                let eps = standard_normal(&l, rng);
                let step = rng.random_range(1..=100);
                let cond = match i {
                    0 => Condition::null(),
                    1 => Condition::atoms(rng.random_range(1..9)),
                    _ => Condition {
                        atom_count: Some(2),
                        property: Some(rng.random_range(-1.0..1.0)),
                    },
                };
                Batch {
                    u_t: forward_sample(&u0, step, sched, &eps).unwrap(),
                    eps,
                    step,
                    cond,
                }
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sched = NoiseSchedule::default();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..5 {
            let model = random_model(&mut rng);
            let batch = random_batch(&mut rng, &sched);
            let (_, g) = model.loss_and_gradient(&batch, &sched).unwrap();
            let h = 1e-6;
            let mut num = vec![0.0; g.len()];
            for (i, n) in num.iter_mut().enumerate() {
                let mut plus = model.clone();
                plus.params[i] += h;
                let mut minus = model.clone();
                minus.params[i] -= h;
                *n = (plus.loss(&batch, &sched).unwrap() - minus.loss(&batch, &sched).unwrap()) / (2.0 * h);
            }
            let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            assert!(diff / norm < 1e-5, "relative error {}", diff / norm);
        }
    }

    #[test]
    fn zero_initialised_output() {
        let model = ToyDenoiser::new(small_layout(), small_arch(), 3).unwrap();
        let sched = NoiseSchedule::default();
        let u = standard_normal(&small_layout(), &mut ChaCha20Rng::seed_from_u64(1));
        let eps = model.predict_noise(&u, 50, &sched, &Condition::null()).unwrap();
        assert!(eps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fmgd_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let model = random_model(&mut rng);
        let mut bytes = Vec::new();
        write_fmgd(&mut bytes, &model).unwrap();
        assert_eq!(&bytes[..4], b"FMGD");
        let back = read_fmgd(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(read_fmgd(&bytes[..bytes.len() - 3]).is_err());
        let mut csv = Vec::new();
        write_loss_trace(&mut csv, &[0.5, 0.25]).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "iteration,loss\n0,0.5\n1,0.25\n");
    }

    fn eval_set(field: &FieldTensor, sched: &NoiseSchedule) -> Vec<Batch> {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        (10..=90)
            .step_by(10)
            .flat_map(|step| {
                (0..4)
                    .map(|_| {
                        let eps = standard_normal(field.layout(), &mut rng);
                        Batch {
                            u_t: forward_sample(field, step, sched, &eps).unwrap(),
                            eps,
                            step,
                            cond: Condition::null(),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss_on_single_field() {
        let spec = grid_default(DatasetKind::Toy { dims: [8, 8, 8] });
        let layout = FieldLayout::new(spec, vec![Channel::Atom(Element::C)]);
        let mut field = FieldTensor::zeros(layout.clone());
        crate::field::add_gaussian(field.channel_mut(0), &spec, [0.1, -0.2, 0.15], 0.4, 1.0);
        let sched = NoiseSchedule::default();
        let config = TrainConfig::default();
        let out = train_toy_denoiser(std::slice::from_ref(&field), None, &sched, &config).unwrap();
        let eval = eval_set(&field, &sched);
        let init = ToyDenoiser::new(layout, config.arch, config.seed).unwrap();
        let before = init.loss(&eval, &sched).unwrap();
        let after = out.denoiser.loss(&eval, &sched).unwrap();
        assert!(after * 10.0 <= before, "before {before}, after {after}");
        assert_eq!(out.loss_trace.len(), config.iterations);

        // the exact posterior is never worse than the trained network
        let oracle: f64 = eval
            .iter()
            .map(|b| simple_loss(&b.eps, &oracle_predict_noise(std::slice::from_ref(&field), &b.u_t, b.step, &sched).unwrap()))
            .sum::<f64>()
            / eval.len() as f64;
        assert!(oracle <= after);
    }
}
