use anyhow::{bail, Context, Result};
use fieldmol_core::diffusion::{build_schedule, NoiseSchedule, ToyArch, TrainConfig, DEFAULT_NU_ATOMS, DEFAULT_NU_BONDS, DEFAULT_OFFSET, DEFAULT_STEPS};
use fieldmol_core::extract::ExtractionConfig;
use fieldmol_core::field::{FieldLayout, GridSpec, RbfParams, DEFAULT_AMPLITUDE, DEFAULT_RESOLUTION, DEFAULT_SIGMA, QM9_ELEMENTS};
use fieldmol_core::molecule::Element;
use serde::Serialize;
use std::path::Path;

/// Every tunable of a run. Values come from the defaults, then the config
/// file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid: [usize; 3],
    pub resolution: f64,
    pub elements: Vec<Element>,
    pub sigma: f64,
    pub amplitude: f64,
    pub orient: bool,
    pub steps: usize,
    pub nu_atoms: f64,
    pub nu_bonds: f64,
    pub schedule_offset: f64,
    pub beta: f64,
    pub atoms: Option<usize>,
    pub count: usize,
    pub seed: u64,
    pub noise: Vec<f64>,
    pub snapshot_stride: usize,
    pub extraction: ExtractionConfig,
    pub train_iterations: usize,
    pub train_learning_rate: f64,
    pub train_batch_size: usize,
    pub cond_drop: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            grid: [32, 32, 32],
            resolution: DEFAULT_RESOLUTION,
            elements: QM9_ELEMENTS.to_vec(),
            sigma: DEFAULT_SIGMA,
            amplitude: DEFAULT_AMPLITUDE,
            orient: true,
            steps: DEFAULT_STEPS,
            nu_atoms: DEFAULT_NU_ATOMS,
            nu_bonds: DEFAULT_NU_BONDS,
            schedule_offset: DEFAULT_OFFSET,
            beta: 0.0,
            atoms: None,
            count: 10,
            seed: 0,
            noise: vec![0.0],
            snapshot_stride: 0,
            extraction: ExtractionConfig::default(),
            train_iterations: train.iterations,
            train_learning_rate: train.learning_rate,
            train_batch_size: train.batch_size,
            cond_drop: train.cond_drop,
        }
    }
}

pub fn parse_grid(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 3 {
        bail!("grid must look like HxWxD, got {s:?}");
    }
    let mut dims = [0; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().with_context(|| format!("bad grid dimension {p:?}"))?;
        if *d == 0 {
            bail!("grid dimensions must be positive");
        }
    }
    Ok(dims)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("expected a boolean, got {s:?}"),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.parse().with_context(|| format!("bad value {v:?} for {key}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let x = &mut self.extraction;
        match key {
            "grid" => self.grid = parse_grid(v)?,
            "resolution" | "res" => self.resolution = num(key, v)?,
            "elements" => {
                self.elements = v
                    .split(',')
                    .map(|s| Element::from_symbol(s.trim()).with_context(|| format!("unknown element {s:?}")))
                    .collect::<Result<_>>()?
            }
            "sigma" => self.sigma = num(key, v)?,
            "amplitude" => self.amplitude = num(key, v)?,
            "orient" => self.orient = parse_bool(v)?,
            "steps" => self.steps = num(key, v)?,
            "nu_atoms" => self.nu_atoms = num(key, v)?,
            "nu_bonds" => self.nu_bonds = num(key, v)?,
            "schedule_offset" => self.schedule_offset = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "atoms" => self.atoms = Some(num(key, v)?),
            "count" => self.count = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "noise" => self.noise = parse_list(v)?,
            "snapshot_stride" | "snapshots" => self.snapshot_stride = num(key, v)?,
            "peak_threshold" => x.peak_threshold = num(key, v)?,
            "bond_margin" => x.bond_margin = num(key, v)?,
            "bond_probe_radius" => x.bond_probe_radius = num(key, v)?,
            "bond_value_threshold" => x.bond_value_threshold = num(key, v)?,
            "opt_iterations" => x.opt_iterations = num(key, v)?,
            "opt_learning_rate" => x.opt_learning_rate = num(key, v)?,
            "gamma_keep_threshold" => x.gamma_keep_threshold = num(key, v)?,
            "refine_positions" => x.refine_positions = parse_bool(v)?,
            "gamma_optimization" => x.gamma_optimization = parse_bool(v)?,
            "weighted_peaks" => x.weighted_peaks = parse_bool(v)?,
            "train_iterations" => self.train_iterations = num(key, v)?,
            "train_learning_rate" => self.train_learning_rate = num(key, v)?,
            "train_batch_size" => self.train_batch_size = num(key, v)?,
            "cond_drop" => self.cond_drop = num(key, v)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", n + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text)
    }

    pub fn layout(&self) -> Result<FieldLayout> {
        let spec = GridSpec::centered(self.grid, self.resolution)?;
        Ok(FieldLayout::for_elements(spec, &self.elements))
    }

    pub fn params(&self, layout: &FieldLayout) -> RbfParams {
        RbfParams::uniform(layout.n_channels(), self.sigma, self.amplitude)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(build_schedule(self.steps, self.nu_atoms, self.nu_bonds, self.schedule_offset)?)
    }

    pub fn extraction_for(&self, layout: &FieldLayout) -> ExtractionConfig {
        ExtractionConfig {
            params: Some(self.params(layout)),
            ..self.extraction.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.train_iterations,
            learning_rate: self.train_learning_rate,
            batch_size: self.train_batch_size,
            cond_drop: self.cond_drop,
            seed: self.seed,
            arch: ToyArch::default(),
        }
    }
}
