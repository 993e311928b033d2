//! Voxel grids, multi-channel field tensors and the RBF field construction.

mod io;
mod orient;
mod voxelize;

pub use io::{read_fmgf, write_fmgf, FMGF_MAGIC, FMGF_VERSION};
pub use orient::{canonical_orient, CanonicalFrame};
pub use voxelize::{add_gaussian, check_coverage, place_molecule, voxelize};

use crate::molecule::{BondOrder, Element};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Component width used for every channel unless configured otherwise (Å).
pub const DEFAULT_SIGMA: f64 = 0.224;
/// Peak value of an isolated component centred on a grid point.
pub const DEFAULT_AMPLITUDE: f64 = 1.0;
/// Voxel edge used by the QM9- and GEOM-like grids (Å).
pub const DEFAULT_RESOLUTION: f64 = 0.33;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("tensor shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field layouts differ")]
    LayoutMismatch,
    #[error("invalid RBF parameters: {0}")]
    InvalidParams(String),
    #[error("atom {atom} ({element}) at {position:?} does not fit the grid with a 2σ margin")]
    Coverage {
        atom: usize,
        element: Element,
        position: [f64; 3],
    },
    #[error("atom {atom}: no channel for element {element}")]
    UnsupportedElement { atom: usize, element: Element },
    #[error("no channel for bond order {0:?}")]
    UnsupportedBond(BondOrder),
    #[error("malformed FMGF data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which noise schedule a channel follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelGroup {
    Atoms,
    Bonds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Atom(Element),
    Bond(BondOrder),
}

impl Channel {
    pub fn name(self) -> String {
        match self {
            Channel::Atom(e) => e.symbol().to_string(),
            Channel::Bond(o) => format!("b{}", o.value()),
        }
    }

    pub fn parse(name: &str) -> Option<Channel> {
        if let Some(rest) = name.strip_prefix('b') {
            return rest.parse::<u8>().ok().and_then(BondOrder::from_value).map(Channel::Bond);
        }
        Element::from_symbol(name).map(Channel::Atom)
    }

    pub fn group(self) -> ChannelGroup {
        match self {
            Channel::Atom(_) => ChannelGroup::Atoms,
            Channel::Bond(_) => ChannelGroup::Bonds,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Element set of QM9-like data.
pub const QM9_ELEMENTS: [Element; 5] = [Element::H, Element::C, Element::N, Element::O, Element::F];

/// Regular grid of `dims` voxel centres starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dims: [usize; 3],
    resolution: f64,
    origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], resolution: f64, origin: [f64; 3]) -> Result<Self, FieldError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(FieldError::InvalidGrid(format!("dims must be positive, got {dims:?}")));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            dims,
            resolution,
            origin,
        })
    }

    /// Grid whose geometric centre is the coordinate origin.
    pub fn centered(dims: [usize; 3], resolution: f64) -> Result<Self, FieldError> {
        let origin = [0, 1, 2].map(|a| -((dims[a].max(1) - 1) as f64) * resolution / 2.0);
        Self::new(dims, resolution, origin)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn n_points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Geometric centre of the evaluated positions.
    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (self.dims[a] - 1) as f64 * self.resolution / 2.0)
    }

    /// Coordinates of the last voxel centre on each axis.
    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (self.dims[a] - 1) as f64 * self.resolution)
    }

    pub fn position(&self, idx: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + idx[a] as f64 * self.resolution)
    }

    /// Flat index, x-major (the last axis varies fastest).
    pub fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn unflat(&self, flat: usize) -> [usize; 3] {
        let d = flat % self.dims[2];
        let rest = flat / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], d]
    }

    /// Per-axis index ranges of voxels whose centres may lie within `radius` of `center`.
    pub fn index_box(&self, center: [f64; 3], radius: f64) -> [std::ops::Range<usize>; 3] {
        [0, 1, 2].map(|a| {
            let lo = ((center[a] - radius - self.origin[a]) / self.resolution).ceil();
            let hi = ((center[a] + radius - self.origin[a]) / self.resolution).floor();
            let lo = lo.max(0.0) as usize;
            let hi = hi.min((self.dims[a] - 1) as f64);
            if hi < lo as f64 {
                0..0
            } else {
                lo..hi as usize + 1
            }
        })
    }

    /// Flat indices of voxels with centre strictly within `radius` of `center`.
    pub fn voxels_within(&self, center: [f64; 3], radius: f64) -> Vec<usize> {
        let [rx, ry, rz] = self.index_box(center, radius);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for h in rx {
            for w in ry.clone() {
                for d in rz.clone() {
                    let p = self.position([h, w, d]);
                    let dist2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2);
                    if dist2 < r2 {
                        out.push(self.flat([h, w, d]));
                    }
                }
            }
        }
        out
    }
}

/// Preset grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    Qm9,
    Geom,
    Toy { dims: [usize; 3] },
}

impl DatasetKind {
    pub fn toy() -> Self {
        DatasetKind::Toy { dims: [16, 16, 16] }
    }
}

/// Default grid for a dataset kind, centred on the coordinate origin.
pub fn grid_default(kind: DatasetKind) -> GridSpec {
    let dims = match kind {
        DatasetKind::Qm9 => [32, 32, 32],
        DatasetKind::Geom => [64, 40, 32],
        DatasetKind::Toy { dims } => dims,
    };
    GridSpec::centered(dims, DEFAULT_RESOLUTION).expect("preset grids are valid")
}

/// Grid plus ordered channel list: atom channels first, then bond channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub spec: GridSpec,
    pub channels: Vec<Channel>,
}

impl FieldLayout {
    pub fn new(spec: GridSpec, channels: Vec<Channel>) -> Self {
        Self { spec, channels }
    }

    /// One channel per element followed by the three bond-order channels.
    pub fn for_elements(spec: GridSpec, elements: &[Element]) -> Self {
        let channels = elements
            .iter()
            .map(|&e| Channel::Atom(e))
            .chain(BondOrder::ALL.into_iter().map(Channel::Bond))
            .collect();
        Self { spec, channels }
    }

    pub fn qm9(spec: GridSpec) -> Self {
        Self::for_elements(spec, &QM9_ELEMENTS)
    }

    pub fn geom(spec: GridSpec) -> Self {
        Self::for_elements(spec, &Element::ALL)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.len() * self.spec.n_points()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_index(&self, channel: Channel) -> Option<usize> {
        self.channels.iter().position(|&c| c == channel)
    }

    pub fn groups(&self) -> Vec<ChannelGroup> {
        self.channels.iter().map(|c| c.group()).collect()
    }
}

/// Field values on a grid, `K × H × W × D` in channel-major, x-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTensor {
    layout: FieldLayout,
    data: Vec<f64>,
}

impl FieldTensor {
    pub fn zeros(layout: FieldLayout) -> Self {
        let data = vec![0.0; layout.len()];
        Self { layout, data }
    }

    pub fn from_vec(layout: FieldLayout, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != layout.len() {
            return Err(FieldError::ShapeMismatch {
                expected: layout.len(),
                got: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn spec(&self) -> &GridSpec {
        &self.layout.spec
    }

    pub fn channels(&self) -> &[Channel] {
        &self.layout.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.layout.spec.n_points();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.layout.spec.n_points();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn value(&self, k: usize, idx: [usize; 3]) -> f64 {
        self.channel(k)[self.layout.spec.flat(idx)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_layout(&self, other: &FieldTensor) -> Result<(), FieldError> {
        if self.layout != other.layout {
            return Err(FieldError::LayoutMismatch);
        }
        Ok(())
    }

    pub fn squared_distance(&self, other: &FieldTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-channel component width σ (Å) and peak amplitude γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub sigma: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl RbfParams {
    pub fn uniform(n_channels: usize, sigma: f64, amplitude: f64) -> Self {
        Self {
            sigma: vec![sigma; n_channels],
            amplitude: vec![amplitude; n_channels],
        }
    }

    pub fn defaults_for(layout: &FieldLayout) -> Self {
        Self::uniform(layout.n_channels(), DEFAULT_SIGMA, DEFAULT_AMPLITUDE)
    }

    pub fn validate(&self, layout: &FieldLayout) -> Result<(), FieldError> {
        let k = layout.n_channels();
        if self.sigma.len() != k || self.amplitude.len() != k {
            return Err(FieldError::InvalidParams(format!(
                "expected {k} per-channel values, got {} sigma and {} amplitude",
                self.sigma.len(),
                self.amplitude.len()
            )));
        }
        if self.sigma.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(FieldError::InvalidParams("sigma must be positive".into()));
        }
        if self.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(FieldError::InvalidParams("amplitude must be finite".into()));
        }
        Ok(())
    }
}
