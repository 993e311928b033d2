//! Multi-channel voxel fields of radial basis functions for 3D molecules:
//! construction, variance-preserving diffusion sampling, graph extraction
//! back from (noisy) fields, and evaluation metrics for generated sets.

pub mod molecule;
pub mod field;
pub mod diffusion;
pub mod extract;
pub mod synth;
pub mod metrics;
