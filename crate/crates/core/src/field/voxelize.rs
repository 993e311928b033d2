use super::{canonical_orient, Channel, FieldError, FieldLayout, FieldTensor, GridSpec, RbfParams};
use crate::molecule::Molecule;

/// Components are evaluated out to this many σ (tail below 1.3e-14).
const CUTOFF_SIGMAS: f64 = 8.0;

/// Adds `amplitude · exp(−‖x − center‖² / 2σ²)` to every voxel of one channel.
pub fn add_gaussian(values: &mut [f64], spec: &GridSpec, center: [f64; 3], sigma: f64, amplitude: f64) {
    let [rx, ry, rz] = spec.index_box(center, CUTOFF_SIGMAS * sigma);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let res = spec.resolution();
    let origin = spec.origin();
    // separable: exp(-(dx²+dy²+dz²)/2σ²) = ex·ey·ez
    let axis = |range: std::ops::Range<usize>, a: usize| -> Vec<(usize, f64)> {
        range
            .map(|i| {
                let d = origin[a] + i as f64 * res - center[a];
                (i, (-d * d * inv).exp())
            })
            .collect()
    };
    let (ex, ey, ez) = (axis(rx, 0), axis(ry, 1), axis(rz, 2));
    for &(h, fx) in &ex {
        for &(w, fy) in &ey {
            let fxy = amplitude * fx * fy;
            let row = spec.flat([h, w, 0]);
            for &(d, fz) in &ez {
                values[row + d] += fxy * fz;
            }
        }
    }
}

/// Positions used for voxelisation: canonically oriented and centred on the
/// grid when `orient` is set, unchanged otherwise.
pub fn place_molecule(mol: &Molecule, spec: &GridSpec, orient: bool) -> Molecule {
    if !orient || mol.is_empty() {
        return mol.clone();
    }
    let (_, oriented) = canonical_orient(&mol.positions());
    let c = spec.center();
    let placed: Vec<[f64; 3]> = oriented
        .iter()
        .map(|p| [p[0] + c[0], p[1] + c[1], p[2] + c[2]])
        .collect();
    mol.with_positions(&placed)
}

/// Checks that every atom lies at least 2σ inside the span of the grid.
pub fn check_coverage(mol: &Molecule, layout: &FieldLayout, params: &RbfParams) -> Result<(), FieldError> {
    let lo = layout.spec.origin();
    let hi = layout.spec.upper();
    for (atom, a) in mol.atoms().iter().enumerate() {
        let k = layout
            .channel_index(Channel::Atom(a.element))
            .ok_or(FieldError::UnsupportedElement {
                atom,
                element: a.element,
            })?;
        let margin = 2.0 * params.sigma[k];
        let inside = (0..3).all(|ax| a.position[ax] - margin >= lo[ax] && a.position[ax] + margin <= hi[ax]);
        if !inside {
            return Err(FieldError::Coverage {
                atom,
                element: a.element,
                position: a.position,
            });
        }
    }
    Ok(())
}

/// Atom channels hold a sum of components at atom centres; bond channels hold
/// components at bond midpoints.
pub fn voxelize(
    mol: &Molecule,
    layout: &FieldLayout,
    params: &RbfParams,
    orient: bool,
) -> Result<FieldTensor, FieldError> {
    params.validate(layout)?;
    let placed = place_molecule(mol, &layout.spec, orient);
    check_coverage(&placed, layout, params)?;
    let mut field = FieldTensor::zeros(layout.clone());
    let spec = layout.spec;
    for a in placed.atoms() {
        let k = layout.channel_index(Channel::Atom(a.element)).expect("coverage checked channels");
        add_gaussian(field.channel_mut(k), &spec, a.position, params.sigma[k], params.amplitude[k]);
    }
    for b in placed.bonds() {
        let k = layout
            .channel_index(Channel::Bond(b.order))
            .ok_or(FieldError::UnsupportedBond(b.order))?;
        let (p, q) = (placed.atoms()[b.i].position, placed.atoms()[b.j].position);
        let mid = [0, 1, 2].map(|ax| (p[ax] + q[ax]) / 2.0);
        add_gaussian(field.channel_mut(k), &spec, mid, params.sigma[k], params.amplitude[k]);
    }
    Ok(field)
}
