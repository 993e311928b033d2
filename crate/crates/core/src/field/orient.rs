//! Canonical orientation of a point set by its principal axes.
//!
//! Axes are sorted by decreasing variance. Each of the first two axes is
//! signed so the third central moment of the projections is non-negative
//! (largest-magnitude component positive when that moment vanishes); the
//! third axis is their cross product, so the rotation is always proper and
//! mirror images are never identified.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

const EIGEN_TIE: f64 = 1e-9;
const MOMENT_TIE: f64 = 1e-9;
/// Centred coordinates are snapped to this lattice (2^-32 Å) so that rigid
/// translations of the input give bit-identical orientations.
const SNAP: f64 = 1.0 / 4_294_967_296.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFrame {
    /// Rows are the principal axes; `oriented = rotation · (p − centroid)`.
    pub rotation: [[f64; 3]; 3],
    pub centroid: [f64; 3],
}

impl CanonicalFrame {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let c = [0, 1, 2].map(|a| snap(p[a] - self.centroid[a]));
        self.rotation.map(|row| row[0] * c[0] + row[1] * c[1] + row[2] * c[2])
    }

    pub fn determinant(&self) -> f64 {
        crate::molecule::det3(&self.rotation)
    }
}

fn snap(x: f64) -> f64 {
    (x / SNAP).round() * SNAP
}

/// Centres `positions` and rotates them into their canonical principal frame.
///
/// Panics if `positions` is empty.
pub fn canonical_orient(positions: &[[f64; 3]]) -> (CanonicalFrame, Vec<[f64; 3]>) {
    assert!(!positions.is_empty(), "canonical_orient needs at least one position");
    let n = positions.len() as f64;
    let mut centroid = [0.0; 3];
    for p in positions {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    centroid = centroid.map(|c| c / n);
    let centered: Vec<Vector3<f64>> = positions
        .iter()
        .map(|p| Vector3::from_fn(|a, _| snap(p[a] - centroid[a])))
        .collect();

    let mut cov = Matrix3::zeros();
    for c in &centered {
        cov += c * c.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    // stable descending order; near-equal eigenvalues keep solver order
    let mut order = [0usize, 1, 2];
    for i in 1..3 {
        let mut j = i;
        while j > 0 && eig.eigenvalues[order[j]] > eig.eigenvalues[order[j - 1]] + EIGEN_TIE {
            order.swap(j, j - 1);
            j -= 1;
        }
    }

    let signed = |v: Vector3<f64>| -> Vector3<f64> {
        let m3: f64 = centered.iter().map(|c| c.dot(&v).powi(3)).sum::<f64>() / n;
        let flip = if m3.abs() > MOMENT_TIE {
            m3 < 0.0
        } else {
            let mut k = 0;
            for a in 1..3 {
                if v[a].abs() > v[k].abs() + 1e-12 {
                    k = a;
                }
            }
            v[k] < 0.0
        };
        if flip {
            -v
        } else {
            v
        }
    };
    let v1 = signed(eig.eigenvectors.column(order[0]).into_owned()).normalize();
    let mut v2 = eig.eigenvectors.column(order[1]).into_owned();
    v2 = signed((v2 - v1 * v1.dot(&v2)).normalize());
    let v3 = v1.cross(&v2);

    let frame = CanonicalFrame {
        rotation: [
            [v1[0], v1[1], v1[2]],
            [v2[0], v2[1], v2[2]],
            [v3[0], v3[1], v3[2]],
        ],
        centroid,
    };
    let oriented = centered
        .iter()
        .map(|c| frame.rotation.map(|row| row[0] * c[0] + row[1] * c[1] + row[2] * c[2]))
        .collect();
    (frame, oriented)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
        // QR of a Gaussian matrix, sign-fixed, then forced proper
        let m = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let qr = m.qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..3 {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        [0, 1, 2].map(|i| [q[(i, 0)], q[(i, 1)], q[(i, 2)]])
    }

    fn rotate(r: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
        r.map(|row| row[0] * p[0] + row[1] * p[1] + row[2] * p[2])
    }

    #[test]
    fn single_atom_is_centred_with_identity() {
        let (frame, out) = canonical_orient(&[[5.0, 5.0, 5.0]]);
        assert_eq!(out, vec![[0.0, 0.0, 0.0]]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((frame.rotation[i][j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collinear_points_land_on_first_axis() {
        let pts: Vec<[f64; 3]> = [0.0, 1.0, 3.0, 7.0].iter().map(|&z| [1.0, 2.0, z]).collect();
        let (frame, out) = canonical_orient(&pts);
        for p in &out {
            assert!(p[1].abs() < 1e-9 && p[2].abs() < 1e-9, "{p:?}");
        }
        assert!((frame.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_and_translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(4..12);
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)])
                .collect();
            let r = random_rotation(&mut rng);
            let shift = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let moved: Vec<[f64; 3]> = pts
                .iter()
                .map(|&p| {
                    let q = rotate(&r, p);
                    [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]]
                })
                .collect();
            let (f1, a) = canonical_orient(&pts);
            let (f2, b) = canonical_orient(&moved);
            assert!((f1.determinant() - 1.0).abs() < 1e-12);
            assert!((f2.determinant() - 1.0).abs() < 1e-12);
            for (p, q) in a.iter().zip(&b) {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-9, "{p:?} vs {q:?}");
                }
            }
        }
    }

    #[test]
    fn major_axis_has_largest_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..30)
            .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)])
            .collect();
        let (_, out) = canonical_orient(&pts);
        let var = |a: usize| out.iter().map(|p| p[a] * p[a]).sum::<f64>();
        assert!(var(0) > var(1) && var(1) > var(2));
    }
}
