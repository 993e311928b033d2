use crate::field::GridSpec;
use serde::Serialize;
use std::collections::VecDeque;

/// One 26-connected component of above-threshold voxels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub position: [f64; 3],
    pub voxels: usize,
}

/// Flood-fills the voxels with value above `threshold` into 26-connected
/// components and returns one position per component: the plain mean of the
/// voxel centres, or the value-weighted mean when `weighted` is set.
/// Components are reported in order of their first voxel in flat order.
pub fn peak_extract(channel: &[f64], spec: &GridSpec, threshold: f64, weighted: bool) -> Vec<Peak> {
    let dims = spec.dims();
    let mut seen = vec![false; channel.len()];
    let mut queue = VecDeque::new();
    let mut peaks = Vec::new();
    for start in 0..channel.len() {
        if seen[start] || !(channel[start] > threshold) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut sum = [0.0; 3];
        let mut weight = 0.0;
        let mut count = 0;
        while let Some(flat) = queue.pop_front() {
            let idx = spec.unflat(flat);
            let p = spec.position(idx);
            let w = if weighted { channel[flat] } else { 1.0 };
            for a in 0..3 {
                sum[a] += w * p[a];
            }
            weight += w;
            count += 1;
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dz in -1i64..=1 {
                        let n = [idx[0] as i64 + dx, idx[1] as i64 + dy, idx[2] as i64 + dz];
                        if (0..3).any(|a| n[a] < 0 || n[a] >= dims[a] as i64) {
                            continue;
                        }
                        let nf = spec.flat([n[0] as usize, n[1] as usize, n[2] as usize]);
                        if !seen[nf] && channel[nf] > threshold {
                            seen[nf] = true;
                            queue.push_back(nf);
                        }
                    }
                }
            }
        }
        peaks.push(Peak {
            position: sum.map(|s| s / weight),
            voxels: count,
        });
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{add_gaussian, grid_default, DatasetKind, DEFAULT_SIGMA};

    fn grid() -> GridSpec {
        grid_default(DatasetKind::Toy { dims: [20, 20, 20] })
    }

    #[test]
    fn single_atom_gives_one_component() {
        let g = grid();
        let mut v = vec![0.0; g.n_points()];
        let c = [0.07, -0.11, 0.02];
        add_gaussian(&mut v, &g, c, DEFAULT_SIGMA, 1.0);
        let peaks = peak_extract(&v, &g, 0.3, false);
        assert_eq!(peaks.len(), 1);
        let d: f64 = (0..3).map(|a| (peaks[0].position[a] - c[a]).powi(2)).sum::<f64>().sqrt();
        assert!(d < 0.33, "{d}");
    }

    #[test]
    fn empty_and_separated() {
        let g = grid();
        let mut v = vec![0.0; g.n_points()];
        assert!(peak_extract(&v, &g, 0.3, false).is_empty());
        add_gaussian(&mut v, &g, [-1.0, 0.0, 0.0], DEFAULT_SIGMA, 1.0);
        add_gaussian(&mut v, &g, [1.0, 0.0, 0.0], DEFAULT_SIGMA, 1.0);
        assert_eq!(peak_extract(&v, &g, 0.3, false).len(), 2);
    }

    #[test]
    fn diagonal_neighbours_connect() {
        let g = GridSpec::new([4, 4, 4], 1.0, [0.0; 3]).unwrap();
        let mut v = vec![0.0; g.n_points()];
        v[g.flat([0, 0, 0])] = 1.0;
        v[g.flat([1, 1, 1])] = 1.0;
        v[g.flat([3, 3, 3])] = 1.0;
        let peaks = peak_extract(&v, &g, 0.3, false);
        assert_eq!(peaks.len(), 2);
        assert_eq!(peaks[0].position, [0.5, 0.5, 0.5]);
        assert_eq!(peaks[0].voxels, 2);
        let w = {
            v[g.flat([1, 1, 1])] = 3.0;
            peak_extract(&v, &g, 0.3, true)
        };
        assert_eq!(w[0].position, [0.75, 0.75, 0.75]);
    }

    #[test]
    fn long_ridge_needs_no_recursion() {
        let g = GridSpec::new([200, 60, 60], 1.0, [0.0; 3]).unwrap();
        let v = vec![1.0; g.n_points()];
        let peaks = peak_extract(&v, &g, 0.3, false);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].voxels, g.n_points());
    }

    #[test]
    fn whole_voxel_translation() {
        let g = grid();
        let mut a = vec![0.0; g.n_points()];
        add_gaussian(&mut a, &g, [0.1, 0.2, -0.3], DEFAULT_SIGMA, 1.0);
        add_gaussian(&mut a, &g, [-1.2, 0.5, 0.4], DEFAULT_SIGMA, 1.0);
        let shift = [2usize, 1, 3];
        let mut b = vec![0.0; g.n_points()];
        for f in 0..g.n_points() {
            let i = g.unflat(f);
            if i[0] + shift[0] < 20 && i[1] + shift[1] < 20 && i[2] + shift[2] < 20 {
                b[g.flat([i[0] + shift[0], i[1] + shift[1], i[2] + shift[2]])] = a[f];
            }
        }
        let (pa, pb) = (peak_extract(&a, &g, 0.3, false), peak_extract(&b, &g, 0.3, false));
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            for k in 0..3 {
                assert!((y.position[k] - x.position[k] - shift[k] as f64 * 0.33).abs() < 1e-12);
            }
        }
    }
}
