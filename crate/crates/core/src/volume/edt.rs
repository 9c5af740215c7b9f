use crate::scalar::Real;

use super::{BinaryMask, GridGeometry, VoxelGrid};

const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of sampled function `f` with
/// sample spacing `s` (lower envelope of parabolas).
fn edt_1d(f: &[f64], s: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let s2 = s * s;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let x = ((f[q] + s2 * qf * qf) - (f[v[k]] + s2 * p * p)) / (2.0 * s2 * (qf - p));
            if x <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if x <= z[k] {
                // k == 0: the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = x;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = s2 * d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel center to the nearest
/// voxel center where `seed` holds.
fn squared_edt<T: Real>(geom: &GridGeometry<T>, seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let dims = geom.dims;
    let n = geom.len();
    let mut d: Vec<f64> = (0..n).map(|i| if seed(i) { 0.0 } else { FAR }).collect();
    let maxlen = dims.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; maxlen];
    let mut out = vec![0.0; maxlen];
    let mut v = vec![0usize; maxlen];
    let mut z = vec![0.0; maxlen + 1];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let len = dims[axis];
        if len == 0 {
            return d;
        }
        let s = geom.spacing[axis].to_f64_lossy();
        let stride = strides[axis];
        for start in 0..n {
            // Line starts are indices whose coordinate along `axis` is zero.
            if (start / stride) % len != 0 {
                continue;
            }
            for q in 0..len {
                line[q] = d[start + q * stride];
            }
            edt_1d(&line[..len], s, &mut out[..len], &mut v, &mut z);
            for q in 0..len {
                d[start + q * stride] = out[q].min(FAR);
            }
        }
    }
    d
}

fn fallback_distance<T: Real>(geom: &GridGeometry<T>) -> f64 {
    let (lo, hi) = geom.extent();
    (hi - lo).norm().to_f64_lossy() + geom.spacing.max_abs().to_f64_lossy()
}

/// Unsigned distance (mm) from each voxel center to the nearest foreground
/// voxel center; zero on the foreground. An empty mask yields the grid
/// diagonal everywhere.
pub fn distance_to_foreground<T: Real>(mask: &BinaryMask<T>) -> VoxelGrid<T> {
    let geom = mask.geometry;
    let data = mask.data();
    let far = fallback_distance(&geom);
    let d = squared_edt(&geom, |i| data[i] == 1);
    let values = d
        .into_iter()
        .map(|v| T::of(if v >= FAR { far } else { v.sqrt() }))
        .collect();
    VoxelGrid::new(geom, values).expect("same geometry")
}

/// Signed distance in mm: negative inside the foreground, positive outside.
///
/// Both sides come from an exact Euclidean distance transform between voxel
/// centers. The surface is taken to lie halfway between a foreground and a
/// background center, so each side is shifted by half the smallest spacing.
/// A mask without background (or without foreground) uses the grid diagonal
/// as the missing distance.
pub fn signed_distance<T: Real>(mask: &BinaryMask<T>) -> VoxelGrid<T> {
    let geom = mask.geometry;
    let data = mask.data();
    let far = fallback_distance(&geom);
    let to_fg = squared_edt(&geom, |i| data[i] == 1);
    let to_bg = squared_edt(&geom, |i| data[i] == 0);
    let sp = geom.spacing;
    let half = 0.5 * sp.x.min(sp.y).min(sp.z).to_f64_lossy();
    let dist = |sq: f64| if sq >= FAR { far } else { sq.sqrt() };
    let values = data
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let v = if m == 1 {
                -(dist(to_bg[i]) - half)
            } else {
                dist(to_fg[i]) - half
            };
            T::of(v)
        })
        .collect();
    VoxelGrid::new(geom, values).expect("same geometry")
}
