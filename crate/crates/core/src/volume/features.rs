use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{signed_distance, BinaryMask, FeatureVolume, GridGeometry, VoxelGrid};

/// Channel layout of [`build_feature_volume`].
pub mod channel {
    pub const SDF: usize = 0;
    pub const GRAD_X: usize = 1;
    pub const GRAD_Y: usize = 2;
    pub const GRAD_Z: usize = 3;

    /// Smoothed occupancy at the `i`-th requested scale.
    pub const fn smoothed(i: usize) -> usize {
        4 + i
    }
}

/// Central-difference derivative along `axis` in units per mm; one-sided at
/// the grid faces, zero for single-voxel axes.
fn derivative<T: Real>(grid: &VoxelGrid<T>, axis: usize) -> VoxelGrid<T> {
    let g = grid.geometry;
    let n = g.dims[axis];
    let h = g.spacing[axis];
    let stride = [1, g.dims[0], g.dims[0] * g.dims[1]][axis];
    let data = grid.data();
    let out = (0..g.len())
        .map(|idx| {
            if n < 2 {
                return T::zero();
            }
            let c = g.coords(idx)[axis];
            if c == 0 {
                (data[idx + stride] - data[idx]) / h
            } else if c + 1 == n {
                (data[idx] - data[idx - stride]) / h
            } else {
                (data[idx + stride] - data[idx - stride]) / (T::two() * h)
            }
        })
        .collect();
    VoxelGrid::new(g, out).expect("same geometry")
}

fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_vox).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with standard deviation `sigma_mm` (per axis
/// converted to voxels) and replicated boundary values.
pub fn gaussian_smooth<T: Real>(grid: &VoxelGrid<T>, sigma_mm: T) -> Result<VoxelGrid<T>> {
    if !(sigma_mm > T::zero()) || !sigma_mm.is_finite() {
        return Err(Error::InvalidParameter(format!("smoothing scale must be positive, got {sigma_mm}")));
    }
    let g: GridGeometry<T> = grid.geometry;
    let mut cur: Vec<f64> = grid.data().iter().map(|v| v.to_f64_lossy()).collect();
    let strides = [1, g.dims[0], g.dims[0] * g.dims[1]];
    for axis in 0..3 {
        let n = g.dims[axis];
        if n < 2 {
            continue;
        }
        let kernel = gaussian_kernel((sigma_mm / g.spacing[axis]).to_f64_lossy());
        let r = (kernel.len() / 2) as isize;
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for (idx, o) in next.iter_mut().enumerate() {
            let c = g.coords(idx)[axis] as isize;
            let line0 = idx - c as usize * stride;
            *o = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    let q = (c + t as isize - r).clamp(0, n as isize - 1) as usize;
                    w * cur[line0 + q * stride]
                })
                .sum();
        }
        cur = next;
    }
    VoxelGrid::new(g, cur.into_iter().map(T::of).collect())
}

/// Analytic stand-in for a learned image embedding.
///
/// Channels, in order: signed distance (mm), its x/y/z derivatives, then the
/// mask occupancy blurred at each of `smoothing_scales` (Gaussian sigma, mm).
/// See [`channel`] for indices.
pub fn build_feature_volume<T: Real>(mask: &BinaryMask<T>, smoothing_scales: &[T]) -> Result<FeatureVolume<T>> {
    if let Some(s) = smoothing_scales.iter().find(|s| !(**s > T::zero()) || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing scale must be positive, got {s}")));
    }
    let sdf = signed_distance(mask);
    let mut channels = vec![derivative(&sdf, 0), derivative(&sdf, 1), derivative(&sdf, 2)];
    channels.insert(0, sdf);
    let occupancy = mask.to_grid();
    for &s in smoothing_scales {
        channels.push(gaussian_smooth(&occupancy, s)?);
    }
    FeatureVolume::new(channels)
}
