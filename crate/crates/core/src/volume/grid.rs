use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::scalar::Real;

/// Grid layout: `dims` voxels, `spacing` mm per voxel, `origin` = world
/// position of the center of voxel (0, 0, 0). Data is x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<T> {
    pub dims: [usize; 3],
    pub spacing: Vec3<T>,
    pub origin: Point3<T>,
}

impl<T: Real> GridGeometry<T> {
    pub fn new(dims: [usize; 3], spacing: Vec3<T>, origin: Point3<T>) -> Result<Self> {
        if !(spacing.x > T::zero() && spacing.y > T::zero() && spacing.z > T::zero()) || !spacing.is_finite() {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {spacing:?}")));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidVolume("origin must be finite".into()));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidVolume(format!("dimensions {dims:?} overflow")))?;
        Ok(Self { dims, spacing, origin })
    }

    /// Geometry covering `[lo, hi]` (world mm) with isotropic `spacing`,
    /// snapping the origin to a multiple of the spacing.
    pub fn covering(lo: Point3<T>, hi: Point3<T>, spacing: T) -> Result<Self> {
        let mut dims = [0usize; 3];
        let mut origin = [T::zero(); 3];
        for k in 0..3 {
            let first = (lo[k] / spacing).floor();
            let last = (hi[k] / spacing).ceil();
            origin[k] = first * spacing;
            dims[k] = (last - first).to_usize().unwrap_or(0) + 1;
        }
        Self::new(dims, Vec3::splat(spacing), Vec3::from_array(origin))
    }

    pub fn cast<U: Real>(&self) -> GridGeometry<U> {
        GridGeometry {
            dims: self.dims,
            spacing: self.spacing.cast(),
            origin: self.origin.cast(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// World position of a voxel center.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Point3<T> {
        Vec3::new(
            self.origin.x + T::of_usize(i) * self.spacing.x,
            self.origin.y + T::of_usize(j) * self.spacing.y,
            self.origin.z + T::of_usize(k) * self.spacing.z,
        )
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn to_voxel(&self, p: Point3<T>) -> Vec3<T> {
        (p - self.origin).component_div(self.spacing)
    }

    /// World bounds spanned by the voxel centers.
    pub fn extent(&self) -> (Point3<T>, Point3<T>) {
        let last = |k: usize| T::of_usize(self.dims[k].saturating_sub(1));
        (
            self.origin,
            self.origin + Vec3::new(last(0), last(1), last(2)).component_mul(self.spacing),
        )
    }

    pub fn check_same(&self, other: &Self, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "{what}: grid {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )));
        }
        Ok(())
    }
}

/// Scalar voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    pub geometry: GridGeometry<T>,
    data: Vec<T>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(geometry: GridGeometry<T>, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: GridGeometry<T>, value: T) -> Self {
        Self {
            data: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: GridGeometry<T>, f: impl Fn(Point3<T>) -> T) -> Self {
        let mut data = Vec::with_capacity(geometry.len());
        let [nx, ny, nz] = geometry.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(geometry.world(i, j, k)));
                }
            }
        }
        Self { geometry, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Foreground wherever the value exceeds `threshold`.
    pub fn threshold(&self, threshold: T) -> BinaryMask<T> {
        BinaryMask {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| u8::from(v > threshold)).collect(),
        }
    }
}

/// Voxel grid with values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<T> {
    pub geometry: GridGeometry<T>,
    data: Vec<u8>,
}

impl<T: Real> BinaryMask<T> {
    pub fn new(geometry: GridGeometry<T>, data: Vec<u8>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::InvalidVolume(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidVolume(format!("mask value {} at voxel {i} is not 0/1", data[i])));
        }
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: GridGeometry<T>) -> Self {
        Self {
            data: vec![0; geometry.len()],
            geometry,
        }
    }

    /// Rasterizes an inside test evaluated at voxel centers.
    pub fn from_fn(geometry: GridGeometry<T>, inside: impl Fn(Point3<T>) -> bool) -> Self {
        let mut data = Vec::with_capacity(geometry.len());
        let [nx, ny, nz] = geometry.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(u8::from(inside(geometry.world(i, j, k))));
                }
            }
        }
        Self { geometry, data }
    }

    /// Interprets a scalar grid; every value must be exactly 0 or 1.
    pub fn from_grid(grid: &VoxelGrid<T>) -> Result<Self> {
        let data = grid
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == T::zero() {
                    Ok(0)
                } else if v == T::one() {
                    Ok(1)
                } else {
                    Err(Error::InvalidVolume(format!("value {v} at voxel {i} is not 0/1")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            geometry: grid.geometry,
            data,
        })
    }

    pub fn to_grid(&self) -> VoxelGrid<T> {
        VoxelGrid {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| if v == 1 { T::one() } else { T::zero() }).collect(),
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geometry.index(i, j, k)] == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.geometry.index(i, j, k);
        self.data[idx] = u8::from(v);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// True when some foreground voxel lies on the outer layer of the grid.
    pub fn touches_boundary(&self) -> bool {
        let [nx, ny, nz] = self.geometry.dims;
        self.data.iter().enumerate().any(|(idx, &v)| {
            if v == 0 {
                return false;
            }
            let [i, j, k] = self.geometry.coords(idx);
            i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz
        })
    }
}

/// Multi-channel volume; every channel shares one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume<T> {
    channels: Vec<VoxelGrid<T>>,
}

impl<T: Real> FeatureVolume<T> {
    pub fn new(channels: Vec<VoxelGrid<T>>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Empty("feature volume needs at least one channel".into()))?;
        for (c, ch) in channels.iter().enumerate().skip(1) {
            ch.geometry.check_same(&first.geometry, &format!("feature channel {c}"))?;
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[VoxelGrid<T>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.channels[0].geometry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_coords_roundtrip() {
        let g = GridGeometry::<f64>::new([3, 4, 5], Vec3::splat(0.5), Vec3::zero()).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn rejects_bad_metadata() {
        assert!(GridGeometry::<f64>::new([2, 2, 2], Vec3::new(1.0, 0.0, 1.0), Vec3::zero()).is_err());
        assert!(GridGeometry::<f64>::new([usize::MAX, 2, 2], Vec3::splat(1.0), Vec3::zero()).is_err());
        let g = GridGeometry::<f64>::new([2, 2, 2], Vec3::splat(1.0), Vec3::zero()).unwrap();
        assert!(VoxelGrid::new(g, vec![0.0; 7]).is_err());
        assert!(BinaryMask::new(g, vec![2; 8]).is_err());
    }

    #[test]
    fn covering_contains_bounds() {
        let g = GridGeometry::<f64>::covering(Vec3::new(-1.2, 0.3, 2.0), Vec3::new(3.1, 1.0, 2.0), 0.5).unwrap();
        let (lo, hi) = g.extent();
        assert!(lo.x <= -1.2 && lo.y <= 0.3 && lo.z <= 2.0);
        assert!(hi.x >= 3.1 && hi.y >= 1.0 && hi.z >= 2.0);
    }
}
