use crate::geometry::Point3;
use crate::scalar::Real;

use super::VoxelGrid;

/// Trilinear interpolation at world point `p`. Coordinates are clamped to
/// the box spanned by the voxel centers.
pub fn trilinear_sample<T: Real>(grid: &VoxelGrid<T>, p: Point3<T>) -> T {
    let g = &grid.geometry;
    let u = g.to_voxel(p);
    let mut i0 = [0usize; 3];
    let mut f = [T::zero(); 3];
    for k in 0..3 {
        let n = g.dims[k];
        if n <= 1 {
            continue;
        }
        let max = T::of_usize(n - 1);
        let mut c = u[k].max(T::zero()).min(max);
        // Snap round-off so voxel centers return stored values exactly.
        let r = c.round();
        if (c - r).abs() <= T::epsilon() * T::of(16.0) * max {
            c = r;
        }
        let base = c.floor().to_usize().unwrap_or(0).min(n - 2);
        i0[k] = base;
        f[k] = c - T::of_usize(base);
    }
    let step = |k: usize| usize::from(g.dims[k] > 1);
    let (sx, sy, sz) = (step(0), step(1), step(2));
    let v = |dx: usize, dy: usize, dz: usize| grid.at(i0[0] + dx * sx, i0[1] + dy * sy, i0[2] + dz * sz);
    let one = T::one();
    let lerp = |a: T, b: T, t: T| a * (one - t) + b * t;
    let c00 = lerp(v(0, 0, 0), v(1, 0, 0), f[0]);
    let c10 = lerp(v(0, 1, 0), v(1, 1, 0), f[0]);
    let c01 = lerp(v(0, 0, 1), v(1, 0, 1), f[0]);
    let c11 = lerp(v(0, 1, 1), v(1, 1, 1), f[0]);
    lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::volume::GridGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> GridGeometry<f64> {
        GridGeometry::new([6, 5, 4], Vec3::new(0.5, 0.7, 1.1), Vec3::new(-1.0, 2.0, 0.5)).unwrap()
    }

    #[test]
    fn exact_at_voxel_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = geom();
        let data: Vec<f64> = (0..g.len()).map(|_| rng.gen()).collect();
        let grid = VoxelGrid::new(g, data).unwrap();
        for k in 0..4 {
            for j in 0..5 {
                for i in 0..6 {
                    assert_eq!(trilinear_sample(&grid, g.world(i, j, k)), grid.at(i, j, k));
                }
            }
        }
    }

    #[test]
    fn midpoint_is_mean_of_neighbors() {
        let g = geom();
        let grid = VoxelGrid::from_fn(g, |p| (p.x * 3.0).sin() + p.y * p.z);
        let p = (g.world(2, 3, 1) + g.world(3, 3, 1)) * 0.5;
        let expect = 0.5 * (grid.at(2, 3, 1) + grid.at(3, 3, 1));
        assert!((trilinear_sample(&grid, p) - expect).abs() < 1e-12);
    }

    #[test]
    fn exact_on_linear_fields() {
        let g = geom();
        let f = |p: Point3<f64>| 2.0 * p.x + 3.0 * p.y - p.z;
        let grid = VoxelGrid::from_fn(g, f);
        let (lo, hi) = g.extent();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z));
            assert!((trilinear_sample(&grid, p) - f(p)).abs() < 1e-9);
        }
    }

    #[test]
    fn clamps_outside() {
        let g = geom();
        let grid = VoxelGrid::from_fn(g, |p| p.x);
        let (lo, _) = g.extent();
        assert!((trilinear_sample(&grid, lo - Vec3::splat(10.0)) - lo.x).abs() < 1e-12);
    }
}
