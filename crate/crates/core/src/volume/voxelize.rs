use crate::error::Result;
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::{BinaryMask, GridGeometry};

/// Edge function of point `p` against the edge `a -> b` in the (y, z) plane.
/// Evaluated with the endpoints in canonical order so that the two triangles
/// sharing an edge get exactly opposite values.
fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (lo, hi, sign) = if (a[0], a[1]) <= (b[0], b[1]) { (a, b, 1.0) } else { (b, a, -1.0) };
    sign * ((hi[0] - lo[0]) * (p[1] - lo[1]) - (hi[1] - lo[1]) * (p[0] - lo[0]))
}

/// Tie rule for points exactly on an edge: of the two directions an edge can
/// have, exactly one is owned.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    d[1] > 0.0 || (d[1] == 0.0 && d[0] > 0.0)
}

/// Marks voxel centers inside a closed mesh.
///
/// Rays are cast along +x through each (y, z) voxel column and crossings are
/// counted by parity. Rays that hit an edge or vertex exactly are resolved by
/// an ownership rule on the projected edges, so each crossing of the surface
/// counts once. A crossing exactly at a voxel center counts as lying beyond it.
pub fn voxelize<T: Real>(mesh: &TriMesh<T>, template: &GridGeometry<T>) -> Result<BinaryMask<T>> {
    let mut mask = BinaryMask::zeros(*template);
    if mesh.is_empty() {
        return Ok(mask);
    }
    mesh.check_watertight()?;
    let g = template;
    let [nx, ny, nz] = g.dims;
    if g.is_empty() {
        return Ok(mask);
    }
    let oy = g.origin.y.to_f64_lossy();
    let oz = g.origin.z.to_f64_lossy();
    let sy = g.spacing.y.to_f64_lossy();
    let sz = g.spacing.z.to_f64_lossy();
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); ny * nz];

    for f in 0..mesh.face_count() {
        let tri = mesh.triangle(f).map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy(), p.z.to_f64_lossy()]);
        let mut q = tri.map(|p| [p[1], p[2]]);
        let area = edge_fn(q[0], q[1], q[2]);
        if area == 0.0 {
            continue;
        }
        let mut xs = tri.map(|p| p[0]);
        if area < 0.0 {
            q.swap(1, 2);
            xs.swap(1, 2);
        }
        let lo_y = q.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi_y = q.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_z = q.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let hi_z = q.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let j0 = ((lo_y - oy) / sy).ceil().max(0.0);
        let j1 = ((hi_y - oy) / sy).floor().min(ny as f64 - 1.0);
        let k0 = ((lo_z - oz) / sz).ceil().max(0.0);
        let k1 = ((hi_z - oz) / sz).floor().min(nz as f64 - 1.0);
        if j0 > j1 || k0 > k1 {
            continue;
        }
        for k in k0 as usize..=k1 as usize {
            for j in j0 as usize..=j1 as usize {
                let p = [g.world(0, j, k).y.to_f64_lossy(), g.world(0, j, k).z.to_f64_lossy()];
                let w = [edge_fn(q[1], q[2], p), edge_fn(q[2], q[0], p), edge_fn(q[0], q[1], p)];
                let edges = [(q[1], q[2]), (q[2], q[0]), (q[0], q[1])];
                let inside = w
                    .iter()
                    .zip(edges)
                    .all(|(&wi, (a, b))| wi > 0.0 || (wi == 0.0 && owns_edge(a, b)));
                if inside {
                    let s = w[0] + w[1] + w[2];
                    hits[j + ny * k].push((w[0] * xs[0] + w[1] * xs[1] + w[2] * xs[2]) / s);
                }
            }
        }
    }

    let ox = g.origin.x.to_f64_lossy();
    let sx = g.spacing.x.to_f64_lossy();
    for k in 0..nz {
        for j in 0..ny {
            let col = &mut hits[j + ny * k];
            if col.is_empty() {
                continue;
            }
            col.sort_by(f64::total_cmp);
            // Number of crossings strictly beyond each center, walked from +x.
            let mut beyond = 0usize;
            let mut h = col.len();
            for i in (0..nx).rev() {
                let x = ox + i as f64 * sx;
                while h > 0 && col[h - 1] >= x {
                    h -= 1;
                    beyond += 1;
                }
                if beyond % 2 == 1 {
                    mask.set(i, j, k, true);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::mesh::shapes;
    use crate::volume::marching_cubes;

    fn dice(a: &BinaryMask<f64>, b: &BinaryMask<f64>) -> f64 {
        let both = a.data().iter().zip(b.data()).filter(|(x, y)| **x == 1 && **y == 1).count();
        2.0 * both as f64 / (a.count() + b.count()) as f64
    }

    #[test]
    fn empty_mesh() {
        let g = GridGeometry::<f64>::new([4, 4, 4], Vec3::splat(1.0), Vec3::zero()).unwrap();
        assert_eq!(voxelize(&TriMesh::empty(), &g).unwrap().count(), 0);
    }

    #[test]
    fn cube_hand_count() {
        let g = GridGeometry::<f64>::new([16, 16, 16], Vec3::splat(0.5), Vec3::zero()).unwrap();
        // Spans centers 2..=11 on every axis.
        let cube = shapes::cuboid(Vec3::splat(0.75), Vec3::splat(5.75));
        let mask = voxelize(&cube, &g).unwrap();
        assert_eq!(mask.count(), 1000);
        assert!(mask.get(2, 2, 2) && mask.get(11, 11, 11));
        assert!(!mask.get(1, 5, 5) && !mask.get(12, 5, 5));
    }

    #[test]
    fn rays_through_vertices_and_edges() {
        // Octahedron whose vertices and edges sit exactly on voxel columns.
        let v = vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.0, -2.0, 0.0),
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, -2.0),
        ];
        let f = vec![[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
        let octa = TriMesh::new(v, f).unwrap();
        assert!(octa.enclosed_volume() > 0.0);
        let g = GridGeometry::<f64>::new([11, 11, 11], Vec3::splat(0.5), Vec3::splat(-2.5)).unwrap();
        let mask = voxelize(&octa, &g).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            let p = g.world(i, j, k);
            let l1 = p.x.abs() + p.y.abs() + p.z.abs();
            if l1 < 2.0 - 1e-9 {
                assert!(mask.get(i, j, k), "{p:?} should be inside");
            } else if l1 > 2.0 + 1e-9 {
                assert!(!mask.get(i, j, k), "{p:?} should be outside");
            }
        }
    }

    #[test]
    fn round_trip_with_marching_cubes() {
        for r_vox in [8.0, 12.0] {
            let n = (2.0 * r_vox) as usize + 8;
            let o = -(n as f64 - 1.0) * 0.25;
            let g = GridGeometry::<f64>::new([n, n, n], Vec3::splat(0.5), Vec3::splat(o)).unwrap();
            let ball = BinaryMask::from_fn(g, |p| p.norm() <= r_vox * 0.5);
            let mesh = marching_cubes(&ball.to_grid(), 0.5).unwrap();
            let back = voxelize(&mesh, &g).unwrap();
            let d = dice(&ball, &back);
            assert!(d >= 0.95, "dice {d} at radius {r_vox}");
        }
    }

    #[test]
    fn open_mesh_rejected() {
        let g = GridGeometry::<f64>::new([4, 4, 4], Vec3::splat(1.0), Vec3::zero()).unwrap();
        let open = shapes::grid::<f64>(3, 3, 1.0);
        assert!(voxelize(&open, &g).is_err());
    }
}
