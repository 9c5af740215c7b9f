//! Closed-form meshes used by tests, examples and the synthetic generator.

use std::collections::HashMap;

use crate::geometry::{Point3, Vec3};
use crate::scalar::Real;

use super::TriMesh;

/// Regular tetrahedron with unit edges, outward faces.
pub fn tetrahedron<T: Real>() -> TriMesh<T> {
    let h = T::of(3f64.sqrt() / 2.0);
    let v = vec![
        Vec3::new(T::zero(), T::zero(), T::zero()),
        Vec3::new(T::one(), T::zero(), T::zero()),
        Vec3::new(T::half(), h, T::zero()),
        Vec3::new(T::half(), T::of(3f64.sqrt() / 6.0), T::of((2.0f64 / 3.0).sqrt())),
    ];
    TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]]).expect("valid tetrahedron")
}

/// Icosahedron refined `subdivisions` times and projected to a sphere.
pub fn icosphere<T: Real>(subdivisions: usize, radius: T) -> TriMesh<T> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut verts: Vec<Vec3<f64>> = base
        .iter()
        .map(|a| Vec3::from_array(*a).normalized().unwrap())
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalized().unwrap());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v.cast::<T>() * radius).collect();
    TriMesh::new(verts, faces).expect("valid icosphere")
}

/// Flat `nx` x `ny` vertex grid in the z=0 plane, normals +z.
/// Vertex `(i, j)` has index `j * nx + i`.
pub fn grid<T: Real>(nx: usize, ny: usize, spacing: T) -> TriMesh<T> {
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            v.push(Vec3::new(T::of_usize(i) * spacing, T::of_usize(j) * spacing, T::zero()));
        }
    }
    let mut f = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx + 1, a + nx);
            f.push([a, b, c]);
            f.push([a, c, d]);
        }
    }
    TriMesh::new(v, f).expect("valid grid")
}

/// Open tube of radius `r` along z from 0 to `height`, outward normals.
pub fn cylinder<T: Real>(r: T, height: T, segments: usize, rings: usize) -> TriMesh<T> {
    let mut v = Vec::new();
    for k in 0..=rings {
        let z = height * T::of_usize(k) / T::of_usize(rings);
        for s in 0..segments {
            let a = T::TAU() * T::of_usize(s) / T::of_usize(segments);
            v.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let mut f = Vec::new();
    for k in 0..rings {
        for s in 0..segments {
            let a = k * segments + s;
            let b = k * segments + (s + 1) % segments;
            let (c, d) = (b + segments, a + segments);
            f.push([a, b, c]);
            f.push([a, c, d]);
        }
    }
    TriMesh::new(v, f).expect("valid cylinder")
}

/// Closed axis-aligned box with 12 outward triangles.
pub fn cuboid<T: Real>(min: Point3<T>, max: Point3<T>) -> TriMesh<T> {
    let c = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let v = (0..8).map(c).collect();
    let f = vec![
        [0, 2, 3], [0, 3, 1], // z = min
        [4, 5, 7], [4, 7, 6], // z = max
        [0, 1, 5], [0, 5, 4], // y = min
        [2, 6, 7], [2, 7, 3], // y = max
        [0, 4, 6], [0, 6, 2], // x = min
        [1, 3, 7], [1, 7, 5], // x = max
    ];
    TriMesh::new(v, f).expect("valid cuboid")
}
