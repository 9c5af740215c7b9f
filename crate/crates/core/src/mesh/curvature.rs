//! Discrete mean curvature from the cotangent Laplace-Beltrami operator.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

use super::{TriMesh, VertexScalars};

/// Unsigned mean curvature per vertex (1/mm).
///
/// `|Δx| / 2` where `Δx = 1/(2A) Σ (cot α + cot β)(x_j - x_i)` and `A` is the
/// mixed Voronoi area (Meyer et al.): Voronoi area for non-obtuse triangles,
/// area/2 at an obtuse corner and area/4 at the other two corners of an
/// obtuse triangle. Boundary vertices get 0.
pub fn mean_curvature<T: Real>(mesh: &TriMesh<T>) -> Result<VertexScalars<T>> {
    let n = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut lap = vec![Vec3::zero(); n];
    let mut area = vec![T::zero(); n];
    let eighth = T::of(0.125);

    for face in mesh.faces() {
        let p = [verts[face[0]], verts[face[1]], verts[face[2]]];
        let double_area = (p[1] - p[0]).cross(p[2] - p[0]).norm();
        if double_area <= T::of(2.0 * super::FACE_AREA_EPS) {
            continue;
        }
        let tri_area = double_area * T::half();
        // cot of the angle at corner k, opposite edge (k+1, k+2).
        let mut cot = [T::zero(); 3];
        let mut obtuse = None;
        for k in 0..3 {
            let a = p[(k + 1) % 3] - p[k];
            let b = p[(k + 2) % 3] - p[k];
            let d = a.dot(b);
            cot[k] = d / double_area;
            if d < T::zero() {
                obtuse = Some(k);
            }
        }
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let (vi, vj) = (face[i], face[j]);
            let w = cot[k];
            lap[vi] += (p[j] - p[i]) * w;
            lap[vj] += (p[i] - p[j]) * w;
        }
        match obtuse {
            None => {
                for k in 0..3 {
                    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                    let len_sq = p[i].distance_sq(p[j]);
                    area[face[i]] += eighth * cot[k] * len_sq;
                    area[face[j]] += eighth * cot[k] * len_sq;
                }
            }
            Some(o) => {
                for k in 0..3 {
                    let share = if k == o { T::half() } else { T::of(0.25) };
                    area[face[k]] += share * tri_area;
                }
            }
        }
    }

    let boundary = mesh.topology().boundary_vertices();
    let four = T::of(4.0);
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        if boundary[v] || mesh.topology().vertex_faces(v).is_empty() {
            out.push(T::zero());
            continue;
        }
        if area[v] <= T::zero() {
            return Err(Error::ZeroArea { vertex: v });
        }
        // lap holds Σ(cot α + cot β)(x_j - x_i); Δx = lap / (2A), κ = |Δx| / 2.
        out.push(lap[v].norm() / (four * area[v]));
    }
    Ok(VertexScalars::new(out))
}

/// `min(1 + κ̄, κ_max)`.
#[inline]
pub fn curvature_weight<T: Real>(kappa_bar: T, kappa_max: T) -> T {
    (T::one() + kappa_bar).min(kappa_max)
}
