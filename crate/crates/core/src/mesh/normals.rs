use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

use super::TriMesh;

/// Faces with area at or below this (mm²) have no defined normal.
pub const FACE_AREA_EPS: f64 = 1e-12;

/// Unit normal of face `f`, right-handed with respect to the vertex order.
pub fn face_normal<T: Real>(mesh: &TriMesh<T>, f: usize) -> Result<Vec3<T>> {
    let [a, b, c] = mesh.triangle(f);
    let n = (b - a).cross(c - a);
    if n.norm() * T::half() <= T::of(FACE_AREA_EPS) {
        return Err(Error::DegenerateFace { face: f });
    }
    n.normalized().ok_or(Error::DegenerateFace { face: f })
}

/// All face normals; fails on the first degenerate face.
pub fn face_normals<T: Real>(mesh: &TriMesh<T>) -> Result<Vec<Vec3<T>>> {
    (0..mesh.face_count()).map(|f| face_normal(mesh, f)).collect()
}

/// Normalized average of the unit normals of the faces containing `v`.
/// Degenerate incident faces are skipped.
pub fn vertex_normal<T: Real>(mesh: &TriMesh<T>, v: usize) -> Result<Vec3<T>> {
    let mut acc = Vec3::zero();
    let mut used = 0;
    for &f in mesh.topology().vertex_faces(v) {
        if let Ok(n) = face_normal(mesh, f) {
            acc += n;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::IsolatedVertex { vertex: v });
    }
    acc.normalized().ok_or(Error::IsolatedVertex { vertex: v })
}

/// Vertex normals for the whole mesh. Every face must be non-degenerate.
pub fn vertex_normals<T: Real>(mesh: &TriMesh<T>) -> Result<Vec<Vec3<T>>> {
    let fnormals = face_normals(mesh)?;
    let mut acc = vec![Vec3::zero(); mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        for &v in face {
            acc[v] += fnormals[f];
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(v, n)| n.normalized().ok_or(Error::IsolatedVertex { vertex: v }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn tri(p: [[f64; 3]; 3]) -> TriMesh<f64> {
        TriMesh::new(p.iter().map(|a| Vec3::from_array(*a)).collect(), vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn ccw_triangle_points_up() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(face_normal(&m, 0).unwrap(), Vec3::new(0.0, 0.0, 1.0));
        let r = tri([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(face_normal(&r, 0).unwrap(), Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn xz_triangle_points_negative_y() {
        // (1,0,0) x (0,0,1) = (0,-1,0)
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(face_normal(&m, 0).unwrap(), Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn degenerate_face_is_an_error() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(matches!(face_normal(&m, 0), Err(Error::DegenerateFace { face: 0 })));
    }

    #[test]
    fn flat_grid_interior_normal_is_z() {
        let g = shapes::grid::<f64>(5, 5, 1.0);
        let n = vertex_normal(&g, 12).unwrap();
        assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn pyramid_apex_normal_is_z() {
        let v = vec![
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.3),
        ];
        let f = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        let m = TriMesh::new(v, f).unwrap();
        let n = vertex_normal(&m, 4).unwrap();
        assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn icosahedron_normals_are_radial() {
        let m = shapes::icosphere::<f64>(0, 1.0);
        let normals = vertex_normals(&m).unwrap();
        for (v, n) in m.vertices().iter().zip(&normals) {
            let radial = v.normalized().unwrap();
            assert!((radial - *n).norm() < 1e-6);
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let m = TriMesh::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::splat(5.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(vertex_normal(&m, 3), Err(Error::IsolatedVertex { vertex: 3 })));
    }
}
