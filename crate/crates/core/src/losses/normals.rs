use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{TriMesh, FACE_AREA_EPS};
use crate::scalar::Real;

use super::target::Matching;
use super::{LossTerm, Target};

/// Face and vertex normals of a mesh with the intermediates needed to
/// backpropagate through them.
struct NormalFrame<T> {
    /// Unnormalized face normal (edge cross product) and its length.
    cross: Vec<(Vec3<T>, T)>,
    face_n: Vec<Vec3<T>>,
    /// Sum of unit face normals per vertex and its length.
    vsum: Vec<(Vec3<T>, T)>,
    vertex_n: Vec<Vec3<T>>,
}

impl<T: Real> NormalFrame<T> {
    fn new(mesh: &TriMesh<T>, with_vertices: bool) -> Result<Self> {
        let mut cross = Vec::with_capacity(mesh.face_count());
        let mut face_n = Vec::with_capacity(mesh.face_count());
        for f in 0..mesh.face_count() {
            let [a, b, c] = mesh.triangle(f);
            let x = (b - a).cross(c - a);
            let len = x.norm();
            if !(len * T::half() > T::of(FACE_AREA_EPS)) {
                return Err(Error::DegenerateFace { face: f });
            }
            cross.push((x, len));
            face_n.push(x / len);
        }
        let mut vsum = Vec::new();
        let mut vertex_n = Vec::new();
        if with_vertices {
            vsum = vec![(Vec3::zero(), T::zero()); mesh.vertex_count()];
            for (f, face) in mesh.faces().iter().enumerate() {
                for &v in face {
                    vsum[v].0 += face_n[f];
                }
            }
            for (v, (s, len)) in vsum.iter_mut().enumerate() {
                *len = s.norm();
                if !(*len > T::of(1e-12)) {
                    return Err(Error::IsolatedVertex { vertex: v });
                }
                vertex_n.push(*s / *len);
            }
        }
        Ok(Self {
            cross,
            face_n,
            vsum,
            vertex_n,
        })
    }

    /// Pulls gradients on unit vertex normals back onto unit face normals.
    fn vertex_to_face(&self, mesh: &TriMesh<T>, g_vertex: &[Vec3<T>], g_face: &mut [Vec3<T>]) {
        for (f, face) in mesh.faces().iter().enumerate() {
            for &v in face {
                let g = g_vertex[v];
                if g == Vec3::zero() {
                    continue;
                }
                let n = self.vertex_n[v];
                g_face[f] += (g - n * n.dot(g)) / self.vsum[v].1;
            }
        }
    }

    /// Pulls gradients on unit face normals back onto vertex positions.
    fn face_to_positions(&self, mesh: &TriMesh<T>, g_face: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let mut grad = vec![Vec3::zero(); mesh.vertex_count()];
        for (f, face) in mesh.faces().iter().enumerate() {
            let g = g_face[f];
            if g == Vec3::zero() {
                continue;
            }
            let n = self.face_n[f];
            let gc = (g - n * n.dot(g)) / self.cross[f].1;
            let [a, b, c] = mesh.triangle(f);
            let (e1, e2) = (b - a, c - a);
            let g1 = e2.cross(gc);
            let g2 = gc.cross(e1);
            grad[face[1]] += g1;
            grad[face[2]] += g2;
            grad[face[0]] -= g1 + g2;
        }
        grad
    }
}

/// Vertex-normal agreement between prediction and target.
///
/// For each target vertex, `1 - cos` between its normal and the normal of the
/// nearest predicted vertex, averaged; plus the same from each predicted
/// vertex to its nearest target vertex. Target normals are constants; the
/// gradient flows through the predicted vertex normals.
pub fn normal_inter<T: Real>(pred: &TriMesh<T>, gt: &Target<T>) -> Result<LossTerm<T>> {
    if pred.is_empty() {
        return Err(Error::Empty("predicted mesh has no vertices".into()));
    }
    normal_inter_matched(pred, gt, &gt.matching(pred))
}

pub(super) fn normal_inter_matched<T: Real>(pred: &TriMesh<T>, gt: &Target<T>, m: &Matching<T>) -> Result<LossTerm<T>> {
    let frame = NormalFrame::new(pred, true)?;
    let pv = pred.vertices();
    let gn = gt.normals();
    let mut g_vertex = vec![Vec3::zero(); pv.len()];

    let inv_gt = T::one() / T::of_usize(gn.len());
    let mut a = T::zero();
    for (nu, &(j, _)) in gn.iter().zip(&m.gt_to_pred) {
        a += T::one() - frame.vertex_n[j].dot(*nu);
        g_vertex[j] -= *nu * inv_gt;
    }

    let inv_p = T::one() / T::of_usize(pv.len());
    let mut b = T::zero();
    for (v, &(i, _)) in m.pred_to_gt.iter().enumerate() {
        let nu = gn[i];
        b += T::one() - frame.vertex_n[v].dot(nu);
        g_vertex[v] -= nu * inv_p;
    }

    let mut g_face = vec![Vec3::zero(); pred.face_count()];
    frame.vertex_to_face(pred, &g_vertex, &mut g_face);
    Ok(LossTerm {
        value: a * inv_gt + b * inv_p,
        grad: frame.face_to_positions(pred, &g_face),
    })
}

/// Dihedral smoothness: `1 - cos` between the normals of the two faces at
/// every interior edge, summed and divided by the total edge count.
/// Boundary edges contribute nothing.
pub fn normal_intra<T: Real>(pred: &TriMesh<T>) -> Result<LossTerm<T>> {
    let topo = pred.topology();
    let n_edges = topo.edges().len();
    if n_edges == 0 {
        return Err(Error::Empty("mesh has no edges".into()));
    }
    let frame = NormalFrame::new(pred, false)?;
    let inv = T::one() / T::of_usize(n_edges);
    let mut value = T::zero();
    let mut g_face = vec![Vec3::zero(); pred.face_count()];
    for (e, [a, b]) in topo.edges().iter().enumerate() {
        match *topo.edge_faces(e) {
            [_] => {}
            [f1, f2] => {
                let (n1, n2) = (frame.face_n[f1], frame.face_n[f2]);
                value += T::one() - n1.dot(n2);
                g_face[f1] -= n2 * inv;
                g_face[f2] -= n1 * inv;
            }
            ref fs => {
                return Err(Error::NonManifoldEdge {
                    a: *a,
                    b: *b,
                    count: fs.len(),
                })
            }
        }
    }
    Ok(LossTerm {
        value: value * inv,
        grad: frame.face_to_positions(pred, &g_face),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;
    use crate::losses::testutil::{bumpy_sphere, numeric_grad, rel_error};
    use crate::mesh::{shapes, vertex_normals};

    #[test]
    fn identical_is_zero() {
        let m = bumpy_sphere(2, 4.0, 0.2, 3);
        let t = Target::new(m.clone()).unwrap();
        assert!(normal_inter(&m, &t).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn orthogonal_normals_give_two() {
        // A flat grid and a copy rotated 90 degrees about the x axis, both
        // spanning the same x/y footprint after rotation.
        let gt = shapes::grid::<f64>(6, 6, 1.0);
        let rot = Mat3::rotation(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_2);
        let pred = gt.map_vertices(|p| rot.mul_vec(p)).unwrap();
        let t = Target::new(gt.clone()).unwrap();
        let r = normal_inter(&pred, &t).unwrap();
        // Brute-force pairing oracle.
        let (np, ng) = (vertex_normals(&pred).unwrap(), vertex_normals(&gt).unwrap());
        let nearest = |p: Vec3<f64>, set: &[Vec3<f64>]| {
            (0..set.len()).min_by(|&a, &b| p.distance_sq(set[a]).total_cmp(&p.distance_sq(set[b]))).unwrap()
        };
        let mut oracle = 0.0;
        for (u, nu) in gt.vertices().iter().zip(&ng) {
            oracle += (1.0 - nu.dot(np[nearest(*u, pred.vertices())])) / 36.0;
        }
        for (v, nv) in pred.vertices().iter().zip(&np) {
            oracle += (1.0 - nv.dot(ng[nearest(*v, gt.vertices())])) / 36.0;
        }
        assert!((r.value - oracle).abs() < 1e-12);
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inter_gradient_matches_finite_differences() {
        // 42-vertex prediction against a finer target.
        let gt = bumpy_sphere(2, 5.0, 0.2, 4);
        let pred = bumpy_sphere(1, 5.3, 0.6, 5);
        let t = Target::new(gt).unwrap();
        let r = normal_inter(&pred, &t).unwrap();
        let num = numeric_grad(&pred, 1e-6, |m| normal_inter(m, &t).unwrap().value);
        assert!(rel_error(&r.grad, &num) < 1e-3, "{}", rel_error(&r.grad, &num));
    }

    #[test]
    fn intra_flat_is_zero() {
        let g = shapes::grid::<f64>(5, 5, 1.0);
        assert!(normal_intra(&g).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn intra_right_angle_fold() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        assert_eq!(m.edges().len(), 5);
        assert!((normal_intra(&m).unwrap().value - 0.2f64).abs() < 1e-15);
    }

    #[test]
    fn intra_gradient_matches_finite_differences() {
        let m = bumpy_sphere(1, 3.0, 0.5, 6);
        let r = normal_intra(&m).unwrap();
        let num = numeric_grad(&m, 1e-6, |m| normal_intra(m).unwrap().value);
        assert!(rel_error(&r.grad, &num) < 1e-3);
    }

    #[test]
    fn intra_rejects_non_manifold() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, -1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        )
        .unwrap();
        assert!(matches!(normal_intra(&m), Err(Error::NonManifoldEdge { .. })));
    }

    #[test]
    fn degenerate_face_errors() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(normal_intra(&m), Err(Error::DegenerateFace { face: 0 })));
    }
}
