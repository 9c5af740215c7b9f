use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::DispWeighting;

/// Displacement regularizer value with gradients with respect to the
/// displacements and to the vertex positions (through the edge-length
/// weights; zero for uniform weights).
#[derive(Debug, Clone, PartialEq)]
pub struct DispRegTerm<T> {
    pub value: T,
    pub grad_disp: Vec<Vec3<T>>,
    pub grad_pos: Vec<Vec3<T>>,
}

/// Mean over vertices of `|d(v) - sum_n w(v, n) d(n)|^2`.
///
/// With [`DispWeighting::InverseEdge`], `w(v, n)` is proportional to the
/// inverse length of edge (v, n) on `mesh`, normalized to sum to one over the
/// neighbors of `v`; with [`DispWeighting::Uniform`] it is `1 / |N(v)|`.
pub fn displacement_reg<T: Real>(disp: &[Vec3<T>], mesh: &TriMesh<T>, weighting: DispWeighting) -> Result<DispRegTerm<T>> {
    let n = mesh.vertex_count();
    if disp.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} displacements for {n} vertices",
            disp.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("mesh has no vertices".into()));
    }
    let pos = mesh.vertices();
    let inv_n = T::one() / T::of_usize(n);
    let mut value = T::zero();
    let mut grad_disp = vec![Vec3::zero(); n];
    let mut grad_pos = vec![Vec3::zero(); n];
    let mut w = Vec::new();
    let mut s = Vec::new();
    for v in 0..n {
        let nbrs = mesh.neighbors(v);
        if nbrs.is_empty() {
            return Err(Error::IsolatedVertex { vertex: v });
        }
        w.clear();
        s.clear();
        let mut total = T::zero();
        match weighting {
            DispWeighting::Uniform => {
                let u = T::one() / T::of_usize(nbrs.len());
                w.extend(std::iter::repeat(u).take(nbrs.len()));
            }
            DispWeighting::InverseEdge => {
                for &m in nbrs {
                    let len = pos[v].distance(pos[m]);
                    if !(len > T::zero()) {
                        return Err(Error::ZeroLengthEdge { a: v.min(m), b: v.max(m) });
                    }
                    s.push(T::one() / len);
                    total += T::one() / len;
                }
                w.extend(s.iter().map(|&x| x / total));
            }
        }
        let mut r = disp[v];
        for (&m, &wm) in nbrs.iter().zip(&w) {
            r -= disp[m] * wm;
        }
        value += r.norm_sq();
        let gr = r * (T::two() * inv_n);
        grad_disp[v] += gr;
        for (&m, &wm) in nbrs.iter().zip(&w) {
            grad_disp[m] -= gr * wm;
        }
        if weighting == DispWeighting::InverseEdge {
            // dL/dw_m = -gr . d_m ; w_m = s_m / S ; s_m = 1 / |p_v - p_m|.
            let a: Vec<T> = nbrs.iter().map(|&m| -gr.dot(disp[m])).collect();
            let mean_a = a.iter().zip(&w).fold(T::zero(), |acc, (&ai, &wi)| acc + ai * wi);
            for (k, &m) in nbrs.iter().enumerate() {
                let dl_ds = (a[k] - mean_a) / total;
                let len = T::one() / s[k];
                // ds/dlen = -1/len^2, dlen/dp_v = (p_v - p_m)/len.
                let g = (pos[v] - pos[m]) * (-dl_ds * s[k] * s[k] / len);
                grad_pos[v] += g;
                grad_pos[m] -= g;
            }
        }
    }
    Ok(DispRegTerm {
        value: value * inv_n,
        grad_disp,
        grad_pos,
    })
}
