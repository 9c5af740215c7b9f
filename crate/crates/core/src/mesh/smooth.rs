use crate::geometry::Vec3;
use crate::scalar::Real;

use super::TriMesh;

/// Umbrella-operator smoothing: each pass moves every vertex by
/// `factor * (neighbor centroid - vertex)`, all vertices updated at once.
/// Connectivity is untouched; isolated vertices do not move.
pub fn laplacian_smooth<T: Real>(mesh: &TriMesh<T>, iterations: usize, factor: T) -> TriMesh<T> {
    let topo = mesh.topology();
    let mut cur = mesh.vertices().to_vec();
    let mut next = cur.clone();
    for _ in 0..iterations {
        for (v, out) in next.iter_mut().enumerate() {
            let nbrs = topo.neighbors(v);
            if nbrs.is_empty() {
                *out = cur[v];
                continue;
            }
            let c = nbrs.iter().fold(Vec3::zero(), |acc, &j| acc + cur[j]) / T::of_usize(nbrs.len());
            *out = cur[v] + (c - cur[v]) * factor;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    mesh.with_vertices(cur).expect("smoothing keeps the vertex count")
}
