//! Triangle meshes with shared, immutable connectivity.
//!
//! A [`TriMesh`] pairs a vertex buffer with an `Arc<Topology>`. Deformed
//! copies of a mesh (`with_vertices`) share the same topology, which is what
//! keeps vertex identity intact across registration.

mod curvature;
mod normals;
mod obj;
pub mod shapes;
mod smooth;

use std::collections::HashMap;
use std::sync::Arc;

pub use curvature::{curvature_weight, mean_curvature};
pub use normals::{face_normal, face_normals, vertex_normal, vertex_normals, FACE_AREA_EPS};
pub use obj::{read_obj, write_obj, read_vertex_scalars, write_vertex_scalars};
pub use smooth::laplacian_smooth;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::scalar::Real;

/// Connectivity derived from a face list.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n_vertices: usize,
    faces: Vec<[usize; 3]>,
    /// Unordered edges stored as `[lo, hi]`, sorted lexicographically.
    edges: Vec<[usize; 2]>,
    /// Faces incident to each edge, in ascending face order.
    edge_faces: Vec<Vec<usize>>,
    /// Sorted neighbor lists N(i).
    neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n_vertices) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but the mesh has {n_vertices} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex index: {f:?}"
                )));
            }
        }

        let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(faces.len() * 3 / 2 + 1);
        let mut vertex_faces = vec![Vec::new(); n_vertices];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_map.entry((a.min(b), a.max(b))).or_default().push(fi);
                vertex_faces[f[k]].push(fi);
            }
        }
        let mut keyed: Vec<_> = edge_map.into_iter().collect();
        keyed.sort_unstable_by_key(|(k, _)| *k);

        let mut neighbors = vec![Vec::new(); n_vertices];
        let mut edges = Vec::with_capacity(keyed.len());
        let mut edge_faces = Vec::with_capacity(keyed.len());
        for ((a, b), fs) in keyed {
            neighbors[a].push(b);
            neighbors[b].push(a);
            edges.push([a, b]);
            edge_faces.push(fs);
        }
        for n in neighbors.iter_mut() {
            n.sort_unstable();
        }
        Ok(Self {
            n_vertices,
            faces,
            edges,
            edge_faces,
            neighbors,
            vertex_faces,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_faces(&self, edge: usize) -> &[usize] {
        &self.edge_faces[edge]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn all_neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// First edge whose face count differs from two, if any.
    pub fn first_open_edge(&self) -> Option<([usize; 2], usize)> {
        self.edges
            .iter()
            .zip(&self.edge_faces)
            .find(|(_, fs)| fs.len() != 2)
            .map(|(e, fs)| (*e, fs.len()))
    }

    /// Vertices lying on an edge with a single incident face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut b = vec![false; self.n_vertices];
        for (e, fs) in self.edges.iter().zip(&self.edge_faces) {
            if fs.len() == 1 {
                b[e[0]] = true;
                b[e[1]] = true;
            }
        }
        b
    }
}

/// Triangle mesh with vertices in millimetres.
#[derive(Debug, Clone)]
pub struct TriMesh<T> {
    vertices: Vec<Point3<T>>,
    topology: Arc<Topology>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let topology = Arc::new(Topology::new(vertices.len(), faces)?);
        Self::from_topology(vertices, topology)
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            topology: Arc::new(Topology::new(0, Vec::new()).expect("empty topology")),
        }
    }

    pub fn from_topology(vertices: Vec<Point3<T>>, topology: Arc<Topology>) -> Result<Self> {
        if vertices.len() != topology.vertex_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} vertices for a topology of {}",
                vertices.len(),
                topology.vertex_count()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self { vertices, topology })
    }

    /// Same connectivity, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<T>>) -> Result<Self> {
        Self::from_topology(vertices, Arc::clone(&self.topology))
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point3<T>> {
        self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        self.topology.edges()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.topology.neighbors(v)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.topology.faces().len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn shares_topology(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology) || *self.topology == *other.topology
    }

    pub fn triangle(&self, f: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.faces()[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edges().len() as i64 + self.face_count() as i64
    }

    pub fn is_watertight(&self) -> bool {
        self.topology.first_open_edge().is_none()
    }

    pub fn check_watertight(&self) -> Result<()> {
        match self.topology.first_open_edge() {
            None => Ok(()),
            Some(([a, b], count)) => Err(Error::NotWatertight { a, b, count }),
        }
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn enclosed_volume(&self) -> T {
        let six = T::of(6.0);
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(b.cross(c)) / six
            })
            .sum()
    }

    pub fn surface_area(&self) -> T {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (b - a).cross(c - a).norm() * T::half()
            })
            .sum()
    }

    /// Axis-aligned bounds `(min, max)`, `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), &v| {
            (lo.component_min(v), hi.component_max(v))
        }))
    }

    pub fn centroid(&self) -> Option<Point3<T>> {
        Vec3::mean(self.vertices.iter().copied())
    }

    pub fn mean_edge_length(&self) -> T {
        let e = self.edges();
        if e.is_empty() {
            return T::zero();
        }
        e.iter()
            .map(|&[a, b]| self.vertices[a].distance(self.vertices[b]))
            .sum::<T>()
            / T::of_usize(e.len())
    }

    pub fn map_vertices(&self, mut f: impl FnMut(Point3<T>) -> Point3<T>) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(|&v| f(v)).collect())
    }

    pub fn translated(&self, t: Vec3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + t).collect(),
            topology: Arc::clone(&self.topology),
        }
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            topology: Arc::clone(&self.topology),
        }
    }

    /// Extracts the faces selected by `keep`, compacting vertex indices.
    /// Returns the sub-mesh and, per new vertex, its index in `self`.
    pub fn submesh(&self, keep: impl Fn(usize) -> bool) -> Result<(Self, Vec<usize>)> {
        let mut remap = vec![usize::MAX; self.vertex_count()];
        let mut original = Vec::new();
        let mut faces = Vec::new();
        for (fi, f) in self.faces().iter().enumerate() {
            if !keep(fi) {
                continue;
            }
            let mut nf = [0usize; 3];
            for (k, &v) in f.iter().enumerate() {
                if remap[v] == usize::MAX {
                    remap[v] = original.len();
                    original.push(v);
                }
                nf[k] = remap[v];
            }
            faces.push(nf);
        }
        let verts = original.iter().map(|&i| self.vertices[i]).collect();
        Ok((Self::new(verts, faces)?, original))
    }
}

/// Per-vertex neighbor lists N(i), sorted ascending.
pub fn build_adjacency<T: Real>(mesh: &TriMesh<T>) -> Vec<Vec<usize>> {
    mesh.topology().all_neighbors().to_vec()
}

/// One scalar per vertex (curvature, labels, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScalars<T> {
    pub values: Vec<T>,
}

impl<T: Copy> VertexScalars<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::shapes;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn tetrahedron_is_complete_graph() {
        let m = shapes::tetrahedron::<f64>();
        for i in 0..4 {
            assert_eq!(m.neighbors(i).len(), 3);
        }
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_watertight());
    }

    #[test]
    fn single_triangle_neighbors() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let adj = build_adjacency(&m);
        assert!(adj.iter().all(|n| n.len() == 2));
        assert!(!m.is_watertight());
    }

    #[test]
    fn degree_sum_matches_brute_force_edge_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let verts: Vec<_> = (0..n)
            .map(|_| Vec3::new(rng.gen::<f64>(), rng.gen(), rng.gen()))
            .collect();
        let mut faces = Vec::new();
        while faces.len() < 100 {
            let f = [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)];
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                faces.push(f);
            }
        }
        let m = TriMesh::new(verts, faces.clone()).unwrap();
        // Oracle: enumerate every face boundary pair.
        let mut brute = BTreeSet::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                brute.insert((a.min(b), a.max(b)));
            }
        }
        let adj = build_adjacency(&m);
        let degree_sum: usize = adj.iter().map(Vec::len).sum();
        assert_eq!(degree_sum, 2 * brute.len());
        assert_eq!(m.edges().len(), brute.len());
        for (i, n) in adj.iter().enumerate() {
            for &j in n {
                assert!(adj[j].contains(&i));
            }
        }
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::<f64>::zero(); 3];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn submesh_compacts_indices() {
        let m = shapes::tetrahedron::<f64>();
        let (s, orig) = m.submesh(|f| f < 2).unwrap();
        assert_eq!(s.face_count(), 2);
        assert_eq!(s.vertex_count(), orig.len());
        for (i, &o) in orig.iter().enumerate() {
            assert_eq!(s.vertices()[i], m.vertices()[o]);
        }
    }
}
