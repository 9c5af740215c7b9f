use std::cmp::Ordering;

use crate::geometry::{Point3, Vec3};
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::triangle::closest_point_on_triangle;

/// Result of a closest-surface-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit<T> {
    pub face: usize,
    pub point: Point3<T>,
    pub barycentric: [T; 3],
    pub dist_sq: T,
}

#[derive(Debug, Clone)]
struct Node<T> {
    lo: Vec3<T>,
    hi: Vec3<T>,
    /// Leaf: range into `order`; inner: child node indices.
    kind: NodeKind,
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the triangles of a mesh, answering exact
/// closest-point queries. Ties go to the lowest face index.
#[derive(Debug, Clone)]
pub struct TriangleTree<T> {
    tris: Vec<[Point3<T>; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    pad: T,
}

impl<T: Real> TriangleTree<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let tris: Vec<_> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let scale = mesh
            .vertices()
            .iter()
            .fold(T::one(), |m, v| m.max(v.max_abs()));
        let mut tree = Self {
            order: (0..tris.len()).collect(),
            tris,
            nodes: Vec::new(),
            // Boxes are inflated so rounding in the barycentric closest point
            // can never place it outside its box.
            pad: scale * T::epsilon() * T::of(64.0),
        };
        if !tree.tris.is_empty() {
            tree.build(0, tree.tris.len());
        }
        tree
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    fn bounds(&self, start: usize, end: usize) -> (Vec3<T>, Vec3<T>) {
        let first = self.tris[self.order[start]][0];
        let (mut lo, mut hi) = (first, first);
        for &f in &self.order[start..end] {
            for p in &self.tris[f] {
                lo = lo.component_min(*p);
                hi = hi.component_max(*p);
            }
        }
        let pad = Vec3::splat(self.pad);
        (lo - pad, hi + pad)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let (lo, hi) = self.bounds(start, end);
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let ext = hi - lo;
        let ax = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        let tris = &self.tris;
        let key = |f: usize| tris[f][0][ax] + tris[f][1][ax] + tris[f][2][ax];
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn box_dist_sq(&self, node: usize, p: Vec3<T>) -> T {
        let n = &self.nodes[node];
        let mut d = T::zero();
        for k in 0..3 {
            let v = if p[k] < n.lo[k] {
                n.lo[k] - p[k]
            } else if p[k] > n.hi[k] {
                p[k] - n.hi[k]
            } else {
                T::zero()
            };
            d += v * v;
        }
        d
    }

    /// Closest point on the surface to `p`; `None` for an empty mesh.
    pub fn closest(&self, p: Point3<T>) -> Option<SurfaceHit<T>> {
        if self.tris.is_empty() {
            return None;
        }
        let mut best: Option<SurfaceHit<T>> = None;
        let mut stack = vec![(0usize, self.box_dist_sq(0, p))];
        while let Some((node, bd)) = stack.pop() {
            if let Some(b) = &best {
                if bd > b.dist_sq {
                    continue;
                }
            }
            match self.nodes[node].kind {
                NodeKind::Leaf { start, end } => {
                    for &f in &self.order[start..end] {
                        let [a, b, c] = self.tris[f];
                        let (q, w) = closest_point_on_triangle(p, a, b, c);
                        let d = p.distance_sq(q);
                        let better = match &best {
                            None => true,
                            Some(h) => d < h.dist_sq || (d == h.dist_sq && f < h.face),
                        };
                        if better {
                            best = Some(SurfaceHit {
                                face: f,
                                point: q,
                                barycentric: w,
                                dist_sq: d,
                            });
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let (dl, dr) = (self.box_dist_sq(left, p), self.box_dist_sq(right, p));
                    // Push the farther child first so the nearer is visited next.
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }

    /// Euclidean distance from `p` to the surface.
    pub fn distance(&self, p: Point3<T>) -> Option<T> {
        self.closest(p).map(|h| h.dist_sq.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force_on_sphere() {
        let m = shapes::icosphere::<f64>(2, 3.0);
        let tree = TriangleTree::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let hit = tree.closest(p).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for f in 0..m.face_count() {
                let [a, b, c] = m.triangle(f);
                let (q, _) = closest_point_on_triangle(p, a, b, c);
                let d = p.distance_sq(q);
                if d < best.1 {
                    best = (f, d);
                }
            }
            assert_eq!(hit.dist_sq, best.1);
            assert_eq!(hit.face, best.0);
        }
    }
}
