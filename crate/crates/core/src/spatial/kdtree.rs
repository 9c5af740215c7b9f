use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;
use crate::scalar::Real;

/// Static 3-d tree over a point set. Queries break distance ties toward the
/// lowest point index, so results are independent of tree layout.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    /// Point indices in implicit-tree order (node = midpoint of its range).
    order: Vec<usize>,
    /// Split axis of the node stored at each position of `order`.
    axis: Vec<u8>,
}

const LEAF: usize = 6;

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axis: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF {
            return;
        }
        let (mut mn, mut mx) = (self.points[self.order[lo]], self.points[self.order[lo]]);
        for &i in &self.order[lo..hi] {
            mn = mn.component_min(self.points[i]);
            mx = mx.component_max(self.points[i]);
        }
        let ext = mx - mn;
        let ax = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][ax].partial_cmp(&pts[b][ax]).unwrap_or(Ordering::Equal)
        });
        self.axis[mid] = ax as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index and squared distance of the closest point.
    pub fn nearest(&self, q: Vec3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, T::infinity());
        self.nearest_in(q, 0, self.points.len(), &mut best);
        Some(best)
    }

    fn consider(&self, q: Vec3<T>, i: usize, best: &mut (usize, T)) {
        let d = q.distance_sq(self.points[i]);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
    }

    fn nearest_in(&self, q: Vec3<T>, lo: usize, hi: usize, best: &mut (usize, T)) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                self.consider(q, i, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        self.consider(q, i, best);
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[i][ax];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }

    /// The `k` closest points as `(index, squared distance)`, nearest first.
    pub fn k_nearest(&self, q: Vec3<T>, k: usize) -> Vec<(usize, T)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(q, k, 0, self.points.len(), &mut heap);
        let mut out: Vec<_> = heap.into_iter().map(|c: Cand<T>| (c.i, c.d)).collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_push(&self, q: Vec3<T>, k: usize, i: usize, heap: &mut BinaryHeap<Cand<T>>) {
        let c = Cand {
            d: q.distance_sq(self.points[i]),
            i,
        };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(c);
        }
    }

    fn knn_in(&self, q: Vec3<T>, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Cand<T>>) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                self.knn_push(q, k, i, heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        self.knn_push(q, k, i, heap);
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[i][ax];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_in(q, k, near.0, near.1, heap);
        if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d {
            self.knn_in(q, k, far.0, far.1, heap);
        }
    }
}

/// Max-heap entry ordered by (distance, index).
#[derive(Clone, Copy, Debug)]
struct Cand<T> {
    d: T,
    i: usize,
}

impl<T: Real> PartialEq for Cand<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Cand<T> {}
impl<T: Real> PartialOrd for Cand<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Cand<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d
            .partial_cmp(&o.d)
            .unwrap_or(Ordering::Equal)
            .then(self.i.cmp(&o.i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3<f64>], q: Vec3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = q.distance_sq(*p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..500)
            .map(|_| Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..300 {
            let q = Vec3::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-2.0..2.0));
            assert_eq!(tree.nearest(q).unwrap(), brute(&pts, q));
            let knn = tree.k_nearest(q, 8);
            let mut all: Vec<_> = pts.iter().enumerate().map(|(i, p)| (i, q.distance_sq(*p))).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(knn, all[..8].to_vec());
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0); 20];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(Vec3::zero()).unwrap().0, 0);
    }
}
