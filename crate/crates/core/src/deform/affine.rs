use crate::geometry::{Mat3, Point3, Vec3};
use crate::scalar::Real;
use crate::spatial::KdTree;

/// Affine map `p -> a p + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine<T> {
    pub a: Mat3<T>,
    pub b: Vec3<T>,
}

impl<T: Real> Affine<T> {
    pub fn identity() -> Self {
        Self {
            a: Mat3::identity(),
            b: Vec3::zero(),
        }
    }

    pub fn apply(&self, p: Point3<T>) -> Point3<T> {
        self.a.mul_vec(p) + self.b
    }
}

/// Least-squares affine map sending `src[i]` to `dst[i]`; `None` when the
/// source points are (near) coplanar.
pub fn fit_affine<T: Real>(pairs: &[(Point3<T>, Point3<T>)]) -> Option<Affine<T>> {
    fit_affine_weighted(pairs, &vec![T::one(); pairs.len()])
}

/// [`fit_affine`] with a non-negative weight per pair.
pub fn fit_affine_weighted<T: Real>(pairs: &[(Point3<T>, Point3<T>)], weights: &[T]) -> Option<Affine<T>> {
    let total = weights.iter().fold(T::zero(), |s, &w| s + w);
    if pairs.len() != weights.len() || !(total > T::zero()) {
        return None;
    }
    let wmean = |pick: fn(&(Point3<T>, Point3<T>)) -> Point3<T>| {
        pairs.iter().zip(weights).fold(Vec3::zero(), |acc, (p, &w)| acc + pick(p) * w) / total
    };
    let sc = wmean(|p| p.0);
    let dc = wmean(|p| p.1);
    let mut ss = Mat3::zero();
    let mut ds = Mat3::zero();
    for (&(s, d), &w) in pairs.iter().zip(weights) {
        let (s, d) = (s - sc, d - dc);
        ss = ss.add(&Mat3::outer(s, s * w));
        ds = ds.add(&Mat3::outer(d, s * w));
    }
    let scale = ss.frobenius_norm();
    if !(scale > T::zero()) || ss.determinant() <= scale * scale * scale * T::of(1e-9) {
        return None;
    }
    let a = ds.mul_mat(&ss.inverse()?);
    Some(Affine { a, b: dc - a.mul_vec(sc) })
}

/// Symmetric affine ICP. Runs closest-vertex pairing in both directions with
/// a least-squares affine fit from several starts (centroid translation and
/// the second-moment alignments that preserve orientation) and keeps the
/// result with the smallest symmetric residual.
pub fn align_affine<T: Real>(source: &[Point3<T>], target: &[Point3<T>], iterations: usize) -> Affine<T> {
    let (Some(sc), Some(tc)) = (Vec3::mean(source.iter().copied()), Vec3::mean(target.iter().copied())) else {
        return Affine::identity();
    };
    let target_tree = KdTree::new(target);
    let mut starts = vec![Affine {
        a: Mat3::identity(),
        b: tc - sc,
    }];
    starts.extend(moment_starts(source, sc, target, tc));
    let mut best: Option<(T, Affine<T>)> = None;
    for start in starts {
        let xf = icp(source, target, &target_tree, start, iterations);
        let r = residual(source, target, &target_tree, &xf);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, xf));
        }
    }
    best.map(|b| b.1).unwrap_or_else(Affine::identity)
}

fn icp<T: Real>(source: &[Point3<T>], target: &[Point3<T>], target_tree: &KdTree<T>, mut xf: Affine<T>, iterations: usize) -> Affine<T> {
    let mut pairs = Vec::with_capacity(source.len() + target.len());
    for _ in 0..iterations {
        let moved: Vec<_> = source.iter().map(|&p| xf.apply(p)).collect();
        let moved_tree = KdTree::new(&moved);
        pairs.clear();
        for (s, m) in source.iter().zip(&moved) {
            let (j, _) = target_tree.nearest(*m).expect("target is non-empty");
            pairs.push((*s, target[j]));
        }
        for t in target {
            let (i, _) = moved_tree.nearest(*t).expect("source is non-empty");
            pairs.push((source[i], *t));
        }
        let Some(next) = fit_affine(&pairs) else { break };
        let change = (0..3)
            .map(|r| (next.a.row(r) - xf.a.row(r)).max_abs())
            .fold((next.b - xf.b).max_abs(), |m, v| m.max(v));
        xf = next;
        if change < T::of(1e-9) {
            break;
        }
    }
    xf
}

/// Mean squared closest-vertex distance, both directions.
fn residual<T: Real>(source: &[Point3<T>], target: &[Point3<T>], target_tree: &KdTree<T>, xf: &Affine<T>) -> T {
    let moved: Vec<_> = source.iter().map(|&p| xf.apply(p)).collect();
    let moved_tree = KdTree::new(&moved);
    let fwd = moved.iter().fold(T::zero(), |s, &m| s + target_tree.nearest(m).expect("non-empty").1);
    let bwd = target.iter().fold(T::zero(), |s, &t| s + moved_tree.nearest(t).expect("non-empty").1);
    fwd / T::of(moved.len() as f64) + bwd / T::of(target.len() as f64)
}

fn covariance<T: Real>(pts: &[Point3<T>], c: Point3<T>) -> nalgebra::Matrix3<f64> {
    let mut m = nalgebra::Matrix3::zeros();
    for &p in pts {
        let d = (p - c).cast::<f64>();
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        m += v * v.transpose();
    }
    m / pts.len() as f64
}

/// Affine maps sending the source principal frame onto the target one, for
/// each axis-sign choice that keeps orientation.
fn moment_starts<T: Real>(source: &[Point3<T>], sc: Point3<T>, target: &[Point3<T>], tc: Point3<T>) -> Vec<Affine<T>> {
    let sorted = |m: nalgebra::Matrix3<f64>| {
        let e = nalgebra::SymmetricEigen::new(m);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let vals = idx.map(|i| e.eigenvalues[i]);
        let vecs = nalgebra::Matrix3::from_columns(&idx.map(|i| e.eigenvectors.column(i).into_owned()));
        (vals, vecs)
    };
    let (ls, vs) = sorted(covariance(source, sc));
    let (lt, vt) = sorted(covariance(target, tc));
    if ls.iter().chain(&lt).any(|&l| !(l > 1e-12)) {
        return Vec::new();
    }
    let scale = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::from_fn(|i, _| (lt[i] / ls[i]).sqrt()));
    let mut out = Vec::new();
    for mask in 0..8u8 {
        let signs = nalgebra::Vector3::from_fn(|i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
        let a = vt * nalgebra::Matrix3::from_diagonal(&signs) * scale * vs.transpose();
        if a.determinant() <= 0.0 {
            continue;
        }
        let a = Mat3::new(std::array::from_fn(|r| std::array::from_fn(|c| T::of(a[(r, c)]))));
        out.push(Affine { a, b: tc - a.mul_vec(sc) });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn exact_affine_recovered_from_pairs() {
        let a = Mat3::new([[1.1, 0.1, 0.0], [-0.05, 0.95, 0.2], [0.0, 0.1, 1.0]]);
        let b = Vec3::new(1.0, -2.0, 0.5);
        let pts = shapes::icosphere::<f64>(1, 3.0).into_vertices();
        let pairs: Vec<_> = pts.iter().map(|&p| (p, a.mul_vec(p) + b)).collect();
        let f = fit_affine(&pairs).unwrap();
        assert!((f.b - b).max_abs() < 1e-12);
        for r in 0..3 {
            assert!((f.a.row(r) - a.row(r)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn icp_recovers_moderate_rotation() {
        let src = shapes::icosphere::<f64>(3, 1.0)
            .into_vertices()
            .into_iter()
            .map(|p| Vec3::new(12.0 * p.x, 8.0 * p.y, 5.0 * p.z))
            .collect::<Vec<_>>();
        let rot = Mat3::rotation(Vec3::new(0.3, 1.0, 0.2), 0.2);
        let t = Vec3::new(6.0, -3.0, 2.0);
        let dst: Vec<_> = src.iter().map(|&p| rot.mul_vec(p) + t).collect();
        let xf = align_affine(&src, &dst, 60);
        let err = src.iter().map(|&p| xf.apply(p).distance(rot.mul_vec(p) + t)).fold(0.0, f64::max);
        assert!(err < 0.05, "max error {err}");
    }
}
