use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::target::Matching;
use super::{ChamferMode, LossTerm, Target};

/// Curvature-weighted symmetric Chamfer distance between vertex sets.
///
/// The target-to-prediction term weights each target vertex `u` by
/// `min(1 + k(u), kappa_max)`; the prediction-to-target term weights each
/// predicted vertex by the weight of its nearest target vertex. Each term is
/// a mean of squared distances.
pub fn chamfer_curvature<T: Real>(pred: &TriMesh<T>, gt: &Target<T>, kappa_max: T, mode: ChamferMode) -> Result<LossTerm<T>> {
    if pred.is_empty() {
        return Err(Error::Empty("predicted mesh has no vertices".into()));
    }
    Ok(chamfer_matched(pred, gt, &gt.matching(pred), kappa_max, mode))
}

pub(super) fn chamfer_matched<T: Real>(pred: &TriMesh<T>, gt: &Target<T>, m: &Matching<T>, kappa_max: T, mode: ChamferMode) -> LossTerm<T> {
    let kappa = gt.weights(kappa_max, mode);
    let pv = pred.vertices();
    let uv = gt.mesh().vertices();
    let mut grad = vec![crate::geometry::Vec3::zero(); pv.len()];

    let inv_gt = T::one() / T::of_usize(uv.len());
    let mut a = T::zero();
    for ((u, &w), &(j, d2)) in uv.iter().zip(&kappa).zip(&m.gt_to_pred) {
        a += w * d2;
        grad[j] += (pv[j] - *u) * (T::two() * w * inv_gt);
    }

    let inv_p = T::one() / T::of_usize(pv.len());
    let mut b = T::zero();
    for ((v, g), &(i, d2)) in pv.iter().zip(grad.iter_mut()).zip(&m.pred_to_gt) {
        let w = kappa[i];
        b += w * d2;
        *g += (*v - uv[i]) * (T::two() * w * inv_p);
    }
    LossTerm {
        value: a * inv_gt + b * inv_p,
        grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::losses::testutil::{bumpy_sphere, numeric_grad, rel_error};
    use crate::mesh::shapes;

    fn brute(pred: &[Vec3<f64>], gt: &[Vec3<f64>]) -> f64 {
        let dir = |a: &[Vec3<f64>], b: &[Vec3<f64>]| {
            a.iter()
                .map(|p| b.iter().map(|q| p.distance_sq(*q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / a.len() as f64
        };
        dir(gt, pred) + dir(pred, gt)
    }

    #[test]
    fn identical_is_zero() {
        let m = shapes::icosphere::<f64>(2, 5.0);
        let t = Target::new(m.clone()).unwrap();
        let r = chamfer_curvature(&m, &t, 5.0, ChamferMode::Weighted).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|g| *g == Vec3::zero()));
    }

    #[test]
    fn offset_grids_match_brute_force() {
        // Spacing 3: every vertex's nearest counterpart is its shifted twin.
        let gt = shapes::grid::<f64>(8, 8, 3.0);
        let pred = gt.translated(Vec3::new(1.0, 0.0, 0.0));
        let t = Target::new(gt.clone()).unwrap();
        let r = chamfer_curvature(&pred, &t, 5.0, ChamferMode::Classical).unwrap();
        assert!((r.value - brute(pred.vertices(), gt.vertices())).abs() < 1e-12);
        assert!((r.value - 2.0).abs() < 1e-12);

        // Unit spacing: shifted vertices coincide with the next column, so
        // only the outermost columns remain unmatched.
        let gt = shapes::grid::<f64>(12, 12, 1.0);
        let pred = gt.translated(Vec3::new(1.0, 0.0, 0.0));
        let t = Target::new(gt.clone()).unwrap();
        let r = chamfer_curvature(&pred, &t, 5.0, ChamferMode::Classical).unwrap();
        assert!((r.value - brute(pred.vertices(), gt.vertices())).abs() < 1e-12);
        assert!((r.value - 2.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gt = bumpy_sphere(1, 5.0, 0.3, 1);
        let pred = bumpy_sphere(1, 5.6, 0.5, 2).translated(Vec3::new(0.3, -0.2, 0.1));
        let t = Target::new(gt).unwrap();
        for mode in [ChamferMode::Weighted, ChamferMode::Classical] {
            let r = chamfer_curvature(&pred, &t, 5.0, mode).unwrap();
            let num = numeric_grad(&pred, 1e-4, |m| chamfer_curvature(m, &t, 5.0, mode).unwrap().value);
            assert!(rel_error(&r.grad, &num) < 1e-4);
        }
    }

    #[test]
    fn empty_pred_errors() {
        let t = Target::new(shapes::tetrahedron::<f64>()).unwrap();
        assert!(chamfer_curvature(&TriMesh::<f64>::empty(), &t, 5.0, ChamferMode::Weighted).is_err());
    }
}
