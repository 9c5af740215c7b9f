use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, VoxelGrid};

/// Probability clamp used by [`bce_segmentation`].
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy of a soft prediction against a mask, with the
/// prediction clamped to `[eps, 1 - eps]`.
pub fn bce_segmentation<T: Real>(pred: &VoxelGrid<T>, gt: &BinaryMask<T>) -> Result<T> {
    pred.geometry.check_same(&gt.geometry, "segmentation loss")?;
    if pred.data().is_empty() {
        return Err(Error::Empty("empty volume".into()));
    }
    let eps = T::of(BCE_EPS);
    let hi = T::one() - eps;
    let mut sum = T::zero();
    for (&p, &y) in pred.data().iter().zip(gt.data()) {
        let p = p.max(eps).min(hi);
        sum -= if y == 1 { p.ln() } else { (T::one() - p).ln() };
    }
    Ok(sum / T::of_usize(pred.data().len()))
}
