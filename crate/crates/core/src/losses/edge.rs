use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::LossTerm;

/// Mean squared edge length.
pub fn edge_length_loss<T: Real>(pred: &TriMesh<T>) -> Result<LossTerm<T>> {
    let edges = pred.edges();
    if edges.is_empty() {
        return Err(Error::Empty("mesh has no edges".into()));
    }
    let inv = T::one() / T::of_usize(edges.len());
    let v = pred.vertices();
    let mut grad = vec![Vec3::zero(); v.len()];
    let mut value = T::zero();
    for &[a, b] in edges {
        let d = v[a] - v[b];
        value += d.norm_sq();
        let g = d * (T::two() * inv);
        grad[a] += g;
        grad[b] -= g;
    }
    Ok(LossTerm { value: value * inv, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::testutil::{bumpy_sphere, numeric_grad, rel_error};
    use crate::mesh::shapes;

    #[test]
    fn tetrahedron_is_one() {
        let r = edge_length_loss(&shapes::tetrahedron::<f64>()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapsed_is_zero() {
        let m = shapes::icosphere::<f64>(1, 2.0).map_vertices(|_| Vec3::splat(1.5)).unwrap();
        let r = edge_length_loss(&m).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn scaling_by_two_quadruples() {
        let m = bumpy_sphere(1, 3.0, 0.3, 8);
        let a = edge_length_loss(&m).unwrap().value;
        let b = edge_length_loss(&m.map_vertices(|p| p * 2.0).unwrap()).unwrap().value;
        assert_eq!(b, 4.0 * a);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = bumpy_sphere(1, 3.0, 0.3, 9);
        let r = edge_length_loss(&m).unwrap();
        let num = numeric_grad(&m, 1e-4, |m| edge_length_loss(m).unwrap().value);
        assert!(rel_error(&r.grad, &num) < 1e-6);
    }
}
