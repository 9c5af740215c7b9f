use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::volume::{BinaryMask, VoxelGrid};

use super::chamfer::chamfer_matched;
use super::normals::normal_inter_matched;
use super::{bce_segmentation, displacement_reg, edge_length_loss, normal_intra, LossWeights, StepWeights, Target};

/// Everything one evaluation of the composed loss looks at.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a, T> {
    /// Predicted (deformed) mesh.
    pub pred: &'a TriMesh<T>,
    pub target: &'a Target<T>,
    /// Displacements that produced `pred`, one per vertex.
    pub disp: &'a [Vec3<T>],
    /// Soft predicted segmentation and ground-truth mask, when available.
    pub masks: Option<(&'a VoxelGrid<T>, &'a BinaryMask<T>)>,
}

/// Per-term values, the multipliers used, and the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    pub t: Option<u64>,
    /// Zero when no masks were supplied.
    pub seg: T,
    pub chamfer: T,
    pub norm_inter: T,
    pub norm_intra: T,
    pub edge: T,
    pub disp: T,
    pub total: T,
    pub weights: StepWeights<T>,
}

impl<T: Real> LossBreakdown<T> {
    pub const CSV_HEADER: &'static str = "t,seg,chamfer,norm_inter,norm_intra,edge,disp,total";

    /// Total recomputed from the stored terms and multipliers.
    pub fn recompose(&self) -> T {
        self.total_with(&self.weights)
    }

    /// Total of the stored terms under other multipliers.
    pub fn total_with(&self, w: &StepWeights<T>) -> T {
        w.seg * self.seg
            + w.delay
                * (w.chamfer * self.chamfer
                    + w.norm_inter * self.norm_inter
                    + w.norm_intra * self.norm_intra
                    + w.edge * self.edge
                    + w.disp * self.disp)
    }

    /// One CSV row matching [`Self::CSV_HEADER`]; `t` is empty when unscheduled.
    pub fn csv_row(&self) -> String {
        let t = self.t.map(|t| t.to_string()).unwrap_or_default();
        format!(
            "{t},{},{},{},{},{},{},{}",
            self.seg, self.chamfer, self.norm_inter, self.norm_intra, self.edge, self.disp, self.total
        )
    }
}

/// Gradient of the total loss, split by the variable it is taken against.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalGradient<T> {
    /// Through the predicted vertex positions (Chamfer, normals, edge, and
    /// the edge-length weights of the regularizer).
    pub wrt_vertices: Vec<Vec3<T>>,
    /// Through the displacement values of the regularizer.
    pub wrt_displacement: Vec<Vec3<T>>,
}

impl<T: Real> TotalGradient<T> {
    /// Gradient with respect to the displacements when the prediction is
    /// `reference + displacement`.
    pub fn combined(&self) -> Vec<Vec3<T>> {
        self.wrt_vertices
            .iter()
            .zip(&self.wrt_displacement)
            .map(|(a, b)| *a + *b)
            .collect()
    }
}

/// Evaluates every term of the composed loss and its gradient.
///
/// `t = None` uses the base weights with every schedule factor set to 1. The
/// segmentation term has no mesh gradient.
pub fn total_loss<T: Real>(
    inputs: &LossInputs<'_, T>,
    weights: &LossWeights<T>,
    t: Option<u64>,
) -> Result<(LossBreakdown<T>, TotalGradient<T>)> {
    weights.validate()?;
    let pred = inputs.pred;
    let n = pred.vertex_count();
    if inputs.disp.len() != n {
        return Err(Error::ShapeMismatch(format!("{} displacements for {n} vertices", inputs.disp.len())));
    }
    let w = weights.at(t);
    let seg = match inputs.masks {
        Some((p, g)) => bce_segmentation(p, g)?,
        None => T::zero(),
    };
    if pred.is_empty() {
        return Err(Error::Empty("predicted mesh has no vertices".into()));
    }
    let matching = inputs.target.matching(pred);
    let chamfer = chamfer_matched(pred, inputs.target, &matching, weights.kappa_max, weights.chamfer_curvature);
    let ni = normal_inter_matched(pred, inputs.target, &matching)?;
    let na = normal_intra(pred)?;
    let edge = edge_length_loss(pred)?;
    let disp = displacement_reg(inputs.disp, pred, weights.disp_weighting)?;

    let scaled = [
        (&chamfer.grad, w.delay * w.chamfer),
        (&ni.grad, w.delay * w.norm_inter),
        (&na.grad, w.delay * w.norm_intra),
        (&edge.grad, w.delay * w.edge),
        (&disp.grad_pos, w.delay * w.disp),
    ];
    let mut wrt_vertices = vec![Vec3::zero(); n];
    for (grad, c) in scaled {
        if c == T::zero() {
            continue;
        }
        for (acc, g) in wrt_vertices.iter_mut().zip(grad) {
            *acc += *g * c;
        }
    }
    let cd = w.delay * w.disp;
    let wrt_displacement = disp.grad_disp.iter().map(|g| *g * cd).collect();

    let mut breakdown = LossBreakdown {
        t,
        seg,
        chamfer: chamfer.value,
        norm_inter: ni.value,
        norm_intra: na.value,
        edge: edge.value,
        disp: disp.value,
        total: T::zero(),
        weights: w,
    };
    breakdown.total = breakdown.recompose();
    Ok((
        breakdown,
        TotalGradient {
            wrt_vertices,
            wrt_displacement,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{chamfer_curvature, normal_inter};
    use crate::losses::testutil::{bumpy_sphere, numeric_grad, rel_error};
    use crate::losses::{DispWeighting, ScheduleParams};
    use crate::volume::GridGeometry;

    #[test]
    fn zero_terms_and_zero_weights() {
        let m = bumpy_sphere(1, 3.0, 0.2, 1);
        let target = Target::new(m.clone()).unwrap();
        let zeros = vec![Vec3::zero(); m.vertex_count()];
        let inputs = LossInputs { pred: &m, target: &target, disp: &zeros, masks: None };
        let w = LossWeights::<f64> {
            edge_base: 0.0,
            norm_intra: 0.0,
            ..Default::default()
        };
        let (b, _) = total_loss(&inputs, &w, Some(0)).unwrap();
        assert!(b.total.abs() < 1e-12);

        let other = bumpy_sphere(1, 4.0, 0.5, 2);
        let d: Vec<_> = other.vertices().iter().zip(m.vertices()).map(|(a, b)| *a - *b).collect();
        let inputs = LossInputs { pred: &other, target: &target, disp: &d, masks: None };
        let (b, g) = total_loss(&inputs, &LossWeights::zeros(), Some(5000)).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(g.combined().iter().all(|v| *v == Vec3::zero()));
    }

    #[test]
    fn recomposition_oracle() {
        let reference = bumpy_sphere(1, 3.0, 0.2, 3);
        let pred = bumpy_sphere(1, 3.4, 0.4, 4);
        let target = Target::new(bumpy_sphere(2, 3.2, 0.1, 5)).unwrap();
        let d: Vec<_> = pred.vertices().iter().zip(reference.vertices()).map(|(a, b)| *a - *b).collect();
        let geom = GridGeometry::new([5, 5, 5], Vec3::splat(1.0), Vec3::splat(-2.0)).unwrap();
        let gt_mask = BinaryMask::from_fn(geom, |p| p.norm() < 1.5);
        let soft = VoxelGrid::from_fn(geom, |p: Vec3<f64>| 1.0 / (1.0 + (p.norm() - 1.5).exp()));
        let weights = LossWeights::<f64> {
            chamfer: 1.3,
            norm_inter: 0.2,
            norm_intra: 0.15,
            edge_base: 0.7,
            disp: 0.4,
            seg_base: 0.9,
            kappa_max: 3.0,
            ..Default::default()
        };
        let inputs = LossInputs { pred: &pred, target: &target, disp: &d, masks: Some((&soft, &gt_mask)) };
        for t in [0u64, 2999, 3000, 4000, 10_000, 25_000] {
            let (b, _) = total_loss(&inputs, &weights, Some(t)).unwrap();
            let seg = bce_segmentation(&soft, &gt_mask).unwrap();
            let ch = chamfer_curvature(&pred, &target, 3.0, weights.chamfer_curvature).unwrap().value;
            let ni = normal_inter(&pred, &target).unwrap().value;
            let na = normal_intra(&pred).unwrap().value;
            let ed = edge_length_loss(&pred).unwrap().value;
            let dr = displacement_reg(&d, &pred, DispWeighting::InverseEdge).unwrap().value;
            let s = ScheduleParams::default();
            let hand = 0.9 * s.seg_edge(t) * seg
                + s.delay(t) * (1.3 * ch + 0.2 * ni + 0.15 * na + 0.7 * s.seg_edge(t) * ed + 0.4 * dr);
            assert!((b.total - hand).abs() <= 1e-12 * hand.abs());
        }
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let reference = bumpy_sphere(1, 3.0, 0.2, 6);
        let target = Target::new(bumpy_sphere(2, 3.5, 0.1, 7)).unwrap();
        let mut rng_d = bumpy_sphere(1, 0.5, 0.3, 8).into_vertices();
        rng_d.iter_mut().for_each(|v| *v = *v * 0.5);
        let weights = LossWeights::<f64>::default();
        let eval = |d: &[Vec3<f64>]| {
            let pv: Vec<_> = reference.vertices().iter().zip(d).map(|(a, b)| *a + *b).collect();
            let pred = reference.with_vertices(pv).unwrap();
            let inputs = LossInputs { pred: &pred, target: &target, disp: d, masks: None };
            total_loss(&inputs, &weights, Some(4000)).unwrap()
        };
        let (_, g) = eval(&rng_d);
        let as_mesh = reference.with_vertices(rng_d.clone()).unwrap();
        let num = numeric_grad(&as_mesh, 1e-6, |m| eval(m.vertices()).0.total);
        assert!(rel_error(&g.combined(), &num) < 1e-3);
    }

    #[test]
    fn csv_row_format() {
        let m = bumpy_sphere(1, 3.0, 0.2, 9);
        let target = Target::new(m.clone()).unwrap();
        let zeros = vec![Vec3::zero(); m.vertex_count()];
        let inputs = LossInputs { pred: &m, target: &target, disp: &zeros, masks: None };
        let (b, _) = total_loss(&inputs, &LossWeights::default(), Some(7)).unwrap();
        let row = b.csv_row();
        assert!(row.starts_with("7,0,"));
        assert_eq!(row.split(',').count(), LossBreakdown::<f64>::CSV_HEADER.split(',').count());
    }
}
