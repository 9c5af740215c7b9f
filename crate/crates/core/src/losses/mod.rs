//! The composed registration loss: segmentation BCE, curvature-weighted
//! Chamfer, inter- and intra-mesh normal consistency, edge length and
//! displacement regularization, each with an analytic gradient, plus the
//! arctan weight schedules.
//!
//! Nearest-vertex assignments are frozen within one evaluation, so the
//! gradients are exact for the piecewise-smooth objective.

mod bce;
mod chamfer;
mod disp;
mod edge;
mod normals;
mod target;
mod total;
mod weights;

pub use bce::{bce_segmentation, BCE_EPS};
pub use chamfer::chamfer_curvature;
pub use disp::{displacement_reg, DispRegTerm};
pub use edge::edge_length_loss;
pub use normals::{normal_inter, normal_intra};
pub use target::Target;
pub use total::{total_loss, LossBreakdown, LossInputs, TotalGradient};
pub use weights::{
    schedule_delay, schedule_seg_edge, ChamferMode, DispWeighting, LossWeights, ScheduleParams, StepWeights,
};

use crate::geometry::Vec3;

/// A loss value with its gradient with respect to each predicted vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm<T> {
    pub value: T,
    pub grad: Vec<Vec3<T>>,
}
