//! Deformers producing a displacement field that moves the reference mesh
//! onto a target: a direct per-case optimizer and a small graph-convolution
//! network.

mod affine;
mod field;
mod fit;
mod gnn;

pub use affine::{align_affine, fit_affine, fit_affine_weighted, Affine};
pub use field::DisplacementField;
pub use fit::{fit_direct, fit_direct_to, initial_displacement, FitConfig, FitInit, FitReport};
pub use gnn::{
    gnn_evaluate, gnn_forward, gnn_train, graph_conv, sample_vertex_features, GnnArch, GnnCase, GnnLayer, GnnParams,
    GnnStep, GnnTrainConfig,
};
