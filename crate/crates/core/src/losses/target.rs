use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{curvature_weight, mean_curvature, vertex_normals, TriMesh};
use crate::scalar::Real;
use crate::spatial::KdTree;

use super::ChamferMode;

/// Ground-truth surface with everything the losses need precomputed:
/// a vertex kd-tree, unit vertex normals and mean curvature.
#[derive(Debug, Clone)]
pub struct Target<T> {
    mesh: TriMesh<T>,
    tree: KdTree<T>,
    normals: Vec<Vec3<T>>,
    curvature: Vec<T>,
}

impl<T: Real> Target<T> {
    pub fn new(mesh: TriMesh<T>) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::Empty("target mesh has no vertices".into()));
        }
        let normals = vertex_normals(&mesh)?;
        let curvature = mean_curvature(&mesh)?.values;
        Ok(Self {
            tree: KdTree::new(mesh.vertices()),
            mesh,
            normals,
            curvature,
        })
    }

    pub fn mesh(&self) -> &TriMesh<T> {
        &self.mesh
    }

    pub fn tree(&self) -> &KdTree<T> {
        &self.tree
    }

    pub fn normals(&self) -> &[Vec3<T>] {
        &self.normals
    }

    pub fn curvature(&self) -> &[T] {
        &self.curvature
    }

    /// Chamfer weight of every target vertex.
    pub fn weights(&self, kappa_max: T, mode: ChamferMode) -> Vec<T> {
        match mode {
            ChamferMode::Classical => vec![T::one(); self.curvature.len()],
            ChamferMode::Weighted => self.curvature.iter().map(|&k| curvature_weight(k, kappa_max)).collect(),
        }
    }

    /// Nearest-vertex assignments in both directions.
    pub fn matching(&self, pred: &TriMesh<T>) -> Matching<T> {
        let pred_tree = KdTree::new(pred.vertices());
        Matching {
            gt_to_pred: self
                .mesh
                .vertices()
                .iter()
                .map(|u| pred_tree.nearest(*u).expect("pred is non-empty"))
                .collect(),
            pred_to_gt: pred
                .vertices()
                .iter()
                .map(|v| self.tree.nearest(*v).expect("target is non-empty"))
                .collect(),
        }
    }

    /// Nearest target vertex to `p`.
    pub fn nearest(&self, p: Vec3<T>) -> usize {
        self.tree.nearest(p).expect("target is non-empty").0
    }
}

/// For every target vertex its nearest predicted vertex, and the reverse,
/// each with the squared distance.
#[derive(Debug, Clone)]
pub struct Matching<T> {
    pub gt_to_pred: Vec<(usize, T)>,
    pub pred_to_gt: Vec<(usize, T)>,
}
