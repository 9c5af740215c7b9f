//! Correspondences from displacement fields, and the piecewise-linear
//! interpolator that maps arbitrary points through them.
//!
//! Points on the source surface take the barycentric blend of the three
//! vertex displacements of the nearest triangle. Points off the surface carry
//! their offset rigidly. Beyond a cutoff distance the local field is fitted
//! from the nearest vertices instead (see [`FarField`]).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::deform::{fit_affine_weighted, DisplacementField};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::mesh::{Topology, TriMesh};
use crate::scalar::Real;
use crate::spatial::{KdTree, TriangleTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Reference vertex to deformed vertex.
    RefToTarget,
    /// Deformed vertex in one target to the same vertex in another.
    Pairwise,
}

/// Ordered point pairs in reference vertex order, with the reference
/// connectivity so the sources form a surface.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet<T> {
    pairs: Vec<(Point3<T>, Point3<T>)>,
    provenance: Provenance,
    topology: Arc<Topology>,
}

impl<T: Real> CorrespondenceSet<T> {
    pub fn new(pairs: Vec<(Point3<T>, Point3<T>)>, provenance: Provenance, topology: Arc<Topology>) -> Result<Self> {
        if pairs.len() != topology.vertex_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} pairs for a reference of {} vertices",
                pairs.len(),
                topology.vertex_count()
            )));
        }
        if let Some(i) = pairs.iter().position(|(s, d)| !s.is_finite() || !d.is_finite()) {
            return Err(Error::InvalidParameter(format!("pair {i} is not finite")));
        }
        Ok(Self {
            pairs,
            provenance,
            topology,
        })
    }

    pub fn pairs(&self) -> &[(Point3<T>, Point3<T>)] {
        &self.pairs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The source points as a mesh over the reference connectivity.
    pub fn source_mesh(&self) -> Result<TriMesh<T>> {
        TriMesh::from_topology(self.pairs.iter().map(|p| p.0).collect(), Arc::clone(&self.topology))
    }

    /// The destination points as a mesh over the reference connectivity.
    pub fn target_mesh(&self) -> Result<TriMesh<T>> {
        TriMesh::from_topology(self.pairs.iter().map(|p| p.1).collect(), Arc::clone(&self.topology))
    }

    /// CSV `src_x,src_y,src_z,dst_x,dst_y,dst_z` plus a JSON sidecar
    /// (`<stem>.json`) recording provenance and the reference mesh path.
    pub fn write(&self, path: impl AsRef<Path>, reference_mesh: Option<&Path>) -> Result<()> {
        let path = path.as_ref();
        let rows = self.pairs.iter().map(|(s, d)| [s.x, s.y, s.z, d.x, d.y, d.z].map(|v| v.to_string()));
        crate::table::write(path, &CORR_HEADER, rows)?;
        let meta = Sidecar {
            provenance: self.provenance,
            pairs: self.pairs.len(),
            reference_mesh: reference_mesh.map(Path::to_path_buf),
        };
        crate::jsonio::write(&path.with_extension("json"), &meta)
    }

    /// Reads a set written by [`CorrespondenceSet::write`], attaching the
    /// connectivity of `reference`.
    pub fn read(path: impl AsRef<Path>, reference: &TriMesh<T>) -> Result<Self>
    where
        T: std::str::FromStr,
    {
        let path = path.as_ref();
        let meta: Sidecar = crate::jsonio::read(&path.with_extension("json"))?;
        let rows = crate::table::read(path, &CORR_HEADER)?;
        if rows.len() != meta.pairs {
            return Err(Error::ShapeMismatch(format!(
                "{} holds {} pairs, sidecar says {}",
                path.display(),
                rows.len(),
                meta.pairs
            )));
        }
        let pairs = rows
            .iter()
            .map(|r| {
                let v = |i: usize| r.get::<T>(path, i, CORR_HEADER[i]);
                Ok((Vec3::new(v(0)?, v(1)?, v(2)?), Vec3::new(v(3)?, v(4)?, v(5)?)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs, meta.provenance, Arc::clone(reference.topology()))
    }
}

const CORR_HEADER: [&str; 6] = ["src_x", "src_y", "src_z", "dst_x", "dst_y", "dst_z"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    provenance: Provenance,
    pairs: usize,
    reference_mesh: Option<PathBuf>,
}

/// Pairs `(v, v + d(v))` in reference vertex order.
pub fn ref_to_target<T: Real>(reference: &TriMesh<T>, disp: &DisplacementField<T>) -> Result<CorrespondenceSet<T>> {
    disp.check_matches(reference)?;
    let pairs = reference
        .vertices()
        .iter()
        .zip(disp.vectors())
        .map(|(&v, &d)| (v, v + d))
        .collect();
    CorrespondenceSet::new(pairs, Provenance::RefToTarget, Arc::clone(reference.topology()))
}

/// Pairs `(v + d1(v), v + d2(v))`: from target 1 to target 2 through the
/// shared reference vertex.
pub fn compose_pair<T: Real>(
    disp1: &DisplacementField<T>,
    disp2: &DisplacementField<T>,
    reference: &TriMesh<T>,
) -> Result<CorrespondenceSet<T>> {
    disp1.check_matches(reference)?;
    disp2.check_matches(reference)?;
    let pairs = reference
        .vertices()
        .iter()
        .zip(disp1.vectors().iter().zip(disp2.vectors()))
        .map(|(&v, (&a, &b))| (v + a, v + b))
        .collect();
    CorrespondenceSet::new(pairs, Provenance::Pairwise, Arc::clone(reference.topology()))
}

/// How queries beyond the cutoff are mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FarField {
    /// Inverse-distance-weighted blend of the `k` nearest displacements.
    Idw,
    /// Inverse-distance-weighted least-squares affine fit to the `k` nearest
    /// pairs, falling back to `Idw` when they are (near) coplanar.
    #[default]
    LocalAffine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpConfig {
    /// Cutoff in units of the mean source edge length.
    pub cutoff: f64,
    pub far_field: FarField,
    /// Neighbors for the inverse-distance blend.
    pub k: usize,
    pub power: f64,
    /// Neighbors for the local affine fit.
    pub affine_k: usize,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            cutoff: 3.0,
            far_field: FarField::LocalAffine,
            k: 8,
            power: 2.0,
            affine_k: 64,
        }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 0.0) || self.k == 0 || !(self.power >= 0.0) || self.affine_k < 4 {
            return Err(Error::InvalidParameter(format!(
                "interpolator needs cutoff >= 0, k >= 1, power >= 0 and affine_k >= 4, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Precomputed search structures for repeated queries against one
/// correspondence set.
pub struct Interpolator<'a, T> {
    corr: &'a CorrespondenceSet<T>,
    faces: Vec<[usize; 3]>,
    tree: TriangleTree<T>,
    points: KdTree<T>,
    cutoff_sq: T,
    config: InterpConfig,
}

impl<'a, T: Real> Interpolator<'a, T> {
    pub fn new(corr: &'a CorrespondenceSet<T>, config: &InterpConfig) -> Result<Self> {
        config.validate()?;
        if corr.is_empty() {
            return Err(Error::Empty("correspondence set has no pairs".into()));
        }
        let source = corr.source_mesh()?;
        let cutoff = T::of(config.cutoff) * source.mean_edge_length();
        let srcs: Vec<_> = corr.pairs.iter().map(|p| p.0).collect();
        Ok(Self {
            corr,
            faces: source.faces().to_vec(),
            tree: TriangleTree::new(&source),
            points: KdTree::new(&srcs),
            cutoff_sq: cutoff * cutoff,
            config: config.clone(),
        })
    }

    fn disp(&self, i: usize) -> Vec3<T> {
        let (s, d) = self.corr.pairs[i];
        d - s
    }

    pub fn map(&self, p: Point3<T>) -> Point3<T> {
        if let Some(hit) = self.tree.closest(p) {
            let f = self.faces[hit.face];
            if let Some(k) = (0..3).find(|&k| hit.barycentric[k] == T::one() && self.corr.pairs[f[k]].0 == p) {
                return self.corr.pairs[f[k]].1;
            }
            if hit.dist_sq <= self.cutoff_sq {
                let d = (0..3).fold(Vec3::zero(), |acc, k| acc + self.disp(f[k]) * hit.barycentric[k]);
                return p + d;
            }
        }
        match self.config.far_field {
            FarField::LocalAffine => self.local_affine(p).unwrap_or_else(|| self.idw(p)),
            FarField::Idw => self.idw(p),
        }
    }

    fn idw(&self, p: Point3<T>) -> Point3<T> {
        let near = self.points.k_nearest(p, self.config.k);
        if let Some(&(i, _)) = near.iter().find(|(_, d2)| *d2 == T::zero()) {
            return p + self.disp(i);
        }
        let half_power = T::of(self.config.power / 2.0);
        let (mut num, mut den) = (Vec3::zero(), T::zero());
        for &(i, d2) in &near {
            let w = T::one() / d2.powf(half_power);
            num += self.disp(i) * w;
            den = den + w;
        }
        p + num / den
    }

    fn local_affine(&self, p: Point3<T>) -> Option<Point3<T>> {
        let near = self.points.k_nearest(p, self.config.affine_k);
        let nearest = near.first()?.1;
        if nearest == T::zero() {
            return None;
        }
        let pairs: Vec<_> = near.iter().map(|&(i, _)| self.corr.pairs[i]).collect();
        let weights: Vec<_> = near.iter().map(|&(_, d2)| nearest / d2).collect();
        fit_affine_weighted(&pairs, &weights).map(|a| a.apply(p))
    }

    pub fn map_all(&self, points: &[Point3<T>]) -> Vec<Point3<T>> {
        points.iter().map(|&p| self.map(p)).collect()
    }
}

/// Maps one point through the correspondences.
pub fn interpolate_phi<T: Real>(corr: &CorrespondenceSet<T>, p: Point3<T>, config: &InterpConfig) -> Result<Point3<T>> {
    Ok(Interpolator::new(corr, config)?.map(p))
}

/// Maps every point, preserving order.
pub fn map_points<T: Real>(corr: &CorrespondenceSet<T>, points: &[Point3<T>], config: &InterpConfig) -> Result<Vec<Point3<T>>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    Ok(Interpolator::new(corr, config)?.map_all(points))
}
