use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// One displacement per reference vertex, in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    vectors: Vec<Vec3<T>>,
}

impl<T: Real> DisplacementField<T> {
    pub fn new(vectors: Vec<Vec3<T>>) -> Result<Self> {
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("displacement {i} is not finite")));
        }
        Ok(Self { vectors })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![Vec3::zero(); n],
        }
    }

    /// `deformed - reference`, vertex by vertex.
    pub fn between(reference: &TriMesh<T>, deformed: &TriMesh<T>) -> Result<Self> {
        if !reference.shares_topology(deformed) && reference.faces() != deformed.faces() {
            return Err(Error::ShapeMismatch("meshes do not share connectivity".into()));
        }
        Self::new(
            deformed
                .vertices()
                .iter()
                .zip(reference.vertices())
                .map(|(d, r)| *d - *r)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec3<T>] {
        &self.vectors
    }

    pub fn check_matches(&self, reference: &TriMesh<T>) -> Result<()> {
        if self.len() != reference.vertex_count() {
            return Err(Error::ShapeMismatch(format!(
                "displacement field has {} vectors, reference mesh has {} vertices",
                self.len(),
                reference.vertex_count()
            )));
        }
        Ok(())
    }

    /// Reference vertices moved by the field; connectivity is shared.
    pub fn apply(&self, reference: &TriMesh<T>) -> Result<TriMesh<T>> {
        self.check_matches(reference)?;
        reference.with_vertices(
            reference
                .vertices()
                .iter()
                .zip(&self.vectors)
                .map(|(v, d)| *v + *d)
                .collect(),
        )
    }

    pub fn mean(&self) -> Option<Vec3<T>> {
        Vec3::mean(self.vectors.iter().copied())
    }

    pub fn max_norm(&self) -> T {
        self.vectors.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    /// CSV `vertex_index,dx,dy,dz`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, d)| [i.to_string(), d.x.to_string(), d.y.to_string(), d.z.to_string()]);
        crate::table::write(path.as_ref(), &["vertex_index", "dx", "dy", "dz"], rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self>
    where
        T: std::str::FromStr,
    {
        let path = path.as_ref();
        let rows = crate::table::read_indexed(path, &["vertex_index", "dx", "dy", "dz"])?;
        let vectors = rows
            .iter()
            .map(|r| Ok(Vec3::new(r.get(path, 1, "dx")?, r.get(path, 2, "dy")?, r.get(path, 3, "dz")?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vectors)
    }
}
