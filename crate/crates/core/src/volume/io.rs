use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

use super::{read_nifti, GridGeometry, VoxelGrid};

/// Sample type of a stored volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    I16,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I16 => 2,
            DType::F32 => 4,
        }
    }
}

/// JSON header of a `.rawvol` file. The payload lives in `data_file`,
/// relative to the header's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVolHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub dtype: DType,
    pub byte_order: String,
    pub data_file: String,
}

fn payload_path(header_path: &Path, data_file: &str) -> PathBuf {
    header_path.parent().unwrap_or_else(|| Path::new(".")).join(data_file)
}

/// Reads a `.rawvol` header + payload, or a NIfTI-1 `.nii` file.
pub fn read_volume<T: Real>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("nii") | Some("hdr") => read_nifti(path),
        _ => read_rawvol(path),
    }
}

fn read_rawvol<T: Real>(path: &Path) -> Result<VoxelGrid<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: RawVolHeader = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if header.byte_order != "little" {
        return Err(Error::InvalidVolume(format!(
            "{}: unsupported byte order {:?}",
            path.display(),
            header.byte_order
        )));
    }
    let geometry = GridGeometry::new(
        header.dims,
        Vec3::from_array(header.spacing).cast(),
        Vec3::from_array(header.origin).cast(),
    )?;
    let expected = geometry
        .len()
        .checked_mul(header.dtype.size())
        .ok_or_else(|| Error::InvalidVolume(format!("dimensions {:?} overflow", header.dims)))?;
    let data_path = payload_path(path, &header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: data_path,
            expected,
            actual: bytes.len(),
        });
    }
    let values = decode(&bytes, header.dtype);
    VoxelGrid::new(geometry, values.into_iter().map(T::of).collect())
}

pub(super) fn decode(bytes: &[u8], dtype: DType) -> Vec<f64> {
    match dtype {
        DType::U8 => bytes.iter().map(|&b| f64::from(b)).collect(),
        DType::I16 => bytes
            .chunks_exact(2)
            .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])))
            .collect(),
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
    }
}

fn encode<T: Real>(values: &[T], dtype: DType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * dtype.size());
    for (i, v) in values.iter().enumerate() {
        let x = v.to_f64_lossy();
        let bad = || Error::InvalidParameter(format!("value {x} at voxel {i} is not representable as {dtype:?}"));
        match dtype {
            DType::U8 => {
                if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
                    return Err(bad());
                }
                out.push(x as u8);
            }
            DType::I16 => {
                if x.fract() != 0.0 || !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&x) {
                    return Err(bad());
                }
                out.extend_from_slice(&(x as i16).to_le_bytes());
            }
            DType::F32 => {
                if !x.is_finite() {
                    return Err(bad());
                }
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Writes `path` (JSON header) and a sibling `.raw` payload. Integer dtypes
/// require integral values in range.
pub fn write_volume<T: Real>(grid: &VoxelGrid<T>, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    let path = path.as_ref();
    let payload = encode(grid.data(), dtype)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad volume path {}", path.display())))?;
    let data_file = format!("{stem}.raw");
    let g = grid.geometry;
    let header = RawVolHeader {
        dims: g.dims,
        spacing: g.spacing.cast::<f64>().to_array(),
        origin: g.origin.cast::<f64>().to_array(),
        dtype,
        byte_order: "little".into(),
        data_file: data_file.clone(),
    };
    let data_path = payload_path(path, &data_file);
    fs::write(&data_path, payload).map_err(|e| Error::io(&data_path, e))?;
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
