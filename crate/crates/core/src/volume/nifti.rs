use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

use super::io::{decode, DType};
use super::{GridGeometry, VoxelGrid};

const HEADER_SIZE: usize = 348;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn f32_at(b: &[u8], off: usize) -> f64 {
    f64::from(f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]]))
}

/// Voxel-to-world affine as (3x3 linear part by columns, offset).
fn affine(h: &[u8]) -> ([[f64; 3]; 3], [f64; 3]) {
    let pixdim: Vec<f64> = (0..8).map(|i| f32_at(h, 76 + 4 * i)).collect();
    let qform_code = i16_at(h, 252);
    let sform_code = i16_at(h, 254);
    if sform_code > 0 {
        let row = |r: usize| [0, 1, 2, 3].map(|c| f32_at(h, 280 + 16 * r + 4 * c));
        let rows = [row(0), row(1), row(2)];
        let cols = [0, 1, 2].map(|c| [rows[0][c], rows[1][c], rows[2][c]]);
        return (cols, [rows[0][3], rows[1][3], rows[2][3]]);
    }
    if qform_code > 0 {
        let (b, c, d) = (f32_at(h, 256), f32_at(h, 260), f32_at(h, 264));
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let r = [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ];
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = [pixdim[1], pixdim[2], qfac * pixdim[3]];
        let cols = [0, 1, 2].map(|c| [r[0][c] * scale[c], r[1][c] * scale[c], r[2][c] * scale[c]]);
        return (cols, [f32_at(h, 268), f32_at(h, 272), f32_at(h, 276)]);
    }
    (
        [[pixdim[1], 0.0, 0.0], [0.0, pixdim[2], 0.0], [0.0, 0.0, pixdim[3]]],
        [0.0; 3],
    )
}

/// Reads a single-file (`n+1`) or header/image pair (`ni1`, `.img` sibling)
/// NIfTI-1 volume, little-endian, uncompressed.
///
/// Supported datatypes are u8, i16 and f32; `scl_slope`/`scl_inter` are
/// applied when the slope is non-zero. The voxel-to-world transform (sform,
/// else qform, else pixdim) must be axis-aligned; axes with a negative
/// direction are flipped so the returned grid has positive spacing. Oblique
/// or axis-permuting transforms are rejected.
pub fn read_nifti<T: Real>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_SIZE,
            actual: bytes.len(),
        });
    }
    let h = &bytes[..HEADER_SIZE];
    let sizeof_hdr = i32_at(h, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let found = if i32::from_be_bytes([h[0], h[1], h[2], h[3]]) == HEADER_SIZE as i32 {
            "big-endian header".to_string()
        } else {
            format!("sizeof_hdr = {sizeof_hdr}")
        };
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    let magic = &h[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found: String::from_utf8_lossy(magic).into_owned(),
            })
        }
    };

    let ndim = i16_at(h, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::InvalidVolume(format!("{}: dim[0] = {ndim}", path.display())));
    }
    let mut dims = [1usize; 3];
    for k in 0..ndim as usize {
        let d = i16_at(h, 42 + 2 * k);
        if d < 1 {
            return Err(Error::InvalidVolume(format!("{}: dim[{}] = {d}", path.display(), k + 1)));
        }
        if k < 3 {
            dims[k] = d as usize;
        } else if d != 1 {
            return Err(Error::InvalidVolume(format!(
                "{}: only 3D volumes are supported (dim[{}] = {d})",
                path.display(),
                k + 1
            )));
        }
    }

    let dtype = match i16_at(h, 70) {
        2 => DType::U8,
        4 => DType::I16,
        16 => DType::F32,
        code => return Err(Error::UnsupportedDataType(format!("NIfTI datatype code {code}"))),
    };

    let (cols, offset) = affine(h);
    let mut spacing = [0.0; 3];
    let mut origin = offset;
    let mut flip = [false; 3];
    for c in 0..3 {
        let col = cols[c];
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-6 * scale;
        for (r, &v) in col.iter().enumerate() {
            if r != c && v.abs() > tol {
                return Err(Error::UnsupportedOrientation(format!(
                    "{}: voxel axis {c} maps to world {col:?}",
                    path.display()
                )));
            }
        }
        let s = col[c];
        if !(s.abs() > 0.0) || !s.is_finite() {
            return Err(Error::InvalidVolume(format!("{}: voxel size {s} on axis {c}", path.display())));
        }
        spacing[c] = s.abs();
        if s < 0.0 {
            flip[c] = true;
            origin[c] += s * (dims[c] - 1) as f64;
        }
    }
    let geometry = GridGeometry::new(dims, Vec3::from_array(spacing).cast(), Vec3::from_array(origin).cast())?;
    let expected = geometry
        .len()
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::InvalidVolume(format!("{}: dimensions {dims:?} overflow", path.display())))?;

    let vox_offset = f32_at(h, 108);
    if !(vox_offset >= 0.0) || vox_offset.fract() != 0.0 {
        return Err(Error::InvalidVolume(format!("{}: vox_offset {vox_offset}", path.display())));
    }
    let vox_offset = vox_offset as usize;
    let (payload_path, payload) = if single_file {
        (path.to_path_buf(), bytes.get(vox_offset..).unwrap_or(&[]).to_vec())
    } else {
        let img = path.with_extension("img");
        let data = fs::read(&img).map_err(|e| Error::io(&img, e))?;
        (img, data.get(vox_offset..).unwrap_or(&[]).to_vec())
    };
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: payload_path,
            expected,
            actual: payload.len(),
        });
    }
    let mut values = decode(&payload[..expected], dtype);
    let slope = f32_at(h, 112);
    let inter = f32_at(h, 116);
    if slope != 0.0 && slope.is_finite() {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        values.iter_mut().for_each(|v| *v = *v * slope + inter);
    }

    if flip.iter().any(|&f| f) {
        let src = values.clone();
        for (idx, v) in values.iter_mut().enumerate() {
            let mut ijk = geometry.coords(idx);
            for a in 0..3 {
                if flip[a] {
                    ijk[a] = dims[a] - 1 - ijk[a];
                }
            }
            *v = src[geometry.index(ijk[0], ijk[1], ijk[2])];
        }
    }
    VoxelGrid::new(geometry, values.into_iter().map(T::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Header {
        dims: [i16; 3],
        datatype: i16,
        pixdim: [f32; 3],
        slope: f32,
        inter: f32,
        srow: Option<[[f32; 4]; 3]>,
    }

    /// Builds a file byte by byte following the published NIfTI-1 layout.
    fn build(h: &Header, payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0u8; 352];
        b[0..4].copy_from_slice(&348i32.to_le_bytes());
        b[40..42].copy_from_slice(&3i16.to_le_bytes());
        for (k, d) in h.dims.iter().enumerate() {
            b[42 + 2 * k..44 + 2 * k].copy_from_slice(&d.to_le_bytes());
        }
        for k in 3..7 {
            b[42 + 2 * k..44 + 2 * k].copy_from_slice(&1i16.to_le_bytes());
        }
        b[70..72].copy_from_slice(&h.datatype.to_le_bytes());
        let bitpix: i16 = match h.datatype {
            2 => 8,
            4 => 16,
            _ => 32,
        };
        b[72..74].copy_from_slice(&bitpix.to_le_bytes());
        b[76..80].copy_from_slice(&1f32.to_le_bytes());
        for (k, p) in h.pixdim.iter().enumerate() {
            b[80 + 4 * k..84 + 4 * k].copy_from_slice(&p.to_le_bytes());
        }
        b[108..112].copy_from_slice(&352f32.to_le_bytes());
        b[112..116].copy_from_slice(&h.slope.to_le_bytes());
        b[116..120].copy_from_slice(&h.inter.to_le_bytes());
        if let Some(srow) = h.srow {
            b[254..256].copy_from_slice(&1i16.to_le_bytes());
            for (r, row) in srow.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    b[280 + 16 * r + 4 * c..284 + 16 * r + 4 * c].copy_from_slice(&v.to_le_bytes());
                }
            }
        }
        b[344..348].copy_from_slice(b"n+1\0");
        b.extend_from_slice(payload);
        b
    }

    fn i16_payload(vals: &[i16]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn base() -> Header {
        Header {
            dims: [3, 2, 2],
            datatype: 4,
            pixdim: [0.5, 0.5, 1.0],
            slope: 2.0,
            inter: 0.0,
            srow: None,
        }
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn i16_with_slope() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<i16> = (0..12).map(|v| v * 3 - 10).collect();
        let p = write(dir.path(), "a.nii", &build(&base(), &i16_payload(&vals)));
        let g: VoxelGrid<f64> = read_nifti(&p).unwrap();
        assert_eq!(g.dims(), [3, 2, 2]);
        assert_eq!(g.geometry.spacing, Vec3::new(0.5, 0.5, 1.0));
        for (a, b) in g.data().iter().zip(&vals) {
            assert_eq!(*a, 2.0 * f64::from(*b));
        }
    }

    #[test]
    fn zero_slope_means_unscaled() {
        let dir = tempfile::tempdir().unwrap();
        let h = Header { slope: 0.0, inter: 5.0, ..base() };
        let vals: Vec<i16> = (0..12).collect();
        let p = write(dir.path(), "b.nii", &build(&h, &i16_payload(&vals)));
        let g: VoxelGrid<f64> = read_nifti(&p).unwrap();
        assert_eq!(g.data()[7], 7.0);
    }

    #[test]
    fn negative_axis_is_flipped() {
        let dir = tempfile::tempdir().unwrap();
        let h = Header {
            datatype: 2,
            slope: 1.0,
            srow: Some([[-0.5, 0.0, 0.0, 10.0], [0.0, 0.5, 0.0, -2.0], [0.0, 0.0, 1.0, 3.0]]),
            ..base()
        };
        let vals: Vec<u8> = (0..12).collect();
        let p = write(dir.path(), "c.nii", &build(&h, &vals));
        let g: VoxelGrid<f64> = read_nifti(&p).unwrap();
        assert_eq!(g.geometry.origin, Vec3::new(9.0, -2.0, 3.0));
        // Stored voxel (i=2) sits at world x = 9, which is now index 0.
        assert_eq!(g.at(0, 0, 0), 2.0);
        assert_eq!(g.at(2, 1, 1), 9.0);
    }

    #[test]
    fn oblique_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (s, c) = (0.3f32.sin() * 0.5, 0.3f32.cos() * 0.5);
        let h = Header {
            srow: Some([[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]),
            ..base()
        };
        let p = write(dir.path(), "d.nii", &build(&h, &i16_payload(&[0; 12])));
        assert!(matches!(read_nifti::<f64>(&p), Err(Error::UnsupportedOrientation(_))));
    }

    #[test]
    fn bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = build(&base(), &i16_payload(&[0; 12]));
        bytes[344] = b'x';
        let p = write(dir.path(), "e.nii", &bytes);
        assert!(matches!(read_nifti::<f64>(&p), Err(Error::BadMagic { .. })));

        let h = Header { datatype: 64, ..base() };
        let p = write(dir.path(), "f.nii", &build(&h, &[0; 96]));
        assert!(matches!(read_nifti::<f64>(&p), Err(Error::UnsupportedDataType(_))));

        let p = write(dir.path(), "g.nii", &build(&base(), &i16_payload(&[0; 11])));
        match read_nifti::<f64>(&p) {
            Err(Error::Truncated { expected, actual, .. }) => assert_eq!((expected, actual), (24, 22)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pair_format_reads_img() {
        let dir = tempfile::tempdir().unwrap();
        let mut hdr = build(&base(), &[]);
        hdr[108..112].copy_from_slice(&0f32.to_le_bytes());
        hdr[344..348].copy_from_slice(b"ni1\0");
        let p = write(dir.path(), "h.hdr", &hdr[..348]);
        let vals: Vec<i16> = (0..12).collect();
        write(dir.path(), "h.img", &i16_payload(&vals));
        let g: VoxelGrid<f64> = read_nifti(&p).unwrap();
        assert_eq!(g.data()[11], 22.0);
    }
}
