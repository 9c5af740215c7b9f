//! Synthetic vertebra-like shapes and smooth warps with known ground truth.
//!
//! The reference solid is a union of an ellipsoidal body with capsule-shaped
//! pedicles, laminae, spinous, transverse and articular processes. A case is
//! the reference mesh pushed through an analytic warp (affine plus a sum of
//! sinusoids), so the true image of every reference point is known.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3, Vec3};
use crate::mesh::{laplacian_smooth, read_obj, write_obj, TriMesh};
use crate::metrics::{label_by_planes, region_centroids, Label, PlaneRule, SubRegionLabeling};
use crate::volume::{marching_cubes, read_volume, voxelize, write_volume, BinaryMask, DType, GridGeometry};

pub const SPACING: f64 = 0.5;
/// Free voxels kept around the shape in every generated mask (mm).
pub const MARGIN: f64 = 4.0;
const SMOOTH_ITERS: usize = 10;
const SMOOTH_FACTOR: f64 = 0.5;

enum Primitive {
    Ellipsoid { center: Point3<f64>, radii: Vec3<f64> },
    Capsule { a: Point3<f64>, b: Point3<f64>, radius: f64 },
}

impl Primitive {
    fn inside(&self, p: Point3<f64>) -> bool {
        match *self {
            Primitive::Ellipsoid { center, radii } => (p - center).component_div(radii).norm_sq() < 1.0,
            Primitive::Capsule { a, b, radius } => {
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
                p.distance_sq(a + ab * t) < radius * radius
            }
        }
    }
}

/// Axes: x left (-) to right (+), y anterior (-) to posterior (+), z
/// inferior (-) to superior (+). `s` scales each dimension.
fn primitives(s: &[f64; 8]) -> Vec<Primitive> {
    let v = Vec3::new;
    let cap = |a: Point3<f64>, b: Point3<f64>, radius: f64| Primitive::Capsule { a, b, radius };
    let mut out = vec![Primitive::Ellipsoid {
        center: v(0.0, -2.0, 0.0),
        radii: v(9.0 * s[0], 7.0 * s[1], 6.0 * s[2]),
    }];
    for side in [-1.0, 1.0] {
        out.push(cap(v(5.0 * side, 3.0, 0.0), v(6.5 * side, 11.0, 0.0), 2.2 * s[3]));
        out.push(cap(v(6.5 * side, 12.0, 0.0), v(0.0, 18.0, 0.0), 2.0 * s[4]));
        out.push(cap(v(6.5 * side, 11.5, 0.5), v(17.0 * s[5] * side, 12.5, 1.5), 1.8));
        out.push(cap(v(7.0 * side, 12.5, 1.0), v(7.5 * side, 14.0, 9.0 * s[6]), 1.8));
    }
    out.push(cap(v(0.0, 18.0, 0.0), v(0.0, 28.0 * s[7], -3.0), 2.0));
    out
}

/// Nine rules in priority order; vertices passing none belong to the body.
fn plane_rules() -> Vec<PlaneRule<f64>> {
    let v = Vec3::new;
    let r = |p, n, l| PlaneRule::new(p, n, l).expect("non-zero normal");
    vec![
        r(v(0.0, 20.5, 0.0), v(0.0, 1.0, 0.0), Label::SP),
        r(v(-10.0, 0.0, 0.0), v(-1.0, 0.0, 0.0), Label::LTP),
        r(v(10.0, 0.0, 0.0), v(1.0, 0.0, 0.0), Label::RTP),
        r(v(-7.0, 13.0, 5.0), v(-1.0, 0.0, 1.0), Label::LAP),
        r(v(7.0, 13.0, 5.0), v(1.0, 0.0, 1.0), Label::RAP),
        r(v(0.0, 17.3, 0.0), v(-0.9, 1.0, 0.0), Label::LL),
        r(v(0.0, 17.3, 0.0), v(0.9, 1.0, 0.0), Label::RL),
        r(v(0.0, 11.5, 0.0), v(-1.2, 1.0, 0.0), Label::LP),
        r(v(0.0, 11.5, 0.0), v(1.2, 1.0, 0.0), Label::RP),
    ]
}

/// The reference shape.
#[derive(Debug, Clone)]
pub struct Reference {
    pub mask: BinaryMask<f64>,
    pub mesh: TriMesh<f64>,
    pub rules: Vec<PlaneRule<f64>>,
}

impl Reference {
    pub fn labeling(&self) -> SubRegionLabeling {
        label_by_planes(&self.mesh, &self.rules, Label::VB)
    }
}

/// Rasterizes the composite solid at 0.5 mm, extracts and smooths its
/// surface, and emits the nine labeling planes. `seed` jitters the part
/// dimensions by up to 5%.
pub fn gen_reference(seed: u64) -> Result<Reference> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.95..1.05));
    let parts = primitives(&scales);
    let geom = GridGeometry::covering(Vec3::new(-20.0, -10.0, -8.0) - Vec3::splat(MARGIN), Vec3::new(20.0, 32.0, 12.0) + Vec3::splat(MARGIN), SPACING)?;
    let mask = BinaryMask::from_fn(geom, |p| parts.iter().any(|s| s.inside(p)));
    if mask.touches_boundary() {
        return Err(Error::InvalidVolume("reference shape touches the grid boundary".into()));
    }
    let raw = marching_cubes(&mask.to_grid(), 0.5)?;
    let mesh = laplacian_smooth(&raw, SMOOTH_ITERS, SMOOTH_FACTOR);
    mesh.check_watertight()?;
    let reference = Reference {
        mask,
        mesh,
        rules: plane_rules(),
    };
    let labels = reference.labeling();
    if let Some(l) = Label::ALL.into_iter().find(|&l| labels.count(l) == 0) {
        return Err(Error::EmptyRegion(l.to_string()));
    }
    Ok(reference)
}

/// `w(p) = A p + t + sum_k e_k amp_k sin(2 pi f_k . p + phase_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpSpec {
    /// Row-major 3x3 matrix.
    pub a: [[f64; 3]; 3],
    pub t: [f64; 3],
    /// Sinusoid amplitude per output axis (mm).
    pub amplitude: [f64; 3],
    /// Spatial frequency vector per output axis (1/mm).
    pub frequency: [[f64; 3]; 3],
    pub phase: [f64; 3],
    pub seed: u64,
}

impl WarpSpec {
    pub fn identity() -> Self {
        Self::affine(Mat3::identity(), Vec3::zero())
    }

    pub fn affine(a: Mat3<f64>, t: Vec3<f64>) -> Self {
        Self {
            a: std::array::from_fn(|r| a.row(r).to_array()),
            t: t.to_array(),
            amplitude: [0.0; 3],
            frequency: [[0.0; 3]; 3],
            phase: [0.0; 3],
            seed: 0,
        }
    }

    fn matrix(&self) -> Mat3<f64> {
        Mat3::new(self.a)
    }

    fn arg(&self, k: usize, p: Point3<f64>) -> f64 {
        std::f64::consts::TAU * Vec3::from_array(self.frequency[k]).dot(p) + self.phase[k]
    }

    /// Analytic Jacobian at `p`.
    pub fn jacobian(&self, p: Point3<f64>) -> Mat3<f64> {
        Mat3::new(std::array::from_fn(|k| {
            let f = Vec3::from_array(self.frequency[k]);
            let g = self.amplitude[k] * std::f64::consts::TAU * self.arg(k, p).cos();
            (Vec3::from_array(self.a[k]) + f * g).to_array()
        }))
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.a.iter().flatten().chain(&self.t).chain(&self.amplitude).chain(self.frequency.iter().flatten()).chain(&self.phase);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("warp has non-finite entries".into()));
        }
        Ok(())
    }
}

pub fn eval_warp(spec: &WarpSpec, p: Point3<f64>) -> Point3<f64> {
    let wave = Vec3::from_array(std::array::from_fn(|k| spec.amplitude[k] * spec.arg(k, p).sin()));
    spec.matrix().mul_vec(p) + Vec3::from_array(spec.t) + wave
}

/// Bounds for [`random_warp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarpLimits {
    pub scale: [f64; 2],
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub max_amplitude: f64,
    pub min_wavelength: f64,
}

impl Default for WarpLimits {
    fn default() -> Self {
        Self {
            scale: [0.9, 1.1],
            max_rotation_deg: 15.0,
            max_translation: 10.0,
            max_amplitude: 4.0,
            min_wavelength: 40.0,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Draws a warp within `limits`: per-axis scale, rotation about a random
/// axis, translation inside a ball, and one sinusoid per axis. The sinusoid
/// is centered on `center` so its phase is independent of the shape's
/// position.
pub fn random_warp(seed: u64, limits: &WarpLimits, center: Point3<f64>) -> WarpSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Vec3::new(
        rng.gen_range(limits.scale[0]..=limits.scale[1]),
        rng.gen_range(limits.scale[0]..=limits.scale[1]),
        rng.gen_range(limits.scale[0]..=limits.scale[1]),
    );
    let angle = rng.gen_range(0.0..=limits.max_rotation_deg).to_radians();
    let rot = Mat3::rotation(unit_vector(&mut rng), angle);
    let a = rot.mul_mat(&Mat3::diagonal(scale));
    let t = unit_vector(&mut rng) * (limits.max_translation * rng.gen_range(0.0f64..=1.0).cbrt());
    let mut spec = WarpSpec::affine(a, t + center - a.mul_vec(center));
    spec.seed = seed;
    for k in 0..3 {
        spec.amplitude[k] = rng.gen_range(0.0..=limits.max_amplitude);
        let f = unit_vector(&mut rng) * rng.gen_range(0.5..=1.0) / limits.min_wavelength;
        spec.frequency[k] = f.to_array();
        spec.phase[k] = rng.gen_range(0.0..std::f64::consts::TAU) - std::f64::consts::TAU * f.dot(center);
    }
    spec
}

/// Smallest Jacobian determinant over the mesh vertices and 1000 points
/// spread over the bounding box.
fn min_jacobian(spec: &WarpSpec, mesh: &TriMesh<f64>) -> (f64, Point3<f64>) {
    let (lo, hi) = mesh.bounding_box().unwrap_or((Vec3::zero(), Vec3::zero()));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let samples = (0..1000).map(|_| {
        Vec3::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y), rng.gen_range(lo.z..=hi.z))
    });
    mesh.vertices()
        .iter()
        .copied()
        .chain(samples.collect::<Vec<_>>())
        .map(|p| (spec.jacobian(p).determinant(), p))
        .fold((f64::INFINITY, Vec3::zero()), |m, x| if x.0 < m.0 { x } else { m })
}

/// One synthetic target.
#[derive(Debug, Clone)]
pub struct SynthCase {
    pub mask: BinaryMask<f64>,
    pub gt_mesh: TriMesh<f64>,
    pub warp: WarpSpec,
    pub rules: Vec<PlaneRule<f64>>,
    /// Ground-truth region centroids: means of the warped member vertices.
    pub centroids: Vec<(Label, Point3<f64>)>,
}

/// Warps the reference mesh and rules, and voxelizes the result on a
/// 0.5 mm grid covering it with a margin.
pub fn gen_case(reference: &Reference, spec: &WarpSpec) -> Result<SynthCase> {
    spec.validate()?;
    let (det, at) = min_jacobian(spec, &reference.mesh);
    if !(det > 0.0) {
        return Err(Error::FoldingWarp { det, at: format!("{at:?}") });
    }
    let gt_mesh = reference.mesh.map_vertices(|p| eval_warp(spec, p))?;
    let (lo, hi) = gt_mesh.bounding_box().expect("non-empty reference");
    let geom = GridGeometry::covering(lo - Vec3::splat(MARGIN), hi + Vec3::splat(MARGIN), SPACING)?;
    let mask = voxelize(&gt_mesh, &geom)?;
    let rules = reference
        .rules
        .iter()
        .map(|r| {
            let n = spec.jacobian(r.point).inverse().expect("non-folding").transpose().mul_vec(r.normal());
            PlaneRule::new(eval_warp(spec, r.point), n, r.label)
        })
        .collect::<Result<Vec<_>>>()?;
    let centroids = region_centroids(&gt_mesh, &reference.labeling())?;
    Ok(SynthCase {
        mask,
        gt_mesh,
        warp: spec.clone(),
        rules,
        centroids,
    })
}

/// Draws warps from `seed`, `seed + 1000`, ... until one does not fold.
pub fn gen_random_case(reference: &Reference, seed: u64, limits: &WarpLimits) -> Result<SynthCase> {
    let center = reference.mesh.centroid().expect("non-empty reference");
    let mut last = None;
    for attempt in 0..20u64 {
        match gen_case(reference, &random_warp(seed + 1000 * attempt, limits, center)) {
            Err(e @ Error::FoldingWarp { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

const CENTROID_HEADER: [&str; 4] = ["label", "x", "y", "z"];

pub fn write_centroids(points: &[(Label, Point3<f64>)], path: impl AsRef<Path>) -> Result<()> {
    let rows = points
        .iter()
        .map(|(l, p)| [l.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()]);
    crate::table::write(path.as_ref(), &CENTROID_HEADER, rows)
}

pub fn read_centroids(path: impl AsRef<Path>) -> Result<Vec<(Label, Point3<f64>)>> {
    let path = path.as_ref();
    crate::table::read(path, &CENTROID_HEADER)?
        .iter()
        .map(|r| {
            let label: String = r.get(path, 0, "label")?;
            let label = label
                .parse()
                .map_err(|_| Error::parse(path, r.line, format!("unknown label {label:?}")))?;
            Ok((label, Vec3::new(r.get(path, 1, "x")?, r.get(path, 2, "y")?, r.get(path, 3, "z")?)))
        })
        .collect()
}

/// Dataset index written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub reference_seed: u64,
    pub spacing: f64,
    pub limits: WarpLimits,
    pub cases: Vec<ManifestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCase {
    pub id: String,
    pub seed: u64,
    pub warp_seed: u64,
}

pub fn case_id(k: usize) -> String {
    format!("case_{k}")
}

/// File names inside a dataset directory.
pub mod layout {
    pub const REF_DIR: &str = "ref";
    pub const MESH: &str = "mesh.obj";
    pub const MASK: &str = "mask.rawvol";
    pub const PLANES: &str = "planes.csv";
    pub const GT_MESH: &str = "gt_mesh.obj";
    pub const WARP: &str = "warp.json";
    pub const GT_CENTROIDS: &str = "gt_centroids.csv";
    pub const MANIFEST: &str = "manifest.json";
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_reference(reference: &Reference, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    write_obj(&reference.mesh, dir.join(layout::MESH))?;
    write_volume(&reference.mask.to_grid(), dir.join(layout::MASK), DType::U8)?;
    PlaneRule::write_csv(&reference.rules, dir.join(layout::PLANES))
}

pub fn read_reference(dir: impl AsRef<Path>) -> Result<Reference> {
    let dir = dir.as_ref();
    Ok(Reference {
        mesh: read_obj(dir.join(layout::MESH))?,
        mask: BinaryMask::from_grid(&read_volume(dir.join(layout::MASK))?)?,
        rules: PlaneRule::read_csv(dir.join(layout::PLANES))?,
    })
}

pub fn write_case(case: &SynthCase, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    write_volume(&case.mask.to_grid(), dir.join(layout::MASK), DType::U8)?;
    write_obj(&case.gt_mesh, dir.join(layout::GT_MESH))?;
    crate::jsonio::write(&dir.join(layout::WARP), &case.warp)?;
    PlaneRule::write_csv(&case.rules, dir.join(layout::PLANES))?;
    write_centroids(&case.centroids, dir.join(layout::GT_CENTROIDS))
}

/// Reads a case; the ground-truth mesh takes the reference connectivity.
pub fn read_case(dir: impl AsRef<Path>, reference: &Reference) -> Result<SynthCase> {
    let dir = dir.as_ref();
    let gt: TriMesh<f64> = read_obj(dir.join(layout::GT_MESH))?;
    if gt.faces() != reference.mesh.faces() {
        return Err(Error::ShapeMismatch(format!(
            "{} does not share the reference connectivity",
            dir.join(layout::GT_MESH).display()
        )));
    }
    Ok(SynthCase {
        mask: BinaryMask::from_grid(&read_volume(dir.join(layout::MASK))?)?,
        gt_mesh: reference.mesh.with_vertices(gt.into_vertices())?,
        warp: crate::jsonio::read(&dir.join(layout::WARP))?,
        rules: PlaneRule::read_csv(dir.join(layout::PLANES))?,
        centroids: read_centroids(dir.join(layout::GT_CENTROIDS))?,
    })
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    crate::jsonio::read(&dir.as_ref().join(layout::MANIFEST))
}

/// Case `k` uses seed `seed + k`.
pub fn dataset_manifest(cases: usize, seed: u64, limits: &WarpLimits) -> Manifest {
    Manifest {
        reference_seed: seed,
        spacing: SPACING,
        limits: limits.clone(),
        cases: (0..cases)
            .map(|k| ManifestCase {
                id: case_id(k),
                seed: seed + k as u64,
                warp_seed: 0,
            })
            .collect(),
    }
}

/// Generates and writes one case of a manifest, returning its directory and
/// the warp seed actually used.
pub fn write_manifest_case(reference: &Reference, entry: &ManifestCase, limits: &WarpLimits, root: &Path) -> Result<(PathBuf, u64)> {
    let case = gen_random_case(reference, entry.seed, limits)?;
    let dir = root.join(&entry.id);
    write_case(&case, &dir)?;
    Ok((dir, case.warp.seed))
}

pub fn write_manifest(manifest: &Manifest, root: &Path) -> Result<()> {
    crate::jsonio::write(&root.join(layout::MANIFEST), manifest)
}
