//! Sub-region labeling by plane rules, region centroids, and the evaluation
//! metrics: target registration error, Hausdorff distance, average symmetric
//! surface distance and Dice.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::spatial::TriangleTree;
use crate::volume::BinaryMask;

/// The ten vertebra sub-regions: spinous process, left/right lamina,
/// left/right articular processes, left/right transverse processes,
/// left/right pedicles, vertebral body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    SP,
    LL,
    RL,
    LAP,
    RAP,
    LTP,
    RTP,
    LP,
    RP,
    VB,
}

impl Label {
    pub const ALL: [Label; 10] = [
        Label::SP,
        Label::LL,
        Label::RL,
        Label::LAP,
        Label::RAP,
        Label::LTP,
        Label::RTP,
        Label::LP,
        Label::RP,
        Label::VB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Label::SP => "SP",
            Label::LL => "LL",
            Label::RL => "RL",
            Label::LAP => "LAP",
            Label::RAP => "RAP",
            Label::LTP => "LTP",
            Label::RTP => "RTP",
            Label::LP => "LP",
            Label::RP => "RP",
            Label::VB => "VB",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown region label {s:?}")))
    }
}

/// Half-space test: a vertex `v` passes when `(v - point) . normal > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneRule<T> {
    pub point: Point3<T>,
    normal: Vec3<T>,
    pub label: Label,
}

const RULE_HEADER: [&str; 7] = ["px", "py", "pz", "nx", "ny", "nz", "label"];

impl<T: Real> PlaneRule<T> {
    /// Normalizes `normal`; fails if it is zero or not finite.
    pub fn new(point: Point3<T>, normal: Vec3<T>, label: Label) -> Result<Self> {
        let normal = normal
            .normalized()
            .filter(|n| n.is_finite() && point.is_finite())
            .ok_or_else(|| Error::InvalidParameter(format!("plane rule for {label} has no valid normal")))?;
        Ok(Self { point, normal, label })
    }

    pub fn normal(&self) -> Vec3<T> {
        self.normal
    }

    pub fn passes(&self, v: Point3<T>) -> bool {
        (v - self.point).dot(self.normal) > T::zero()
    }

    /// CSV `px,py,pz,nx,ny,nz,label`, one rule per row in priority order.
    pub fn write_csv(rules: &[Self], path: impl AsRef<Path>) -> Result<()> {
        let rows = rules.iter().map(|r| {
            let (p, n) = (r.point, r.normal);
            [p.x, p.y, p.z, n.x, n.y, n.z]
                .map(|v| v.to_string())
                .into_iter()
                .chain([r.label.to_string()])
                .collect::<Vec<_>>()
        });
        crate::table::write(path.as_ref(), &RULE_HEADER, rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Self>>
    where
        T: FromStr,
    {
        let path = path.as_ref();
        crate::table::read(path, &RULE_HEADER)?
            .iter()
            .map(|r| {
                let v = |i: usize| r.get::<T>(path, i, RULE_HEADER[i]);
                let label: String = r.get(path, 6, "label")?;
                let label = label
                    .parse()
                    .map_err(|_| Error::parse(path, r.line, format!("unknown label {label:?}")))?;
                Self::new(Vec3::new(v(0)?, v(1)?, v(2)?), Vec3::new(v(3)?, v(4)?, v(5)?), label)
                    .map_err(|e| Error::parse(path, r.line, e.to_string()))
            })
            .collect()
    }
}

/// One label per mesh vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubRegionLabeling {
    labels: Vec<Label>,
}

impl SubRegionLabeling {
    pub fn new(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn check<T: Real>(&self, mesh: &TriMesh<T>) -> Result<()> {
        if self.len() != mesh.vertex_count() {
            return Err(Error::ShapeMismatch(format!(
                "labeling has {} entries, mesh has {} vertices",
                self.len(),
                mesh.vertex_count()
            )));
        }
        Ok(())
    }
}

/// Each vertex takes the label of the first rule it passes, else `default`.
pub fn label_by_planes<T: Real>(mesh: &TriMesh<T>, rules: &[PlaneRule<T>], default: Label) -> SubRegionLabeling {
    SubRegionLabeling::new(
        mesh.vertices()
            .iter()
            .map(|&v| rules.iter().find(|r| r.passes(v)).map_or(default, |r| r.label))
            .collect(),
    )
}

/// Mean of the vertices carrying `label`.
pub fn region_centroid<T: Real>(mesh: &TriMesh<T>, labeling: &SubRegionLabeling, label: Label) -> Result<Point3<T>> {
    labeling.check(mesh)?;
    Vec3::mean(
        mesh.vertices()
            .iter()
            .zip(labeling.labels())
            .filter(|(_, &l)| l == label)
            .map(|(v, _)| *v),
    )
    .ok_or_else(|| Error::EmptyRegion(label.to_string()))
}

/// Centroids of every region present in the labeling, in label order.
pub fn region_centroids<T: Real>(mesh: &TriMesh<T>, labeling: &SubRegionLabeling) -> Result<Vec<(Label, Point3<T>)>> {
    labeling.check(mesh)?;
    Label::ALL
        .into_iter()
        .filter(|&l| labeling.count(l) > 0)
        .map(|l| Ok((l, region_centroid(mesh, labeling, l)?)))
        .collect()
}

/// Faces with at least two vertices in `label`, as a sub-mesh.
pub fn region_submesh<T: Real>(mesh: &TriMesh<T>, labeling: &SubRegionLabeling, label: Label) -> Result<TriMesh<T>> {
    labeling.check(mesh)?;
    let l = labeling.labels();
    let (sub, _) = mesh.submesh(|f| mesh.faces()[f].iter().filter(|&&v| l[v] == label).count() >= 2)?;
    Ok(sub)
}

pub fn tre<T: Real>(mapped: Point3<T>, gt: Point3<T>) -> T {
    mapped.distance(gt)
}

fn directed<T: Real>(from: &TriMesh<T>, to: &TriangleTree<T>) -> Vec<T> {
    from.vertices()
        .iter()
        .map(|&v| to.closest(v).expect("non-empty").dist_sq.sqrt())
        .collect()
}

fn both_directions<T: Real>(a: &TriMesh<T>, b: &TriMesh<T>) -> Result<(Vec<T>, Vec<T>)> {
    if a.is_empty() || b.is_empty() || a.face_count() == 0 || b.face_count() == 0 {
        return Err(Error::Empty("surface distance needs two non-empty meshes".into()));
    }
    Ok((directed(a, &TriangleTree::new(b)), directed(b, &TriangleTree::new(a))))
}

/// Largest vertex-to-surface distance in either direction.
pub fn hausdorff<T: Real>(a: &TriMesh<T>, b: &TriMesh<T>) -> Result<T> {
    let (ab, ba) = both_directions(a, b)?;
    Ok(ab.into_iter().chain(ba).fold(T::zero(), |m, d| m.max(d)))
}

/// Mean vertex-to-surface distance over the vertices of both meshes.
pub fn assd<T: Real>(a: &TriMesh<T>, b: &TriMesh<T>) -> Result<T> {
    let (ab, ba) = both_directions(a, b)?;
    let n = T::of((ab.len() + ba.len()) as f64);
    Ok(ab.into_iter().chain(ba).fold(T::zero(), |s, d| s + d) / n)
}

/// `2|A n B| / (|A| + |B|)`; 1 when both are empty.
pub fn dice<T: Real>(a: &BinaryMask<T>, b: &BinaryMask<T>) -> Result<f64> {
    a.geometry.check_same(&b.geometry, "dice masks")?;
    let both = a.data().iter().zip(b.data()).filter(|(&x, &y)| x != 0 && y != 0).count();
    let total = a.count() + b.count();
    Ok(if total == 0 { 1.0 } else { 2.0 * both as f64 / total as f64 })
}

/// One report row. `region` is a label name or `all` for the whole mesh;
/// `case` is a case id, or `mean` / `std` for aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub case: String,
    pub region: String,
    pub tre: Option<f64>,
    pub hd: Option<f64>,
    pub assd: Option<f64>,
    pub dice: Option<f64>,
}

const REPORT_HEADER: [&str; 6] = ["case", "region", "tre", "hd", "assd", "dice"];

/// Per-case, per-region metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl MetricsReport {
    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    /// Rows for one region across cases (aggregate rows excluded).
    pub fn region_rows<'a>(&'a self, region: &'a str) -> impl Iterator<Item = &'a MetricsRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.region == region && r.case != "mean" && r.case != "std")
    }

    /// Mean of one metric over the per-case rows of `region`.
    pub fn mean_of(&self, region: &str, metric: fn(&MetricsRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.region_rows(region).filter_map(metric).collect();
        mean_std(&v).map(|m| m.0)
    }

    /// Mean and population standard deviation across cases for each region,
    /// appended as `mean` and `std` rows.
    pub fn with_aggregates(mut self) -> Self {
        let mut regions: Vec<String> = Vec::new();
        for r in &self.rows {
            if !regions.contains(&r.region) {
                regions.push(r.region.clone());
            }
        }
        let mut extra = Vec::new();
        for region in &regions {
            let stat = |f: fn(&MetricsRow) -> Option<f64>| {
                let v: Vec<f64> = self.region_rows(region).filter_map(f).collect();
                mean_std(&v)
            };
            let cols = [
                stat(|r| r.tre),
                stat(|r| r.hd),
                stat(|r| r.assd),
                stat(|r| r.dice),
            ];
            for (name, pick) in [("mean", 0usize), ("std", 1)] {
                let get = |c: Option<(f64, f64)>| c.map(|m| if pick == 0 { m.0 } else { m.1 });
                extra.push(MetricsRow {
                    case: name.into(),
                    region: region.clone(),
                    tre: get(cols[0]),
                    hd: get(cols[1]),
                    assd: get(cols[2]),
                    dice: get(cols[3]),
                });
            }
        }
        self.rows.extend(extra);
        self
    }

    /// CSV `case,region,tre,hd,assd,dice`; missing values are empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows = self
            .rows
            .iter()
            .map(|r| [r.case.clone(), r.region.clone(), opt(r.tre), opt(r.hd), opt(r.assd), opt(r.dice)]);
        crate::table::write(path.as_ref(), &REPORT_HEADER, rows)
    }
}

/// Everything needed to score one registered case.
pub struct CaseEvaluation<'a, T> {
    pub case: &'a str,
    /// Vertex labels of the predicted mesh.
    pub pred_labeling: &'a SubRegionLabeling,
    /// Vertex labels of the ground-truth mesh; the same labeling when both
    /// meshes are deformations of one reference.
    pub gt_labeling: &'a SubRegionLabeling,
    /// Reference region centroids mapped into the target.
    pub mapped: &'a [(Label, Point3<T>)],
    /// Ground-truth region centroids in the target.
    pub gt_centroids: &'a [(Label, Point3<T>)],
    pub predicted: &'a TriMesh<T>,
    pub gt: &'a TriMesh<T>,
    /// Voxelized prediction and ground-truth mask.
    pub masks: Option<(&'a BinaryMask<T>, &'a BinaryMask<T>)>,
}

/// Per-region TRE, HD and ASSD, plus an `all` row with the mean TRE,
/// whole-mesh HD and ASSD, and Dice.
pub fn evaluate_case<T: Real>(e: &CaseEvaluation<T>) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    let mut tres = Vec::new();
    for &(label, gt) in e.gt_centroids {
        let mapped = e
            .mapped
            .iter()
            .find(|m| m.0 == label)
            .ok_or_else(|| Error::EmptyRegion(format!("{label} (no mapped centroid)")))?
            .1;
        let t = tre(mapped, gt).to_f64().expect("finite");
        tres.push(t);
        let (hd, sd) = if e.pred_labeling.count(label) > 0 && e.gt_labeling.count(label) > 0 {
            let a = region_submesh(e.predicted, e.pred_labeling, label)?;
            let b = region_submesh(e.gt, e.gt_labeling, label)?;
            if a.face_count() > 0 && b.face_count() > 0 {
                (Some(hausdorff(&a, &b)?), Some(assd(&a, &b)?))
            } else {
                (None, None)
            }
        } else {
            (None, None)
        };
        rows.push(MetricsRow {
            case: e.case.into(),
            region: label.to_string(),
            tre: Some(t),
            hd: hd.map(|v| v.to_f64().expect("finite")),
            assd: sd.map(|v| v.to_f64().expect("finite")),
            dice: None,
        });
    }
    let dice = e.masks.map(|(a, b)| dice(a, b)).transpose()?;
    rows.push(MetricsRow {
        case: e.case.into(),
        region: "all".into(),
        tre: mean_std(&tres).map(|m| m.0),
        hd: Some(hausdorff(e.predicted, e.gt)?.to_f64().expect("finite")),
        assd: Some(assd(e.predicted, e.gt)?.to_f64().expect("finite")),
        dice,
    });
    Ok(MetricsReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::spatial::closest_point_on_triangle;
    use crate::volume::GridGeometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn labels_round_trip_through_names() {
        for l in Label::ALL {
            assert_eq!(l.name().parse::<Label>().unwrap(), l);
        }
        assert!("XX".parse::<Label>().is_err());
    }

    #[test]
    fn empty_rules_give_default() {
        let m = shapes::icosphere::<f64>(1, 2.0);
        assert!(label_by_planes(&m, &[], Label::VB).labels().iter().all(|&l| l == Label::VB));
    }

    #[test]
    fn single_rule_matches_sign_check() {
        let m = shapes::icosphere::<f64>(2, 2.0);
        let rule = PlaneRule::new(Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Label::SP).unwrap();
        let lab = label_by_planes(&m, &[rule], Label::VB);
        for (v, l) in m.vertices().iter().zip(lab.labels()) {
            assert_eq!(*l == Label::SP, v.x > 0.0);
        }
    }

    #[test]
    fn rule_order_matters_only_in_overlap() {
        let m = shapes::icosphere::<f64>(2, 2.0);
        let a = PlaneRule::new(Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Label::LL).unwrap();
        let b = PlaneRule::new(Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), Label::RL).unwrap();
        let ab = label_by_planes(&m, &[a, b], Label::VB);
        let ba = label_by_planes(&m, &[b, a], Label::VB);
        for (i, v) in m.vertices().iter().enumerate() {
            let overlap = a.passes(*v) && b.passes(*v);
            assert_eq!(ab.labels()[i] != ba.labels()[i], overlap);
        }
    }

    #[test]
    fn labeling_is_rigid_invariant() {
        let m = shapes::icosphere::<f64>(2, 3.0);
        let rules = [
            PlaneRule::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.0, 0.2, 0.0), Label::SP).unwrap(),
            PlaneRule::new(Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.0, -1.0, 0.3), Label::LTP).unwrap(),
        ];
        let rot = crate::geometry::Mat3::rotation(Vec3::new(0.2, 1.0, -0.4), 0.7);
        let t = Vec3::new(3.0, -1.0, 2.0);
        let moved = m.map_vertices(|p| rot.mul_vec(p) + t).unwrap();
        let moved_rules: Vec<_> = rules
            .iter()
            .map(|r| PlaneRule::new(rot.mul_vec(r.point) + t, rot.mul_vec(r.normal()), r.label).unwrap())
            .collect();
        assert_eq!(label_by_planes(&m, &rules, Label::VB), label_by_planes(&moved, &moved_rules, Label::VB));
    }

    #[test]
    fn centroid_of_two_vertices_and_empty_region() {
        let m = shapes::tetrahedron::<f64>()
            .with_vertices(vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 2.0, 0.0),
                Vec3::new(0.0, 0.0, 2.0),
            ])
            .unwrap();
        let lab = SubRegionLabeling::new(vec![Label::SP, Label::SP, Label::VB, Label::VB]);
        assert_eq!(region_centroid(&m, &lab, Label::SP).unwrap(), Vec3::new(1.0, 0.0, 0.0));
        let err = region_centroid(&m, &lab, Label::RTP).unwrap_err().to_string();
        assert!(err.contains("RTP"), "{err}");
    }

    #[test]
    fn centroid_matches_brute_force_on_random_labels() {
        let m = shapes::icosphere::<f64>(2, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lab = SubRegionLabeling::new((0..m.vertex_count()).map(|_| Label::ALL[rng.gen_range(0..10)]).collect());
        let cents = region_centroids(&m, &lab).unwrap();
        let mut covered = 0;
        for (l, c) in cents {
            let members: Vec<_> = (0..m.vertex_count()).filter(|&i| lab.labels()[i] == l).collect();
            covered += members.len();
            let mut sum = Vec3::zero();
            for &i in &members {
                sum += m.vertices()[i];
            }
            assert!(c.distance(sum / members.len() as f64) < 1e-12);
        }
        assert_eq!(covered, m.vertex_count());
    }

    #[test]
    fn tre_examples() {
        assert_eq!(tre(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0)), 0.0);
        assert_eq!(tre(Vec3::new(3.0, 4.0, 0.0), Vec3::zero()), 5.0);
    }

    /// All-vertices-to-all-triangles oracle.
    fn brute_directed(a: &TriMesh<f64>, b: &TriMesh<f64>) -> Vec<f64> {
        a.vertices()
            .iter()
            .map(|&v| {
                (0..b.face_count())
                    .map(|f| {
                        let [x, y, z] = b.triangle(f);
                        v.distance_sq(closest_point_on_triangle(v, x, y, z).0)
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    pub(crate) fn brute_hd_assd(a: &TriMesh<f64>, b: &TriMesh<f64>) -> (f64, f64) {
        let d: Vec<f64> = brute_directed(a, b).into_iter().chain(brute_directed(b, a)).collect();
        (d.iter().copied().fold(0.0, f64::max), d.iter().sum::<f64>() / d.len() as f64)
    }

    #[test]
    fn offset_cubes_have_unit_hausdorff() {
        let a = shapes::cuboid::<f64>(Vec3::zero(), Vec3::splat(1.0));
        let b = a.translated(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(assd(&a, &a).unwrap(), 0.0);
        assert!(hausdorff(&a, &TriMesh::empty()).is_err());
    }

    #[test]
    fn surface_distances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..10 {
            let a = crate::losses::testutil::bumpy_sphere(1, 3.0, 0.4, seed);
            let b = crate::losses::testutil::bumpy_sphere(1, 3.3, 0.4, seed + 100)
                .translated(Vec3::new(rng.gen_range(-1.0..1.0), 0.0, rng.gen_range(-1.0..1.0)));
            let (hd, sd) = brute_hd_assd(&a, &b);
            assert_eq!(hausdorff(&a, &b).unwrap(), hd);
            assert_eq!(assd(&a, &b).unwrap(), sd);
        }
    }

    fn mask_with(geom: GridGeometry<f64>, idx: impl Iterator<Item = usize>) -> BinaryMask<f64> {
        let mut data = vec![0u8; geom.len()];
        for i in idx {
            data[i] = 1;
        }
        BinaryMask::new(geom, data).unwrap()
    }

    #[test]
    fn dice_examples() {
        let g = GridGeometry::new([10, 10, 10], Vec3::splat(1.0), Vec3::zero()).unwrap();
        let a = mask_with(g, 0..100);
        let b = mask_with(g, 50..150);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask_with(g, 500..600)).unwrap(), 0.0);
        assert_eq!(dice(&BinaryMask::zeros(g), &BinaryMask::zeros(g)).unwrap(), 1.0);
        let other = GridGeometry::new([10, 10, 10], Vec3::splat(0.5), Vec3::zero()).unwrap();
        assert!(dice(&a, &BinaryMask::zeros(other)).is_err());
    }

    #[test]
    fn identity_registration_scores_perfectly() {
        let m = shapes::icosphere::<f64>(2, 4.0);
        let rules = [
            PlaneRule::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Label::SP).unwrap(),
            PlaneRule::new(Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Label::LL).unwrap(),
        ];
        let lab = label_by_planes(&m, &rules, Label::VB);
        let cents = region_centroids(&m, &lab).unwrap();
        let g = GridGeometry::new([4, 4, 4], Vec3::splat(1.0), Vec3::zero()).unwrap();
        let mask = mask_with(g, 0..10);
        let rep = evaluate_case(&CaseEvaluation {
            case: "c0",
            pred_labeling: &lab,
            gt_labeling: &lab,
            mapped: &cents,
            gt_centroids: &cents,
            predicted: &m,
            gt: &m,
            masks: Some((&mask, &mask)),
        })
        .unwrap()
        .with_aggregates();
        for r in rep.rows.iter().filter(|r| r.case == "c0") {
            assert_eq!(r.tre, Some(0.0));
            assert_eq!(r.hd, Some(0.0));
            assert_eq!(r.assd, Some(0.0));
        }
        let all = rep.rows.iter().find(|r| r.region == "all" && r.case == "c0").unwrap();
        assert_eq!(all.dice, Some(1.0));
        assert_eq!(rep.rows.len(), 4 * 3);
    }

    #[test]
    fn aggregates_match_hand_computation() {
        let row = |case: &str, tre: f64| MetricsRow {
            case: case.into(),
            region: "SP".into(),
            tre: Some(tre),
            hd: None,
            assd: None,
            dice: None,
        };
        let rep = MetricsReport {
            rows: vec![row("a", 1.0), row("b", 3.0)],
        }
        .with_aggregates();
        let mean = rep.rows.iter().find(|r| r.case == "mean").unwrap();
        let std = rep.rows.iter().find(|r| r.case == "std").unwrap();
        assert_eq!((mean.tre, std.tre, mean.hd), (Some(2.0), Some(1.0), None));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        rep.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("case,region,tre,hd,assd,dice\na,SP,1,,,\n"), "{text}");
    }

    #[test]
    fn rules_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("planes.csv");
        let rules = vec![
            PlaneRule::new(Vec3::new(0.1, 2.0, -3.0), Vec3::new(0.0, 0.6, 0.8), Label::LAP).unwrap(),
            PlaneRule::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Label::RP).unwrap(),
        ];
        PlaneRule::write_csv(&rules, &p).unwrap();
        assert_eq!(PlaneRule::<f64>::read_csv(&p).unwrap(), rules);
        std::fs::write(&p, "px,py,pz,nx,ny,nz,label\n0,0,0,0,0,0,SP\n").unwrap();
        assert!(PlaneRule::<f64>::read_csv(&p).is_err());
        std::fs::write(&p, "px,py,pz,nx,ny,nz,label\n0,0,0,1,0,0,QQ\n").unwrap();
        assert!(PlaneRule::<f64>::read_csv(&p).is_err());
    }

    proptest! {
        #[test]
        fn metrics_symmetric_and_ordered(seed in 0u64..1000, shift in -2.0f64..2.0) {
            let a = crate::losses::testutil::bumpy_sphere(1, 3.0, 0.5, seed);
            let b = crate::losses::testutil::bumpy_sphere(1, 2.5, 0.5, seed + 1).translated(Vec3::new(shift, 0.0, 0.0));
            let (hab, hba) = (hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
            let (sab, sba) = (assd(&a, &b).unwrap(), assd(&b, &a).unwrap());
            prop_assert_eq!(hab, hba);
            prop_assert!((sab - sba).abs() < 1e-12);
            prop_assert!(hab >= sab && sab >= 0.0);
        }
    }
}
