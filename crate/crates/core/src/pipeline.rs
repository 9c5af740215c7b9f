//! Experiment pipeline over a synthetic dataset: extract each target surface,
//! deform the reference onto it, map the reference region centroids, score
//! the result, and rerun under ablation variants.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deform::{
    fit_direct_to, gnn_forward, gnn_train, initial_displacement, DisplacementField, FitConfig, FitReport, GnnArch,
    GnnCase, GnnParams, GnnStep, GnnTrainConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::losses::{ChamferMode, DispWeighting, LossWeights, Target};
use crate::mesh::{laplacian_smooth, TriMesh};
use crate::metrics::{evaluate_case, label_by_planes, tre, CaseEvaluation, Label, MetricsReport, MetricsRow, SubRegionLabeling};
use crate::register::{compose_pair, map_points, ref_to_target, InterpConfig};
use crate::synth::{case_id, gen_random_case, gen_reference, read_case, read_manifest, read_reference, Reference, SynthCase, WarpLimits};
use crate::volume::{build_feature_volume, marching_cubes, voxelize, BinaryMask, GridGeometry};

/// Which deformer predicts the displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Deformer {
    /// Per-case gradient descent on the displacements.
    #[default]
    Direct,
    /// Graph network trained over all targets of the run, then applied to each.
    Gnn,
}

/// Target surface extraction: marching cubes on the mask, then smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub iso: f64,
    pub smooth_iters: usize,
    pub smooth_factor: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            iso: 0.5,
            smooth_iters: 10,
            smooth_factor: 0.5,
        }
    }
}

/// Settings of the graph-network deformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnSettings {
    pub arch: GnnArch,
    /// Blur scales (Gaussian sigma, mm) of the occupancy channels of the
    /// analytic feature volume built from each target mask.
    pub feature_scales: Vec<f64>,
    pub train: GnnTrainConfig,
}

impl Default for GnnSettings {
    fn default() -> Self {
        Self {
            arch: GnnArch::default(),
            feature_scales: vec![2.0],
            train: GnnTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub results: Option<PathBuf>,
}

/// Complete settings of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives pair selection, the variable-reference draw and network init.
    pub seed: u64,
    pub deformer: Deformer,
    /// Random case pairs scored in the pairwise experiment.
    pub pairs: usize,
    pub weights: LossWeights<f64>,
    pub fit: FitConfig,
    pub interp: InterpConfig,
    pub surface: SurfaceConfig,
    pub gnn: GnnSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deformer: Deformer::Direct,
            pairs: 20,
            weights: LossWeights::default(),
            fit: FitConfig::default(),
            interp: InterpConfig::default(),
            surface: SurfaceConfig::default(),
            gnn: GnnSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.fit.validate()?;
        self.interp.validate()?;
        if self.surface.smooth_factor < 0.0 || self.surface.smooth_factor > 1.0 {
            return Err(Error::InvalidParameter("surface.smooth_factor must be in [0, 1]".into()));
        }
        if self.gnn.feature_scales.is_empty() {
            return Err(Error::InvalidParameter("gnn.feature_scales must not be empty".into()));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = crate::jsonio::read(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::jsonio::write(path.as_ref(), self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn extract_surface(mask: &BinaryMask<f64>, cfg: &SurfaceConfig) -> Result<TriMesh<f64>> {
    let mesh = marching_cubes(&mask.to_grid(), cfg.iso)?;
    Ok(laplacian_smooth(&mesh, cfg.smooth_iters, cfg.smooth_factor))
}

/// One registration target: its mask and the surface extracted from it.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub mask: BinaryMask<f64>,
    pub surface: TriMesh<f64>,
}

impl TargetData {
    pub fn from_mask(mask: BinaryMask<f64>, cfg: &SurfaceConfig) -> Result<Self> {
        let surface = extract_surface(&mask, cfg)?;
        Ok(Self { mask, surface })
    }

    /// Target given as a closed surface; the mask is its voxelization on a
    /// grid covering it with a 4 mm margin.
    pub fn from_surface(surface: TriMesh<f64>, spacing: f64) -> Result<Self> {
        let (lo, hi) = surface
            .bounding_box()
            .ok_or_else(|| Error::Empty("target mesh has no vertices".into()))?;
        let geom = GridGeometry::covering(lo - Vec3::splat(4.0), hi + Vec3::splat(4.0), spacing)?;
        Ok(Self {
            mask: voxelize(&surface, &geom)?,
            surface,
        })
    }
}

/// Runs `f` over `items` on `jobs` threads, keeping the input order.
pub fn par_map<I: Sync, R: Send>(jobs: usize, items: &[I], f: impl Fn(&I) -> Result<R> + Sync) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Result of deforming the reference onto one target.
#[derive(Debug, Clone)]
pub struct CaseFit {
    pub disp: DisplacementField<f64>,
    pub predicted: TriMesh<f64>,
    /// Present for the direct deformer.
    pub report: Option<FitReport>,
}

/// All fits of a run, plus the network training history for the GNN deformer.
#[derive(Debug, Clone)]
pub struct Registration {
    pub fits: Vec<CaseFit>,
    pub gnn_history: Option<Vec<GnnStep>>,
}

/// Deforms `reference` onto every target with the configured deformer.
pub fn register_targets(reference: &TriMesh<f64>, targets: &[TargetData], cfg: &RunConfig, jobs: usize) -> Result<Registration> {
    cfg.validate()?;
    match cfg.deformer {
        Deformer::Direct => {
            let fits = par_map(jobs, targets, |t| {
                let target = Target::new(t.surface.clone())?;
                let (disp, predicted, report) = fit_direct_to(reference, &target, &cfg.weights, &cfg.fit)?;
                for w in &report.warnings {
                    log::warn!("{w}");
                }
                Ok(CaseFit {
                    disp,
                    predicted,
                    report: Some(report),
                })
            })?;
            Ok(Registration { fits, gnn_history: None })
        }
        Deformer::Gnn => register_gnn(reference, targets, cfg, jobs),
    }
}

/// Trains one network over all targets (each starting from the configured
/// initial alignment of the reference), then predicts the residual field.
fn register_gnn(reference: &TriMesh<f64>, targets: &[TargetData], cfg: &RunConfig, jobs: usize) -> Result<Registration> {
    let starts = par_map(jobs, targets, |t| initial_displacement(reference, &t.surface, &cfg.fit))?;
    let cases = targets
        .iter()
        .zip(&starts)
        .map(|(t, s)| {
            Ok(GnnCase {
                volume: build_feature_volume(&t.mask, &cfg.gnn.feature_scales)?,
                reference: DisplacementField::new(s.clone())?.apply(reference)?,
                gt: t.surface.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let channels = cases.first().map_or(0, |c| c.volume.channel_count());
    let mut params = GnnParams::new(channels, &cfg.gnn.arch, cfg.seed)?;
    params.fit_standardization(&cases)?;
    let (params, history) = gnn_train(&cases, params, &cfg.weights, &cfg.gnn.train)?;
    let fits = cases
        .iter()
        .zip(&starts)
        .map(|(c, s)| {
            let d = gnn_forward(&c.reference, &c.volume, &params)?;
            let disp = DisplacementField::new(s.iter().zip(d.vectors()).map(|(a, b)| *a + *b).collect())?;
            let predicted = disp.apply(reference)?;
            Ok(CaseFit {
                disp,
                predicted,
                report: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Registration {
        fits,
        gnn_history: Some(history),
    })
}

/// A synthetic dataset held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub reference: Reference,
    pub ids: Vec<String>,
    pub cases: Vec<SynthCase>,
}

impl Dataset {
    /// Same content as the synth command writes: reference from `seed`, case
    /// `k` from seed `seed + k`.
    pub fn generate(cases: usize, seed: u64, limits: &WarpLimits, jobs: usize) -> Result<Self> {
        let reference = gen_reference(seed)?;
        let ks: Vec<usize> = (0..cases).collect();
        let cases = par_map(jobs, &ks, |&k| gen_random_case(&reference, seed + k as u64, limits))?;
        Ok(Self {
            reference,
            ids: ks.into_iter().map(case_id).collect(),
            cases,
        })
    }

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let manifest = read_manifest(root)?;
        let reference = read_reference(root.join(crate::synth::layout::REF_DIR))?;
        let cases = manifest
            .cases
            .iter()
            .map(|c| read_case(root.join(&c.id), &reference))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reference,
            ids: manifest.cases.into_iter().map(|c| c.id).collect(),
            cases,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn targets(&self, cfg: &SurfaceConfig, jobs: usize) -> Result<Vec<TargetData>> {
        par_map(jobs, &self.cases, |c| TargetData::from_mask(c.mask.clone(), cfg))
    }
}

/// Reference-to-target scores: per-region TRE of the mapped reference
/// centroids, region and whole-mesh HD / ASSD, and Dice of the voxelized
/// prediction against the target mask.
pub fn evaluate_ref2tgt(ds: &Dataset, fits: &[CaseFit], interp: &InterpConfig, jobs: usize) -> Result<MetricsReport> {
    check_fits(ds, fits)?;
    let labeling = ds.reference.labeling();
    let ref_centroids = crate::metrics::region_centroids(&ds.reference.mesh, &labeling)?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let reports = par_map(jobs, &idx, |&k| {
        let case = &ds.cases[k];
        let fit = &fits[k];
        let corr = ref_to_target(&ds.reference.mesh, &fit.disp)?;
        let mapped = map_labeled(&corr, &ref_centroids, interp)?;
        let pred_mask = voxelize(&fit.predicted, &case.mask.geometry)?;
        evaluate_case(&CaseEvaluation {
            case: &ds.ids[k],
            pred_labeling: &labeling,
            gt_labeling: &labeling,
            mapped: &mapped,
            gt_centroids: &case.centroids,
            predicted: &fit.predicted,
            gt: &case.gt_mesh,
            masks: Some((&pred_mask, &case.mask)),
        })
    })?;
    Ok(concat(reports))
}

/// `count` distinct ordered pairs `(a, b)` with `a != b`, drawn from `seed`.
/// Every ordered pair is returned (in draw order) when fewer exist.
pub fn random_pairs(cases: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = cases * cases.saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(count.min(total));
    while out.len() < count.min(total) {
        let a = rng.gen_range(0..cases);
        let b = (a + 1 + rng.gen_range(0..cases - 1)) % cases;
        if !out.contains(&(a, b)) {
            out.push((a, b));
        }
    }
    out
}

/// Id of a pair row: `<source>><target>`.
pub fn pair_id(a: &str, b: &str) -> String {
    format!("{a}>{b}")
}

/// Pairwise scores: the ground-truth centroids of case `a` mapped through the
/// composed correspondence into case `b`, against those of `b`. Only TRE is
/// reported; the `all` row holds the mean over regions.
pub fn evaluate_pairs(ds: &Dataset, fits: &[CaseFit], pairs: &[(usize, usize)], interp: &InterpConfig, jobs: usize) -> Result<MetricsReport> {
    check_fits(ds, fits)?;
    let reports = par_map(jobs, pairs, |&(a, b)| {
        let corr = compose_pair(&fits[a].disp, &fits[b].disp, &ds.reference.mesh)?;
        let mapped = map_labeled(&corr, &ds.cases[a].centroids, interp)?;
        Ok(tre_rows(&pair_id(&ds.ids[a], &ds.ids[b]), &mapped, &ds.cases[b].centroids))
    })?;
    Ok(concat(reports))
}

fn check_fits(ds: &Dataset, fits: &[CaseFit]) -> Result<()> {
    if fits.len() != ds.len() {
        return Err(Error::ShapeMismatch(format!("{} fits for {} cases", fits.len(), ds.len())));
    }
    Ok(())
}

fn concat(reports: Vec<MetricsReport>) -> MetricsReport {
    let mut out = MetricsReport::default();
    for r in reports {
        out.extend(r);
    }
    out
}

fn map_labeled(
    corr: &crate::register::CorrespondenceSet<f64>,
    points: &[(Label, Point3<f64>)],
    interp: &InterpConfig,
) -> Result<Vec<(Label, Point3<f64>)>> {
    let pts: Vec<_> = points.iter().map(|p| p.1).collect();
    let mapped = map_points(corr, &pts, interp)?;
    Ok(points.iter().zip(mapped).map(|(p, m)| (p.0, m)).collect())
}

fn tre_rows(case: &str, mapped: &[(Label, Point3<f64>)], gt: &[(Label, Point3<f64>)]) -> MetricsReport {
    let mut rows = Vec::new();
    let mut sum = 0.0;
    for (&(label, m), &(_, g)) in mapped.iter().zip(gt) {
        let t = tre(m, g);
        sum += t;
        rows.push(MetricsRow {
            case: case.into(),
            region: label.to_string(),
            tre: Some(t),
            hd: None,
            assd: None,
            dice: None,
        });
    }
    rows.push(MetricsRow {
        case: case.into(),
        region: "all".into(),
        tre: (!mapped.is_empty()).then(|| sum / mapped.len() as f64),
        hd: None,
        assd: None,
        dice: None,
    });
    MetricsReport { rows }
}

/// Scores of one full run (reference-to-target and pairwise).
#[derive(Debug, Clone)]
pub struct RunScores {
    pub ref2tgt: MetricsReport,
    pub pairwise: MetricsReport,
}

impl RunScores {
    pub fn summary(&self, variant: &str) -> VariantSummary {
        let stat = |r: &MetricsReport, f: fn(&MetricsRow) -> Option<f64>| {
            let v: Vec<f64> = r.region_rows("all").filter_map(f).collect();
            mean_std(&v)
        };
        VariantSummary {
            variant: variant.into(),
            tre_ref: stat(&self.ref2tgt, |r| r.tre),
            tre_pair: stat(&self.pairwise, |r| r.tre),
            hd: stat(&self.ref2tgt, |r| r.hd),
            assd: stat(&self.ref2tgt, |r| r.assd),
            dice: stat(&self.ref2tgt, |r| r.dice),
        }
    }
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    Some((m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()))
}

/// Registers every case of `ds` and scores both experiments.
pub fn run_experiment(ds: &Dataset, cfg: &RunConfig, jobs: usize) -> Result<(Registration, RunScores)> {
    let targets = ds.targets(&cfg.surface, jobs)?;
    let reg = register_targets(&ds.reference.mesh, &targets, cfg, jobs)?;
    let scores = score(ds, &reg.fits, cfg, jobs)?;
    Ok((reg, scores))
}

pub fn score(ds: &Dataset, fits: &[CaseFit], cfg: &RunConfig, jobs: usize) -> Result<RunScores> {
    let pairs = random_pairs(ds.len(), cfg.pairs, cfg.seed);
    Ok(RunScores {
        ref2tgt: evaluate_ref2tgt(ds, fits, &cfg.interp, jobs)?,
        pairwise: evaluate_pairs(ds, fits, &pairs, &cfg.interp, jobs)?,
    })
}

/// The ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// No fixed reference: each target is registered from another case's
    /// extracted surface, and pairs are registered directly.
    VariableRef,
    /// Network features sampled on the surface only.
    Alpha0,
    /// Constant segmentation weight.
    ConstSeg,
    ClassicalChamfer,
    /// Uniform displacement-regularization weights.
    Laplacian,
    NoDisp,
    /// Constant edge weight.
    ConstEdge,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::VariableRef,
        Ablation::Alpha0,
        Ablation::ConstSeg,
        Ablation::ClassicalChamfer,
        Ablation::Laplacian,
        Ablation::NoDisp,
        Ablation::ConstEdge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::VariableRef => "variable_ref",
            Ablation::Alpha0 => "alpha0",
            Ablation::ConstSeg => "const_seg",
            Ablation::ClassicalChamfer => "classical_chamfer",
            Ablation::Laplacian => "laplacian",
            Ablation::NoDisp => "no_disp",
            Ablation::ConstEdge => "const_edge",
        }
    }

    /// The run configuration of this variant.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::VariableRef => {}
            Ablation::Alpha0 => cfg.gnn.arch.alpha = vec![0.0],
            Ablation::ConstSeg => cfg.weights.schedule.constant_seg = true,
            Ablation::ClassicalChamfer => cfg.weights.chamfer_curvature = ChamferMode::Classical,
            Ablation::Laplacian => cfg.weights.disp_weighting = DispWeighting::Uniform,
            Ablation::NoDisp => cfg.weights.disp = 0.0,
            Ablation::ConstEdge => cfg.weights.schedule.constant_edge = true,
        }
        cfg
    }

    /// Whether the variant leaves the registration unchanged under `cfg`:
    /// no deformer here has a segmentation term, and the direct deformer
    /// samples no features.
    pub fn is_noop(self, cfg: &RunConfig) -> bool {
        match self {
            Ablation::ConstSeg => true,
            Ablation::Alpha0 => cfg.deformer == Deformer::Direct,
            _ => false,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown ablation {s:?}")))
    }
}

/// One row of the ablation table: mean and population std over cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub tre_ref: Option<(f64, f64)>,
    pub tre_pair: Option<(f64, f64)>,
    pub hd: Option<(f64, f64)>,
    pub assd: Option<(f64, f64)>,
    pub dice: Option<(f64, f64)>,
}

const SUMMARY_HEADER: [&str; 11] = [
    "variant",
    "tre_ref_mean",
    "tre_ref_std",
    "tre_pair_mean",
    "tre_pair_std",
    "hd_mean",
    "hd_std",
    "assd_mean",
    "assd_std",
    "dice_mean",
    "dice_std",
];

pub fn write_summaries(rows: &[VariantSummary], path: impl AsRef<Path>) -> Result<()> {
    let cell = |v: Option<(f64, f64)>, i: usize| v.map(|m| if i == 0 { m.0 } else { m.1 }.to_string()).unwrap_or_default();
    let rows = rows.iter().map(|r| {
        let mut out = vec![r.variant.clone()];
        for v in [r.tre_ref, r.tre_pair, r.hd, r.assd, r.dice] {
            out.push(cell(v, 0));
            out.push(cell(v, 1));
        }
        out
    });
    crate::table::write(path.as_ref(), &SUMMARY_HEADER, rows)
}

/// Registration without the fixed reference. For every target a different
/// case, drawn from `cfg.seed`, serves as the reference: its extracted
/// surface (labeled by its own warped plane rules) is fitted onto the target
/// and its ground-truth centroids are mapped. Pairs are fitted source onto
/// target the same way. Always uses the direct deformer.
pub fn run_variable_ref(ds: &Dataset, cfg: &RunConfig, jobs: usize) -> Result<RunScores> {
    cfg.validate()?;
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidParameter("variable reference needs at least 2 cases".into()));
    }
    let targets = ds.targets(&cfg.surface, jobs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let sources: Vec<(usize, usize)> = (0..n).map(|t| ((t + 1 + rng.gen_range(0..n - 1)) % n, t)).collect();
    let labeling = ds.reference.labeling();

    let ref_rows = par_map(jobs, &sources, |&(s, t)| {
        let (pred, mapped, pred_labeling) = fit_from_case(ds, &targets, s, t, cfg)?;
        let case = &ds.cases[t];
        let pred_mask = voxelize(&pred, &case.mask.geometry)?;
        evaluate_case(&CaseEvaluation {
            case: &ds.ids[t],
            pred_labeling: &pred_labeling,
            gt_labeling: &labeling,
            mapped: &mapped,
            gt_centroids: &case.centroids,
            predicted: &pred,
            gt: &case.gt_mesh,
            masks: Some((&pred_mask, &case.mask)),
        })
    })?;
    let pairs = random_pairs(n, cfg.pairs, cfg.seed);
    let pair_rows = par_map(jobs, &pairs, |&(a, b)| {
        let (_, mapped, _) = fit_from_case(ds, &targets, a, b, cfg)?;
        Ok(tre_rows(&pair_id(&ds.ids[a], &ds.ids[b]), &mapped, &ds.cases[b].centroids))
    })?;
    Ok(RunScores {
        ref2tgt: concat(ref_rows),
        pairwise: concat(pair_rows),
    })
}

fn fit_from_case(
    ds: &Dataset,
    targets: &[TargetData],
    s: usize,
    t: usize,
    cfg: &RunConfig,
) -> Result<(TriMesh<f64>, Vec<(Label, Point3<f64>)>, SubRegionLabeling)> {
    let source = &targets[s].surface;
    let target = Target::new(targets[t].surface.clone())?;
    let (disp, pred, _) = fit_direct_to(source, &target, &cfg.weights, &cfg.fit)?;
    let corr = ref_to_target(source, &disp)?;
    let mapped = map_labeled(&corr, &ds.cases[s].centroids, &cfg.interp)?;
    Ok((pred, mapped, label_by_planes(source, &ds.cases[s].rules, Label::VB)))
}

/// Scores of the baseline and of each requested variant. Variants that do
/// not change the registration reuse the baseline fits.
pub fn run_ablations(ds: &Dataset, base: &RunConfig, which: &[Ablation], jobs: usize) -> Result<Vec<(String, RunScores)>> {
    let (_, baseline) = run_experiment(ds, base, jobs)?;
    let mut out = vec![("baseline".to_string(), baseline.clone())];
    for &a in which {
        let scores = if a == Ablation::VariableRef {
            if base.deformer != Deformer::Direct {
                log::warn!("variable_ref always uses the direct deformer");
            }
            run_variable_ref(ds, base, jobs)?
        } else if a.is_noop(base) {
            log::warn!("{a} does not affect the {:?} deformer; reusing the baseline", base.deformer);
            baseline.clone()
        } else {
            run_experiment(ds, &a.apply(base), jobs)?.1
        };
        out.push((a.name().to_string(), scores));
    }
    Ok(out)
}

/// `<results>/<case>/displacement.csv`.
pub fn displacement_path(results: &Path, id: &str) -> PathBuf {
    results.join(id).join(DISPLACEMENT_CSV)
}

pub const DISPLACEMENT_CSV: &str = "displacement.csv";
pub const FIT_REPORT_JSON: &str = "fit_report.json";
pub const PREDICTED_OBJ: &str = "predicted.obj";

/// Writes `<results>/<case>/{displacement.csv, fit_report.json, predicted.obj}`.
pub fn write_fits(results: &Path, ids: &[String], fits: &[CaseFit]) -> Result<()> {
    for (id, fit) in ids.iter().zip(fits) {
        let dir = results.join(id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        fit.disp.write_csv(dir.join(DISPLACEMENT_CSV))?;
        crate::mesh::write_obj(&fit.predicted, dir.join(PREDICTED_OBJ))?;
        if let Some(r) = &fit.report {
            crate::jsonio::write(&dir.join(FIT_REPORT_JSON), r)?;
        }
    }
    Ok(())
}

/// Reads the displacement of every dataset case back from `results`.
pub fn read_fits(ds: &Dataset, results: &Path) -> Result<Vec<CaseFit>> {
    ds.ids
        .iter()
        .map(|id| {
            let disp = DisplacementField::read_csv(displacement_path(results, id))?;
            disp.check_matches(&ds.reference.mesh)?;
            let predicted = disp.apply(&ds.reference.mesh)?;
            Ok(CaseFit {
                disp,
                predicted,
                report: None,
            })
        })
        .collect()
}

/// Named points read from CSV with header `x,y,z` or `<name>,x,y,z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    /// Header of the name column, if any.
    pub name_column: Option<String>,
    pub names: Vec<String>,
    pub points: Vec<Point3<f64>>,
}

impl PointTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let header = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let name_column = match cols.as_slice() {
            ["x", "y", "z"] => None,
            [name, "x", "y", "z"] => Some(name.to_string()),
            _ => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header x,y,z or <name>,x,y,z, found {}", cols.join(",")),
                ))
            }
        };
        let off = usize::from(name_column.is_some());
        let mut table = Self {
            name_column,
            names: Vec::new(),
            points: Vec::new(),
        };
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(path, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let row = crate::table::Row { line, fields: rec };
            if off == 1 {
                table.names.push(row.get(path, 0, table.name_column.as_deref().unwrap_or("name"))?);
            }
            table.points.push(Vec3::new(
                row.get(path, off, "x")?,
                row.get(path, off + 1, "y")?,
                row.get(path, off + 2, "z")?,
            ));
        }
        Ok(table)
    }

    /// Writes the same layout with `points` replaced.
    pub fn write_with(&self, points: &[Point3<f64>], path: impl AsRef<Path>) -> Result<()> {
        let mut header: Vec<&str> = Vec::new();
        if let Some(n) = &self.name_column {
            header.push(n);
        }
        header.extend(["x", "y", "z"]);
        let rows = points.iter().enumerate().map(|(i, p)| {
            let mut r: Vec<String> = self.names.get(i).cloned().into_iter().collect();
            r.extend([p.x.to_string(), p.y.to_string(), p.z.to_string()]);
            r
        });
        crate::table::write(path.as_ref(), &header, rows)
    }
}
