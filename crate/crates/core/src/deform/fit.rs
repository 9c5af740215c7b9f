use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::losses::{total_loss, LossBreakdown, LossInputs, LossWeights, Target};
use crate::mesh::TriMesh;

use super::affine::align_affine;
use super::DisplacementField;

/// Starting point of the direct fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitInit {
    /// Zero displacement.
    Zero,
    /// Translation aligning the vertex centroids.
    Centroid,
    /// Symmetric affine ICP between reference and target vertices.
    #[default]
    Affine,
}

/// Settings of [`fit_direct`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Step applied to the per-vertex gradient (the gradient of a mean over
    /// vertices, rescaled by the vertex count).
    pub step_size: f64,
    pub momentum: f64,
    pub use_schedules: bool,
    /// Schedule step `t` advanced per iteration.
    pub schedule_step_scale: u64,
    /// Converged when the relative decrease of the total stays below this for
    /// `convergence_window` consecutive iterations with unchanged weights.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub init: FitInit,
    pub affine_iters: usize,
    /// Largest per-vertex move in one iteration (mm); `None` disables the
    /// clamp.
    pub max_vertex_step: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_size: 0.05,
            momentum: 0.9,
            use_schedules: true,
            schedule_step_scale: 40,
            convergence_tol: 1e-6,
            convergence_window: 20,
            init: FitInit::Affine,
            affine_iters: 50,
            max_vertex_step: Some(0.1),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter(format!("step_size = {} must be > 0", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum = {} must be in [0, 1)", self.momentum)));
        }
        if !(self.convergence_tol >= 0.0) || self.convergence_window == 0 {
            return Err(Error::InvalidParameter("convergence_tol >= 0 and convergence_window >= 1 required".into()));
        }
        if let Some(m) = self.max_vertex_step {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidParameter(format!("max_vertex_step = {m} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Outcome of a direct fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub config: FitConfig,
    pub weights: LossWeights<f64>,
    /// Per-iteration loss terms (scheduled weights).
    pub history: Vec<LossBreakdown<f64>>,
    /// Total with unscheduled base weights at zero displacement.
    pub initial_total: f64,
    /// Same, after the initial alignment.
    pub aligned_total: f64,
    /// Same, for the returned displacement.
    pub final_total: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Displacement the fit starts from, per [`FitConfig::init`].
pub fn initial_displacement(reference: &TriMesh<f64>, target: &TriMesh<f64>, config: &FitConfig) -> Result<Vec<Vec3<f64>>> {
    let (Some(rc), Some(tc)) = (reference.centroid(), target.centroid()) else {
        return Err(Error::Empty("reference and target need vertices".into()));
    };
    let n = reference.vertex_count();
    Ok(match config.init {
        FitInit::Zero => vec![Vec3::zero(); n],
        FitInit::Centroid => vec![tc - rc; n],
        FitInit::Affine => {
            let xf = align_affine(reference.vertices(), target.vertices(), config.affine_iters);
            reference.vertices().iter().map(|&v| xf.apply(v) - v).collect()
        }
    })
}

/// Direct per-case optimization of reference vertex displacements against
/// the composed mesh loss (no segmentation term), by gradient descent with
/// momentum.
pub fn fit_direct(
    reference: &TriMesh<f64>,
    target: &TriMesh<f64>,
    weights: &LossWeights<f64>,
    config: &FitConfig,
) -> Result<(DisplacementField<f64>, TriMesh<f64>, FitReport)> {
    let target = Target::new(target.clone())?;
    fit_direct_to(reference, &target, weights, config)
}

/// [`fit_direct`] against a precomputed target.
pub fn fit_direct_to(
    reference: &TriMesh<f64>,
    target: &Target<f64>,
    weights: &LossWeights<f64>,
    config: &FitConfig,
) -> Result<(DisplacementField<f64>, TriMesh<f64>, FitReport)> {
    config.validate()?;
    weights.validate()?;
    if reference.is_empty() {
        return Err(Error::Empty("reference mesh has no vertices".into()));
    }
    let n = reference.vertex_count();
    let base = weights.at(None);
    let eval = |d: &[Vec3<f64>], t: Option<u64>| {
        let pred = reference.with_vertices(reference.vertices().iter().zip(d).map(|(v, x)| *v + *x).collect())?;
        let inputs = LossInputs {
            pred: &pred,
            target,
            disp: d,
            masks: None,
        };
        let (b, g) = total_loss(&inputs, weights, t)?;
        if !b.total.is_finite() {
            return Err(Error::Diverged { step: t.unwrap_or(0) as usize, loss: b.total });
        }
        Ok((b, g))
    };

    let zero = vec![Vec3::zero(); n];
    let initial_total = eval(&zero, None)?.0.total_with(&base);
    let mut d = initial_displacement(reference, target.mesh(), config)?;
    let aligned_total = eval(&d, None)?.0.total_with(&base);

    let mut vel = vec![Vec3::zero(); n];
    let mut history = Vec::with_capacity(config.max_iters);
    let mut best = (aligned_total, d.clone());
    let mut quiet = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    let step = config.step_size * n as f64;
    for it in 0..config.max_iters {
        let t = config.use_schedules.then(|| it as u64 * config.schedule_step_scale);
        let (b, g) = eval(&d, t).map_err(|e| match e {
            Error::Diverged { loss, .. } => Error::Diverged { step: it, loss },
            other => other,
        })?;
        let unscheduled = b.total_with(&base);
        if unscheduled < best.0 {
            best = (unscheduled, d.clone());
        }
        if let Some(prev) = history.last() {
            let prev: &LossBreakdown<f64> = prev;
            let same_weights = {
                let (p, c) = (prev.weights, b.weights);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
                close(p.seg, c.seg) && close(p.delay, c.delay) && close(p.edge, c.edge)
            };
            let rel = (prev.total - b.total) / prev.total.abs().max(1e-300);
            if same_weights && rel < config.convergence_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        history.push(b);
        iterations = it + 1;
        if quiet >= config.convergence_window {
            converged = true;
            break;
        }
        for ((x, v), gr) in d.iter_mut().zip(vel.iter_mut()).zip(g.combined()) {
            *v = *v * config.momentum - gr * step;
            if let Some(m) = config.max_vertex_step {
                let len = v.norm();
                if len > m {
                    *v = *v * (m / len);
                }
            }
            *x += *v;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("no convergence within {} iterations", config.max_iters));
    }
    let mut final_total = eval(&d, None)?.0.total_with(&base);
    if final_total < best.0 {
        best = (final_total, d.clone());
    }
    if final_total > initial_total || final_total > aligned_total {
        warnings.push(format!(
            "final loss {final_total} exceeds the starting loss; returning the best iterate ({})",
            best.0
        ));
        d = best.1;
        final_total = best.0;
    }
    let field = DisplacementField::new(d)?;
    let deformed = field.apply(reference)?;
    Ok((
        field,
        deformed,
        FitReport {
            config: config.clone(),
            weights: *weights,
            history,
            initial_total,
            aligned_total,
            final_total,
            iterations,
            converged,
            warnings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::testutil::bumpy_sphere;
    use crate::mesh::shapes;

    #[test]
    fn identity_target_stays_put() {
        let m = shapes::icosphere::<f64>(2, 5.0);
        let (d, _, r) = fit_direct(&m, &m, &LossWeights::default(), &FitConfig::default()).unwrap();
        assert!(d.max_norm() < 0.01, "{}", d.max_norm());
        assert!(r.final_total <= r.initial_total);
    }

    #[test]
    fn translation_is_recovered() {
        let m = shapes::icosphere::<f64>(3, 8.0);
        let target = m.translated(Vec3::new(5.0, 0.0, 0.0));
        let (d, deformed, r) = fit_direct(&m, &target, &LossWeights::default(), &FitConfig::default()).unwrap();
        let mean = d.mean().unwrap();
        assert!((mean - Vec3::new(5.0, 0.0, 0.0)).norm() < 0.5, "{mean:?}");
        assert!(deformed.shares_topology(&m));
        assert!(r.final_total <= r.initial_total);
    }

    #[test]
    fn zero_start_still_lowers_the_loss() {
        let m = shapes::icosphere::<f64>(3, 8.0);
        let target = m.translated(Vec3::new(5.0, 0.0, 0.0));
        let cfg = FitConfig {
            init: FitInit::Zero,
            ..FitConfig::default()
        };
        let (_, _, r) = fit_direct(&m, &target, &LossWeights::default(), &cfg).unwrap();
        let first = r.history.first().unwrap().chamfer;
        let last = r.history.last().unwrap().chamfer;
        assert!(last < 0.1 * first, "{first} -> {last}");
        assert!(r.final_total < r.initial_total);
    }

    #[test]
    fn smooth_warp_chamfer_drops() {
        let m = shapes::icosphere::<f64>(3, 15.0);
        let target = m
            .map_vertices(|p| p + Vec3::new(4.0 * (p.y / 12.0).sin(), 3.0 * (p.z / 10.0).cos(), 2.0 * (p.x / 9.0).sin()))
            .unwrap();
        let (_, deformed, r) = fit_direct(&m, &target, &LossWeights::default(), &FitConfig::default()).unwrap();
        let t = Target::new(target).unwrap();
        let before = crate::losses::chamfer_curvature(&m, &t, 5.0, crate::losses::ChamferMode::Classical).unwrap().value;
        let after = crate::losses::chamfer_curvature(&deformed, &t, 5.0, crate::losses::ChamferMode::Classical).unwrap().value;
        assert!(after < 0.1 * before, "{before} -> {after}");
        assert!(r.final_total <= r.initial_total);
    }

    #[test]
    fn stronger_disp_weight_smooths_the_field() {
        let a = bumpy_sphere(2, 6.0, 0.01, 1);
        let b = bumpy_sphere(2, 6.0, 0.6, 5);
        let mut last = f64::INFINITY;
        for w in [0.1, 1.0, 10.0] {
            let weights = LossWeights { disp: w, ..Default::default() };
            let (_, _, r) = fit_direct(&a, &b, &weights, &FitConfig::default()).unwrap();
            let disp = r.history.last().unwrap().disp;
            assert!(disp < last, "disp term {disp} at weight {w}");
            last = disp;
        }
    }

    #[test]
    fn no_disp_reg_runs() {
        let a = bumpy_sphere(2, 6.0, 0.01, 1);
        let b = bumpy_sphere(2, 6.0, 0.6, 5);
        let weights = LossWeights { disp: 0.0, ..Default::default() };
        let (_, deformed, _) = fit_direct(&a, &b, &weights, &FitConfig::default()).unwrap();
        assert!(deformed.shares_topology(&a));
    }

    #[test]
    fn rejects_bad_config() {
        let m = shapes::icosphere::<f64>(1, 5.0);
        for cfg in [
            FitConfig { max_iters: 0, ..Default::default() },
            FitConfig { step_size: 0.0, ..Default::default() },
            FitConfig { momentum: 1.0, ..Default::default() },
        ] {
            assert!(fit_direct(&m, &m, &LossWeights::default(), &cfg).is_err());
        }
        let bad = LossWeights { chamfer: -1.0, ..Default::default() };
        assert!(fit_direct(&m, &m, &bad, &FitConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let a = bumpy_sphere(2, 5.0, 0.3, 1);
        let b = bumpy_sphere(2, 5.5, 0.3, 2);
        let cfg = FitConfig { max_iters: 60, ..Default::default() };
        let (d1, _, _) = fit_direct(&a, &b, &LossWeights::default(), &cfg).unwrap();
        let (d2, _, _) = fit_direct(&a, &b, &LossWeights::default(), &cfg).unwrap();
        assert_eq!(d1, d2);
    }
}
