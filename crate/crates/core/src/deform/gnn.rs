use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::losses::{total_loss, LossInputs, LossWeights, Target};
use crate::mesh::{vertex_normals, TriMesh};
use crate::volume::{trilinear_sample, FeatureVolume};

use super::DisplacementField;

/// Samples every channel at `v + a n` for each offset `a` along the vertex
/// normal `n`. Row `i` holds vertex `i`; columns run offset-major.
pub fn sample_vertex_features(volume: &FeatureVolume<f64>, mesh: &TriMesh<f64>, alpha: &[f64]) -> Result<DMatrix<f64>> {
    let normals = vertex_normals(mesh)?;
    let c = volume.channel_count();
    let mut out = DMatrix::zeros(mesh.vertex_count(), alpha.len() * c);
    for (i, (&v, &n)) in mesh.vertices().iter().zip(&normals).enumerate() {
        for (k, &a) in alpha.iter().enumerate() {
            let p = v + n * a;
            for (ch, grid) in volume.channels().iter().enumerate() {
                out[(i, k * c + ch)] = trilinear_sample(grid, p);
            }
        }
    }
    Ok(out)
}

/// Shape of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnArch {
    pub layers: usize,
    pub width: usize,
    /// Sampling offsets along the vertex normal (mm).
    pub alpha: Vec<f64>,
}

impl Default for GnnArch {
    fn default() -> Self {
        Self {
            layers: 3,
            width: 32,
            alpha: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        }
    }
}

/// One graph convolution. Weights are `out x in`, biases `1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    pub w0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
}

impl GnnLayer {
    pub fn in_width(&self) -> usize {
        self.w0.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.w0.nrows()
    }

    fn check(&self) -> Result<()> {
        let (o, i) = self.w0.shape();
        if self.w1.shape() != (o, i) || self.b0.shape() != (1, o) || self.b1.shape() != (1, o) {
            return Err(Error::ShapeMismatch(format!(
                "layer weights w0 {:?}, w1 {:?}, b0 {:?}, b1 {:?}",
                self.w0.shape(),
                self.w1.shape(),
                self.b0.shape(),
                self.b1.shape()
            )));
        }
        Ok(())
    }
}

/// Network parameters. Each layer sees the sampled image features next to
/// the previous layer's output; the first layer's "previous output" is the
/// vertex position and normal. All inputs are standardized with
/// `input_mean` / `input_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub alpha: Vec<f64>,
    pub channels: usize,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<GnnLayer>,
    /// `3 x width`.
    pub head_w: DMatrix<f64>,
    /// `1 x 3`.
    pub head_b: DMatrix<f64>,
}

const GEO_WIDTH: usize = 6;

impl GnnParams {
    /// Glorot-uniform layers, zero head, identity standardization.
    pub fn new(channels: usize, arch: &GnnArch, seed: u64) -> Result<Self> {
        if arch.alpha.is_empty() || arch.layers == 0 || arch.width == 0 || channels == 0 {
            return Err(Error::InvalidParameter(
                "GNN needs at least one offset, channel, layer and hidden unit".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cnn = arch.alpha.len() * channels;
        let mut layers = Vec::with_capacity(arch.layers);
        let mut prev = GEO_WIDTH;
        for _ in 0..arch.layers {
            let inw = cnn + prev;
            let bound = (6.0 / (inw + arch.width) as f64).sqrt();
            let mut init = || DMatrix::from_fn(arch.width, inw, |_, _| rng.gen_range(-bound..bound));
            let (w0, w1) = (init(), init());
            layers.push(GnnLayer {
                w0,
                b0: DMatrix::zeros(1, arch.width),
                w1,
                b1: DMatrix::zeros(1, arch.width),
            });
            prev = arch.width;
        }
        Ok(Self {
            alpha: arch.alpha.clone(),
            channels,
            input_mean: vec![0.0; cnn + GEO_WIDTH],
            input_scale: vec![1.0; cnn + GEO_WIDTH],
            layers,
            head_w: DMatrix::zeros(3, arch.width),
            head_b: DMatrix::zeros(1, 3),
        })
    }

    /// Sets the standardization from per-column statistics of the raw inputs
    /// of `cases`.
    pub fn fit_standardization(&mut self, cases: &[GnnCase]) -> Result<()> {
        let width = self.input_mean.len();
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let mut n = 0usize;
        for case in cases {
            let raw = raw_inputs(&case.volume, &case.reference, &self.alpha)?;
            for r in 0..raw.nrows() {
                for c in 0..width {
                    sum[c] += raw[(r, c)];
                    sq[c] += raw[(r, c)] * raw[(r, c)];
                }
            }
            n += raw.nrows();
        }
        if n == 0 {
            return Err(Error::Empty("no vertices to standardize over".into()));
        }
        for c in 0..width {
            let mean = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - mean * mean).max(0.0);
            self.input_mean[c] = mean;
            self.input_scale[c] = if var.sqrt() > 1e-9 { 1.0 / var.sqrt() } else { 1.0 };
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cnn = self.alpha.len() * self.channels;
        if self.alpha.is_empty() || self.layers.is_empty() {
            return Err(Error::InvalidParameter("GNN needs offsets and layers".into()));
        }
        if self.input_mean.len() != cnn + GEO_WIDTH || self.input_scale.len() != cnn + GEO_WIDTH {
            return Err(Error::ShapeMismatch(format!(
                "standardization has {} columns, inputs have {}",
                self.input_mean.len(),
                cnn + GEO_WIDTH
            )));
        }
        let mut prev = GEO_WIDTH;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            if layer.in_width() != cnn + prev {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} takes {} inputs, expected {}",
                    layer.in_width(),
                    cnn + prev
                )));
            }
            prev = layer.out_width();
        }
        if self.head_w.shape() != (3, prev) || self.head_b.shape() != (1, 3) {
            return Err(Error::ShapeMismatch(format!(
                "head is {:?}, expected (3, {prev})",
                self.head_w.shape()
            )));
        }
        Ok(())
    }

    fn tensors(&self) -> Vec<&DMatrix<f64>> {
        let mut out: Vec<_> = self.layers.iter().flat_map(|l| [&l.w0, &l.b0, &l.w1, &l.b1]).collect();
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out: Vec<_> = self
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.w0, &mut l.b0, &mut l.w1, &mut l.b1])
            .collect();
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Sampled features followed by position and normal, before standardization.
fn raw_inputs(volume: &FeatureVolume<f64>, mesh: &TriMesh<f64>, alpha: &[f64]) -> Result<DMatrix<f64>> {
    let cnn = sample_vertex_features(volume, mesh, alpha)?;
    let normals = vertex_normals(mesh)?;
    let w = cnn.ncols();
    let mut out = cnn.resize_horizontally(w + GEO_WIDTH, 0.0);
    for (i, (v, n)) in mesh.vertices().iter().zip(&normals).enumerate() {
        for k in 0..3 {
            out[(i, w + k)] = v[k];
            out[(i, w + 3 + k)] = n[k];
        }
    }
    Ok(out)
}

/// Per-case network inputs: standardized image features, standardized
/// geometry, and the vertex adjacency.
struct Prepared {
    cnn: DMatrix<f64>,
    geo: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

fn prepare(volume: &FeatureVolume<f64>, mesh: &TriMesh<f64>, params: &GnnParams) -> Result<Prepared> {
    if volume.channel_count() != params.channels {
        return Err(Error::ShapeMismatch(format!(
            "volume has {} channels, network expects {}",
            volume.channel_count(),
            params.channels
        )));
    }
    let mut raw = raw_inputs(volume, mesh, &params.alpha)?;
    for c in 0..raw.ncols() {
        let (m, s) = (params.input_mean[c], params.input_scale[c]);
        raw.column_mut(c).apply(|x| *x = (*x - m) * s);
    }
    let w = raw.ncols() - GEO_WIDTH;
    Ok(Prepared {
        cnn: raw.columns(0, w).into_owned(),
        geo: raw.columns(w, GEO_WIDTH).into_owned(),
        neighbors: mesh.topology().all_neighbors().to_vec(),
    })
}

/// Row `i` of the result is the sum of rows `j` over the neighbors of `i`.
fn aggregate(neighbors: &[Vec<usize>], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            for c in 0..m.ncols() {
                out[(i, c)] += m[(j, c)];
            }
        }
    }
    out
}

fn conv_pre(x: &DMatrix<f64>, neighbors: &[Vec<usize>], layer: &GnnLayer) -> DMatrix<f64> {
    let mut u = x * layer.w0.transpose() + aggregate(neighbors, &(x * layer.w1.transpose()));
    for (i, nb) in neighbors.iter().enumerate() {
        let n = nb.len() as f64;
        let s = 1.0 / (1.0 + n);
        for c in 0..u.ncols() {
            u[(i, c)] = s * (u[(i, c)] + layer.b0[(0, c)] + n * layer.b1[(0, c)]);
        }
    }
    u
}

/// One graph convolution: `ReLU((W0 f_i + b0 + sum_j (W1 f_j + b1)) / (1 + |N(i)|))`
/// with one row of `x` per vertex.
pub fn graph_conv(x: &DMatrix<f64>, neighbors: &[Vec<usize>], layer: &GnnLayer) -> Result<DMatrix<f64>> {
    layer.check()?;
    if x.ncols() != layer.in_width() || x.nrows() != neighbors.len() {
        return Err(Error::ShapeMismatch(format!(
            "features {:?} for a layer of width {} over {} vertices",
            x.shape(),
            layer.in_width(),
            neighbors.len()
        )));
    }
    Ok(conv_pre(x, neighbors, layer).map(|v| v.max(0.0)))
}

struct Tape {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    last: DMatrix<f64>,
}

fn forward(params: &GnnParams, p: &Prepared) -> (DMatrix<f64>, Tape) {
    let mut prev = p.geo.clone();
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let x = concat(&p.cnn, &prev);
        let z = conv_pre(&x, &p.neighbors, layer);
        prev = z.map(|v| v.max(0.0));
        inputs.push(x);
        pre.push(z);
    }
    let mut d = &prev * params.head_w.transpose();
    for mut row in d.row_iter_mut() {
        row += &params.head_b;
    }
    (d, Tape { inputs, pre, last: prev })
}

fn concat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone().resize_horizontally(a.ncols() + b.ncols(), 0.0);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Parameter gradients, in the order of `GnnParams::tensors`.
fn backward(params: &GnnParams, p: &Prepared, tape: &Tape, dd: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let cnn = p.cnn.ncols();
    let mut layer_grads = Vec::with_capacity(params.layers.len());
    let head_w = dd.transpose() * &tape.last;
    let head_b = DMatrix::from_fn(1, 3, |_, c| dd.column(c).sum());
    let mut dg = dd * &params.head_w;
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let (x, z) = (&tape.inputs[l], &tape.pre[l]);
        let mut du = dg.zip_map(z, |g, z| if z > 0.0 { g } else { 0.0 });
        let mut db1 = DMatrix::zeros(1, du.ncols());
        for (i, nb) in p.neighbors.iter().enumerate() {
            let n = nb.len() as f64;
            let s = 1.0 / (1.0 + n);
            for c in 0..du.ncols() {
                du[(i, c)] *= s;
                db1[(0, c)] += n * du[(i, c)];
            }
        }
        let adu = aggregate(&p.neighbors, &du);
        let w0 = du.transpose() * x;
        let b0 = DMatrix::from_fn(1, du.ncols(), |_, c| du.column(c).sum());
        let w1 = adu.transpose() * x;
        let dx = &du * &layer.w0 + &adu * &layer.w1;
        dg = dx.columns(cnn, dx.ncols() - cnn).into_owned();
        layer_grads.push([w0, b0, w1, db1]);
    }
    let mut out: Vec<_> = layer_grads.into_iter().rev().flatten().collect();
    out.extend([head_w, head_b]);
    out
}

fn to_field(d: &DMatrix<f64>) -> Result<DisplacementField<f64>> {
    DisplacementField::new(d.row_iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect())
}

/// Predicts the displacement of every reference vertex from image features
/// sampled around it.
pub fn gnn_forward(mesh: &TriMesh<f64>, volume: &FeatureVolume<f64>, params: &GnnParams) -> Result<DisplacementField<f64>> {
    params.validate()?;
    let p = prepare(volume, mesh, params)?;
    to_field(&forward(params, &p).0)
}

/// One training example.
#[derive(Debug, Clone)]
pub struct GnnCase {
    pub volume: FeatureVolume<f64>,
    pub reference: TriMesh<f64>,
    pub gt: TriMesh<f64>,
}

/// Settings of [`gnn_train`] (Adam on the mean mesh loss over all cases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnTrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub use_schedules: bool,
    pub schedule_step_scale: u64,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            use_schedules: false,
            schedule_step_scale: 40,
        }
    }
}

/// Mean losses over the training cases at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GnnStep {
    pub step: usize,
    pub total: f64,
    pub chamfer: f64,
}

struct PreparedCase<'a> {
    inputs: Prepared,
    reference: &'a TriMesh<f64>,
    target: Target<f64>,
}

fn evaluate(
    params: &GnnParams,
    cases: &[PreparedCase],
    weights: &LossWeights<f64>,
    t: Option<u64>,
    want_grad: bool,
) -> Result<(f64, f64, Vec<DMatrix<f64>>)> {
    let k = cases.len() as f64;
    let (mut total, mut chamfer) = (0.0, 0.0);
    let mut grads: Vec<DMatrix<f64>> = params.tensors().iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
    for c in cases {
        let (d, tape) = forward(params, &c.inputs);
        let disp: Vec<_> = d.row_iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
        let pred = c
            .reference
            .with_vertices(c.reference.vertices().iter().zip(&disp).map(|(v, x)| *v + *x).collect())?;
        let inputs = LossInputs {
            pred: &pred,
            target: &c.target,
            disp: &disp,
            masks: None,
        };
        let (b, g) = total_loss(&inputs, weights, t)?;
        total += b.total / k;
        chamfer += b.chamfer / k;
        if want_grad {
            let gc = g.combined();
            let dd = DMatrix::from_fn(d.nrows(), 3, |i, j| gc[i][j] / k);
            for (acc, g) in grads.iter_mut().zip(backward(params, &c.inputs, &tape, &dd)) {
                *acc += g;
            }
        }
    }
    Ok((total, chamfer, grads))
}

fn prepare_cases<'a>(cases: &'a [GnnCase], params: &GnnParams) -> Result<Vec<PreparedCase<'a>>> {
    let Some(first) = cases.first() else {
        return Err(Error::Empty("no training cases".into()));
    };
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.reference.faces() != first.reference.faces() || c.gt.vertex_count() == 0 {
                return Err(Error::ShapeMismatch(format!(
                    "case {i}: references must share connectivity and targets must be non-empty"
                )));
            }
            Ok(PreparedCase {
                inputs: prepare(&c.volume, &c.reference, params)?,
                reference: &c.reference,
                target: Target::new(c.gt.clone())?,
            })
        })
        .collect()
}

/// Mean mesh loss and Chamfer term of `params` over `cases`, unscheduled.
pub fn gnn_evaluate(cases: &[GnnCase], params: &GnnParams, weights: &LossWeights<f64>) -> Result<GnnStep> {
    params.validate()?;
    let prepared = prepare_cases(cases, params)?;
    let (total, chamfer, _) = evaluate(params, &prepared, weights, None, false)?;
    Ok(GnnStep { step: 0, total, chamfer })
}

/// Trains `params` with Adam. Gradients stop at the sampling positions. The
/// history holds the loss before each update plus one entry for the final
/// parameters.
pub fn gnn_train(
    cases: &[GnnCase],
    mut params: GnnParams,
    weights: &LossWeights<f64>,
    config: &GnnTrainConfig,
) -> Result<(GnnParams, Vec<GnnStep>)> {
    params.validate()?;
    weights.validate()?;
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
    }
    let prepared = prepare_cases(cases, &params)?;
    let mut m: Vec<DMatrix<f64>> = params.tensors().iter().map(|t| DMatrix::zeros(t.nrows(), t.ncols())).collect();
    let mut v = m.clone();
    let mut history = Vec::with_capacity(config.steps + 1);
    for step in 0..config.steps {
        let t = config.use_schedules.then(|| step as u64 * config.schedule_step_scale);
        let (total, chamfer, grads) = evaluate(&params, &prepared, weights, t, true)?;
        if !total.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Diverged { step, loss: total });
        }
        history.push(GnnStep { step, total, chamfer });
        let k = (step + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(k);
        let c2 = 1.0 - config.beta2.powi(k);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(&grads).zip(&mut m).zip(&mut v) {
            for i in 0..p.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                p[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + config.epsilon);
            }
        }
    }
    let t = config.use_schedules.then(|| config.steps as u64 * config.schedule_step_scale);
    let (total, chamfer, _) = evaluate(&params, &prepared, weights, t, false)?;
    if !total.is_finite() {
        return Err(Error::Diverged { step: config.steps, loss: total });
    }
    history.push(GnnStep {
        step: config.steps,
        total,
        chamfer,
    });
    Ok((params, history))
}
