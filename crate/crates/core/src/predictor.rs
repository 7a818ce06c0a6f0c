//! The pair predictor: an MLP scoring how likely a patch pair is to keep its
//! feature distance under editing.
//!
//! The network sees `f_i ⊕ f_j ⊕ ‖f_i − f_j‖₂` (width `2D + 1`), runs it through
//! ReLU hidden layers and emits one logit. Pairs are unordered, so the logit
//! used everywhere is the mean of the network on `(f_i, f_j)` and `(f_j, f_i)`;
//! the probability is its sigmoid.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::PatchFeatureMap;
use crate::relational::{canonical_pairs, euclidean, make_ground_truth, pair_count, top_k_ranks, PairIndexSet};
use crate::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-7;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"RZMLP1";

const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weights);
        out += &self.bias;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    dim: usize,
    layers: Vec<Dense>,
}

impl PredictorModel {
    /// He-normal initialization of the hidden layers, scaled-normal output
    /// layer, zero biases.
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("feature dimension and hidden widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![2 * dim + 1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let gain = if l == last { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / w[0] as f64).sqrt()).expect("positive std");
                let mut layer = Dense::zeros(w[0], w[1]);
                layer.weights.mapv_inplace(|_| normal.sample(&mut rng));
                layer
            })
            .collect();
        Ok(Self { dim, layers })
    }

    pub fn from_layers(dim: usize, layers: Vec<Dense>) -> Result<Self> {
        let model = Self { dim, layers };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Checkpoint(m));
        if self.dim == 0 || self.layers.is_empty() {
            return bad("empty model".into());
        }
        let mut width = self.input_width();
        for (l, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = layer.weights.dim();
            if rows != width || cols == 0 || layer.bias.len() != cols {
                return bad(format!("layer {l} has shape {rows}x{cols}, expected input width {width}"));
            }
            width = cols;
        }
        if width != 1 {
            return bad(format!("output width {width}, expected a single logit"));
        }
        if self.layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_width(&self) -> usize {
        2 * self.dim + 1
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.bias.len()).collect()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Zeroes the output layer, making every prediction exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// Raw network outputs, one per input row.
    fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(a.view());
            if l != last {
                a.mapv_inplace(relu);
            }
        }
        a.index_axis_move(Axis(1), 0)
    }

    /// Symmetrized logits of `n` pairs whose inputs occupy rows `0..n`
    /// (forward order) and `n..2n` (swapped order).
    fn pair_logits(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let z = self.logits(x);
        let n = z.len() / 2;
        (0..n).map(|k| 0.5 * (z[k] + z[n + k])).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.parameter_count() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            let (rows, cols) = l.weights.dim();
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            for w in l.weights.iter() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in l.bias.iter() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < CHECKPOINT_MAGIC.len() + 12 || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(bad("not an RZMLP1 checkpoint"));
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::CrcMismatch { stored, computed });
        }
        let mut r = Reader { buf: payload, pos: 6 };
        let dim = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(bad("implausible layer count"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let weights = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?).map_err(|e| bad(&e.to_string()))?;
            let bias = Array1::from_vec(r.f64s(cols)?);
            layers.push(Dense { weights, bias });
        }
        if r.pos != payload.len() {
            return Err(bad("trailing bytes after last layer"));
        }
        Self::from_layers(dim, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Network input rows for a list of pairs: forward order first, swapped
/// order in the second half.
fn pair_inputs<'a>(pairs: impl ExactSizeIterator<Item = (&'a [f64], &'a [f64])> + Clone, dim: usize) -> Array2<f64> {
    let n = pairs.len();
    let width = 2 * dim + 1;
    let mut x = Array2::zeros((2 * n, width));
    for (k, (fi, fj)) in pairs.enumerate() {
        let d = euclidean(fi, fj);
        let mut fwd = x.row_mut(k);
        for t in 0..dim {
            fwd[t] = fi[t];
            fwd[dim + t] = fj[t];
        }
        fwd[2 * dim] = d;
        let mut rev = x.row_mut(n + k);
        for t in 0..dim {
            rev[t] = fj[t];
            rev[dim + t] = fi[t];
        }
        rev[2 * dim] = d;
    }
    x
}

fn check_dim(model: &PredictorModel, d: usize) -> Result<()> {
    if d != model.dim {
        return Err(Error::DimensionMismatch(format!(
            "model expects {}-dimensional features, got {d}",
            model.dim
        )));
    }
    Ok(())
}

/// Probability that the unordered pair `(f_i, f_j)` is stable.
pub fn predict_pair(model: &PredictorModel, f_i: &[f64], f_j: &[f64]) -> Result<f64> {
    check_dim(model, f_i.len())?;
    check_dim(model, f_j.len())?;
    let x = pair_inputs(std::iter::once((f_i, f_j)), model.dim);
    Ok(sigmoid(model.pair_logits(x.view())[0]))
}

/// Symmetrized logits for every canonical pair of `fm`, in rank order.
pub fn pair_logits_all(model: &PredictorModel, fm: &PatchFeatureMap) -> Result<Vec<f64>> {
    check_dim(model, fm.dim())?;
    let pairs: Vec<(usize, usize)> = canonical_pairs(fm.len()).collect();
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(PREDICT_CHUNK) {
        let x = pair_inputs(chunk.iter().map(|&(i, j)| (fm.feature(i), fm.feature(j))), model.dim);
        out.extend(model.pair_logits(x.view()));
    }
    Ok(out)
}

/// Probability for every canonical pair of `fm`, in rank order.
pub fn predict_all(model: &PredictorModel, fm: &PatchFeatureMap) -> Result<Vec<f64>> {
    Ok(pair_logits_all(model, fm)?.into_iter().map(sigmoid).collect())
}

#[inline]
fn bce_term(p: f64, positive: bool, pos_weight: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if positive {
        -pos_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Weighted binary cross-entropy averaged over all canonical pairs.
pub fn bce_loss(probs: &[f64], positives: &PairIndexSet, pos_weight: f64) -> Result<f64> {
    let m = pair_count(positives.patch_count());
    if probs.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {m} pairs",
            probs.len()
        )));
    }
    let mut labels = vec![false; m];
    for r in positives.ranks() {
        labels[r] = true;
    }
    let total: f64 = probs
        .iter()
        .zip(&labels)
        .map(|(p, y)| bce_term(*p, *y, pos_weight))
        .sum();
    Ok(total / m as f64)
}

struct Gradient {
    layers: Vec<Dense>,
}

impl Gradient {
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }
}

/// Mean loss over the `n` pairs encoded in `x` and its gradient.
fn loss_and_grad_rows(model: &PredictorModel, x: Array2<f64>, labels: &[bool], pos_weight: f64) -> (f64, Gradient) {
    let n = labels.len();
    debug_assert_eq!(x.nrows(), 2 * n);
    let last = model.layers.len() - 1;

    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(x);
    for (l, layer) in model.layers.iter().enumerate() {
        let mut a = layer.forward(acts[l].view());
        if l != last {
            a.mapv_inplace(relu);
        }
        acts.push(a);
    }
    let z = acts.pop().unwrap().index_axis_move(Axis(1), 0);

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut delta = Array2::zeros((2 * n, 1));
    for k in 0..n {
        let logit = 0.5 * (z[k] + z[n + k]);
        let p = sigmoid(logit);
        loss += bce_term(p, labels[k], pos_weight);
        let dl_dp = if p < BCE_EPS || p > 1.0 - BCE_EPS {
            0.0
        } else if labels[k] {
            -pos_weight / p
        } else {
            1.0 / (1.0 - p)
        };
        let g = inv_n * dl_dp * p * (1.0 - p) * 0.5;
        delta[[k, 0]] = g;
        delta[[n + k, 0]] = g;
    }

    let mut grads: Vec<Dense> = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let input = &acts[l];
        let gw = input.t().dot(&delta);
        let gb = delta.sum_axis(Axis(0));
        grads.push(Dense { weights: gw, bias: gb });
        if l > 0 {
            let mut back = delta.dot(&model.layers[l].weights.t());
            // ReLU gate: acts[l] is the post-activation output of layer l - 1.
            back.zip_mut_with(input, |d, a| {
                if *a <= 0.0 {
                    *d = 0.0
                }
            });
            delta = back;
        }
    }
    grads.reverse();
    (loss * inv_n, Gradient { layers: grads })
}

/// Mean weighted BCE over `pairs` of `fm` and its gradient with respect to
/// [`PredictorModel::params`].
pub fn loss_and_gradient(
    model: &PredictorModel,
    fm: &PatchFeatureMap,
    pairs: &[(usize, usize)],
    labels: &[bool],
    pos_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    check_dim(model, fm.dim())?;
    if pairs.len() != labels.len() || pairs.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} pairs with {} labels",
            pairs.len(),
            labels.len()
        )));
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= fm.len() || j >= fm.len()) {
        return Err(Error::InvalidArgument(format!("pair ({i}, {j}) out of range")));
    }
    let x = pair_inputs(pairs.iter().map(|&(i, j)| (fm.feature(i), fm.feature(j))), model.dim);
    let (loss, grad) = loss_and_grad_rows(model, x, labels, pos_weight);
    Ok((loss, grad.flatten()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pairs per gradient step.
    pub batch_size: usize,
    pub seed: u64,
    /// Positives per image.
    pub k: usize,
    /// `None` uses `(#pairs - K) / K`.
    pub pos_weight: Option<f64>,
    pub hidden_sizes: Vec<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 1024,
            seed: 0,
            k: 50,
            pos_weight: None,
            hidden_sizes: vec![128, 128],
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && self.k > 0
            && self.pos_weight.is_none_or(|w| w > 0.0 && w.is_finite())
            && self.hidden_sizes.iter().all(|h| *h > 0)
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters at the epoch with the lowest loss.
    pub model: PredictorModel,
    /// Mean training loss before training (index 0) and after each epoch.
    pub losses: Vec<f64>,
    pub best_epoch: usize,
    pub pos_weight: f64,
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &PredictorModel) -> Self {
        let zeros: Vec<Dense> = model
            .layers
            .iter()
            .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut PredictorModel, grad: &Gradient, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[l], &mut self.v[l], &grad.layers[l]);
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, g| update(p, m, v, *g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, g| update(p, m, v, *g));
        }
    }
}

struct TrainingImage {
    features: PatchFeatureMap,
    labels: Vec<bool>,
}

fn dataset_loss(model: &PredictorModel, data: &[TrainingImage], pos_weight: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for img in data {
        let probs = predict_all(model, &img.features)?;
        total += probs
            .iter()
            .zip(&img.labels)
            .map(|(p, y)| bce_term(*p, *y, pos_weight))
            .sum::<f64>();
        count += probs.len();
    }
    Ok(total / count as f64)
}

/// Trains a predictor on `(original, edited)` feature-map pairs.
///
/// Labels are the top-K most stable pairs of each image under its edit.
/// Shuffling and initialization are driven by `cfg.seed` only.
pub fn train(images: &[(PatchFeatureMap, PatchFeatureMap)], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let dim = images.first().ok_or(Error::EmptyTrainingSet)?.0.dim();
    let mut data = Vec::with_capacity(images.len());
    for (orig, edited) in images {
        if orig.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "training features of dimension {} and {dim}",
                orig.dim()
            )));
        }
        if orig.len() < 2 {
            return Err(Error::InvalidArgument("training image needs at least two patches".into()));
        }
        let gt = make_ground_truth(orig, edited, cfg.k)?;
        let mut labels = vec![false; pair_count(orig.len())];
        for r in gt.ranks() {
            labels[r] = true;
        }
        data.push(TrainingImage {
            features: orig.clone(),
            labels,
        });
    }

    let total_pairs: usize = data.iter().map(|d| d.labels.len()).sum();
    let total_pos = data.len() * cfg.k;
    let pos_weight = cfg
        .pos_weight
        .unwrap_or(((total_pairs - total_pos) as f64 / total_pos as f64).max(1.0));

    let mut samples: Vec<(u32, u32, u32)> = Vec::with_capacity(total_pairs);
    for (img, d) in data.iter().enumerate() {
        samples.extend(canonical_pairs(d.features.len()).map(|(i, j)| (img as u32, i as u32, j as u32)));
    }

    let mut model = PredictorModel::new(dim, &cfg.hidden_sizes, cfg.seed)?;
    let mut adam = Adam::new(&model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A_F00D_CAFE);

    let initial = dataset_loss(&model, &data, pos_weight)?;
    if !initial.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: initial });
    }
    let mut losses = vec![initial];
    let mut best = (initial, 0usize, model.clone());

    for epoch in 1..=cfg.epochs {
        samples.shuffle(&mut shuffle_rng);
        for batch in samples.chunks(cfg.batch_size) {
            let x = pair_inputs(
                batch.iter().map(|&(img, i, j)| {
                    let f = &data[img as usize].features;
                    (f.feature(i as usize), f.feature(j as usize))
                }),
                dim,
            );
            let labels: Vec<bool> = batch
                .iter()
                .map(|&(img, i, j)| {
                    let d = &data[img as usize];
                    d.labels[crate::relational::rank_unchecked(i as usize, j as usize, d.features.len())]
                })
                .collect();
            let (_, grad) = loss_and_grad_rows(&model, x, &labels, pos_weight);
            adam.step(&mut model, &grad, cfg);
        }
        let loss = dataset_loss(&model, &data, pos_weight)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, epoch, model.clone());
        }
    }

    Ok(TrainReport {
        model: best.2,
        losses,
        best_epoch: best.1,
        pos_weight,
    })
}

/// The `k` pairs with the highest predicted probability; ties broken by
/// ascending pair rank.
pub fn extract_watermark(model: &PredictorModel, fm: &PatchFeatureMap, k: usize) -> Result<PairIndexSet> {
    // Ranking on the logit avoids sigmoid saturation collapsing distinct scores.
    let logits = pair_logits_all(model, fm)?;
    let ranks = top_k_ranks(&logits, k)?;
    PairIndexSet::from_ranks(fm.len(), ranks)
}

/// Top-K selection on a ready-made per-pair score vector (rank order).
pub fn top_k_from_scores(scores: &[f64], p: usize, k: usize) -> Result<PairIndexSet> {
    if scores.len() != pair_count(p) {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} pairs",
            scores.len(),
            pair_count(p)
        )));
    }
    PairIndexSet::from_ranks(p, top_k_ranks(scores, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::FeatureSource;
    use rand::Rng;

    fn random_map(p: usize, d: usize, seed: u64) -> PatchFeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = (0..p * d).map(|_| rng.random::<f64>()).collect();
        PatchFeatureMap::new(1, p, d, f, FeatureSource::External).unwrap()
    }

    fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn predict_pair_is_symmetric_and_deterministic() {
        let model = PredictorModel::new(3, &[16, 16], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_vec(3, &mut rng);
            let b = random_vec(3, &mut rng);
            let ab = predict_pair(&model, &a, &b).unwrap();
            assert_eq!(ab, predict_pair(&model, &b, &a).unwrap());
            assert_eq!(ab, predict_pair(&model, &a, &b).unwrap());
            assert!(ab > 0.0 && ab < 1.0);
        }
        let a = random_vec(3, &mut rng);
        let same = predict_pair(&model, &a, &a).unwrap();
        assert_eq!(same, predict_pair(&model, &a, &a).unwrap());
    }

    #[test]
    fn zero_output_layer_predicts_half() {
        let mut model = PredictorModel::new(3, &[8], 4).unwrap();
        model.zero_output_layer();
        let fm = random_map(5, 3, 1);
        assert!(predict_all(&model, &fm).unwrap().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = PredictorModel::new(3, &[8], 4).unwrap();
        assert!(predict_pair(&model, &[0.0; 3], &[0.0; 2]).is_err());
        assert!(predict_all(&model, &random_map(4, 2, 0)).is_err());
    }

    #[test]
    fn predict_all_sizes_and_loop_oracle() {
        let model = PredictorModel::new(3, &[32, 32], 5).unwrap();
        assert_eq!(predict_all(&model, &random_map(2, 3, 1)).unwrap().len(), 1);
        assert_eq!(predict_all(&model, &random_map(196, 3, 1)).unwrap().len(), 19110);
        let fm = random_map(12, 3, 8);
        let all = predict_all(&model, &fm).unwrap();
        for ((i, j), p) in canonical_pairs(12).zip(&all) {
            let q = predict_pair(&model, fm.feature(i), fm.feature(j)).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_examples() {
        let set = PairIndexSet::new(4, [(0, 1), (2, 3)]).unwrap();
        let l = bce_loss(&[0.5; 6], &set, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

        let perfect: Vec<f64> = (0..6).map(|r| if r == 0 || r == 5 { 1.0 } else { 0.0 }).collect();
        let l = bce_loss(&perfect, &set, 1.0).unwrap();
        assert!((l - (-(1.0 - BCE_EPS).ln())).abs() < 1e-18);
        assert!(l > 0.0 && l < 2e-7);

        assert!(bce_loss(&[0.5; 5], &set, 1.0).is_err());
    }

    #[test]
    fn bce_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs: Vec<f64> = (0..66).map(|_| rng.random::<f64>()).collect();
        let set = PairIndexSet::from_ranks(12, [3, 17, 22, 40, 65]).unwrap();
        let w = 12.2;
        let mut acc = 0.0;
        for (r, p) in probs.iter().enumerate() {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            let y = if [3, 17, 22, 40, 65].contains(&r) { 1.0 } else { 0.0 };
            acc += -(w * y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        assert!((bce_loss(&probs, &set, w).unwrap() - acc / 66.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fm = random_map(8, 3, 10);
        let pairs: Vec<_> = canonical_pairs(8).collect();
        let labels: Vec<bool> = (0..pairs.len()).map(|r| r % 5 == 0).collect();
        let mut model = PredictorModel::new(3, &[8], 11).unwrap();
        let (_, grad) = loss_and_gradient(&model, &fm, &pairs, &labels, 3.0).unwrap();
        let params = model.params();
        let h = 1e-4;
        for idx in 0..params.len() {
            let mut p = params.clone();
            p[idx] += h;
            model.set_params(&p).unwrap();
            let (lp, _) = loss_and_gradient(&model, &fm, &pairs, &labels, 3.0).unwrap();
            p[idx] -= 2.0 * h;
            model.set_params(&p).unwrap();
            let (lm, _) = loss_and_gradient(&model, &fm, &pairs, &labels, 3.0).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[idx].abs()).max(1e-6);
            assert!((fd - grad[idx]).abs() / denom < 1e-3, "param {idx}: fd {fd} vs {}", grad[idx]);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let model = PredictorModel::new(3, &[5, 4], 2).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..6], b"RZMLP1");
        assert_eq!(PredictorModel::from_bytes(&bytes).unwrap(), model);
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(PredictorModel::from_bytes(&bad), Err(Error::CrcMismatch { .. })));
        assert!(PredictorModel::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    }

    #[test]
    fn extract_watermark_ties_and_full() {
        let mut model = PredictorModel::new(3, &[8], 4).unwrap();
        model.zero_output_layer();
        let fm = random_map(6, 3, 1);
        let wm = extract_watermark(&model, &fm, 4).unwrap();
        assert_eq!(wm.pairs(), &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(extract_watermark(&model, &fm, 15).unwrap(), PairIndexSet::full(6));
        assert!(extract_watermark(&model, &fm, 16).is_err());
        assert!(extract_watermark(&model, &fm, 0).is_err());
    }

    #[test]
    fn extract_matches_full_sort() {
        let model = PredictorModel::new(3, &[16], 6).unwrap();
        let fm = random_map(12, 3, 7);
        let probs = predict_all(&model, &fm).unwrap();
        let mut all: Vec<((usize, usize), f64)> = canonical_pairs(12).zip(probs).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut want: Vec<_> = all[..10].iter().map(|x| x.0).collect();
        want.sort();
        assert_eq!(extract_watermark(&model, &fm, 10).unwrap().pairs(), want);
    }

    #[test]
    fn shifting_logits_keeps_watermark() {
        let mut model = PredictorModel::new(3, &[16], 6).unwrap();
        let fm = random_map(10, 3, 2);
        let before = extract_watermark(&model, &fm, 8).unwrap();
        let last = model.layers_mut().last_mut().unwrap();
        last.bias[0] += 3.25;
        assert_eq!(extract_watermark(&model, &fm, 8).unwrap(), before);
    }

    #[test]
    fn relabeling_patches_permutes_predictions() {
        let model = PredictorModel::new(3, &[16], 9).unwrap();
        let fm = random_map(6, 3, 3);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut flat = vec![0.0; 18];
        for (new, &old) in perm.iter().enumerate() {
            flat[new * 3..new * 3 + 3].copy_from_slice(fm.feature(old));
        }
        let permuted = PatchFeatureMap::new(1, 6, 3, flat, FeatureSource::External).unwrap();
        let a = predict_all(&model, &fm).unwrap();
        let b = predict_all(&model, &permuted).unwrap();
        for (i, j) in canonical_pairs(6) {
            let (oi, oj) = (perm[i], perm[j]);
            let r_old = crate::relational::pair_rank(oi.min(oj), oi.max(oj), 6).unwrap();
            let r_new = crate::relational::pair_rank(i, j, 6).unwrap();
            assert!((a[r_old] - b[r_new]).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let orig = random_map(12, 3, 1);
        let edited = random_map(12, 3, 2);
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 16,
            k: 5,
            hidden_sizes: vec![16, 16],
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(&[(orig.clone(), edited.clone())], &cfg).unwrap();
        let b = train(&[(orig, edited)], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses.len(), 16);
        assert!(a.losses[a.best_epoch] < a.losses[0]);
        assert!((a.pos_weight - 61.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_image_overfits() {
        use crate::perturb::{apply_attack, Attack};
        let img = crate::synth::synthetic_image(64, 3);
        let edited = apply_attack(&img, &Attack::SurrogateEdit { seed: 4 }).unwrap();
        let a = crate::imaging::extract_mean_rgb(&img, 16).unwrap();
        let b = crate::imaging::extract_mean_rgb(&edited, 16).unwrap();
        let gt = crate::relational::make_ground_truth(&a, &b, 10).unwrap();
        let cfg = TrainConfig {
            k: 10,
            epochs: 3000,
            ..TrainConfig::default()
        };
        let report = train(&[(a.clone(), b)], &cfg).unwrap();
        let pred = extract_watermark(&report.model, &a, 10).unwrap();
        assert!(pred.intersection_count(&gt) >= 9);
    }

    #[test]
    fn training_rejects_bad_input() {
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyTrainingSet)));
        let a = random_map(6, 3, 1);
        let b = random_map(6, 2, 1);
        assert!(train(&[(a.clone(), a.clone()), (b.clone(), b)], &TrainConfig { k: 2, ..Default::default() }).is_err());
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(train(&[(a.clone(), a)], &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let a = random_map(6, 3, 1);
        let b = random_map(6, 3, 2);
        let cfg = TrainConfig {
            k: 2,
            epochs: 3,
            hidden_sizes: vec![4],
            learning_rate: f64::MAX,
            ..Default::default()
        };
        match train(&[(a, b)], &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
