//! Per-pixel reference model: logistic regression, optionally with one tanh
//! hidden layer, trained by plain mini-batch gradient descent.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{PredictionBatch, SampleBatch};
use crate::error::{Error, IoContext, Result};
use crate::rng::{normal, StreamKind, Streams};
use crate::store::{to_json_document, write_atomic};
use crate::synth::sigmoid;

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the loss only.
const EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// 0 gives plain logistic regression.
    pub hidden_units: usize,
    pub learning_rate: f64,
    /// Pixels per gradient step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of positive pixels in the loss; 1 means unweighted.
    pub pos_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden_units: 0, learning_rate: 0.5, batch_size: 4096, epochs: 30, seed: 42, pos_weight: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return Err(Error::Config(format!("pos_weight must be positive, got {}", self.pos_weight)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    /// `[hidden_units, channels]`
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub channels: usize,
    /// Output-layer weights: one per channel, or one per hidden unit.
    pub weights: Vec<f32>,
    pub bias: f32,
    pub hidden: Option<HiddenLayer>,
    pub config: TrainConfig,
    /// Hash of the training data description and config.
    #[serde(default)]
    pub fingerprint: String,
}

impl ModelParams {
    /// Zero logistic weights, or small seeded random hidden weights.
    pub fn init(channels: usize, config: &TrainConfig) -> Self {
        let h = config.hidden_units;
        let (weights, hidden) = if h == 0 {
            (vec![0.0; channels], None)
        } else {
            let mut rng = Streams::new(config.seed).get(StreamKind::Init, 0, 0);
            let scale = 1.0 / (channels as f64).sqrt();
            let w1 = (0..h * channels).map(|_| (scale * normal(&mut rng)) as f32).collect();
            let w2 = (0..h).map(|_| (0.1 * normal(&mut rng)) as f32).collect();
            (w2, Some(HiddenLayer { weights: w1, bias: vec![0.0; h] }))
        };
        Self { channels, weights, bias: 0.0, hidden, config: config.clone(), fingerprint: String::new() }
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden.as_ref().map_or(0, |h| h.bias.len())
    }

    pub fn n_params(&self) -> usize {
        let h = self.hidden_units();
        if h == 0 {
            self.channels + 1
        } else {
            h * self.channels + 2 * h + 1
        }
    }

    /// Flat parameter vector: `[w, b]`, or `[W1, b1, w2, b2]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        if let Some(hl) = &self.hidden {
            out.extend(hl.weights.iter().map(|&v| f64::from(v)));
            out.extend(hl.bias.iter().map(|&v| f64::from(v)));
        }
        out.extend(self.weights.iter().map(|&v| f64::from(v)));
        out.push(f64::from(self.bias));
        out
    }

    pub fn set_flat(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.n_params(), theta.len())));
        }
        let mut it = theta.iter().map(|&v| v as f32);
        if let Some(hl) = &mut self.hidden {
            hl.weights.iter_mut().chain(hl.bias.iter_mut()).for_each(|w| *w = it.next().unwrap());
        }
        self.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
        self.bias = it.next().unwrap();
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &to_json_document(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).io_context(|| format!("reading {}", path.display()))?;
        let p: Self = serde_json::from_slice(&bytes)?;
        let h = p.hidden_units();
        let ok = match &p.hidden {
            None => p.weights.len() == p.channels,
            Some(hl) => hl.weights.len() == h * p.channels && p.weights.len() == h,
        };
        if !ok {
            return Err(Error::Shape(format!("{}: inconsistent parameter shapes", path.display())));
        }
        Ok(p)
    }

    /// Probability for one pixel's channel vector.
    pub fn forward(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.channels {
            return Err(Error::Shape(format!("expected {} channels, got {}", self.channels, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite model input {x:?}")));
        }
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        Ok(sigmoid(Net::new(&self.to_flat(), self.channels, self.hidden_units()).logit(&x, None)))
    }
}

/// Borrowed view of a flat parameter vector.
struct Net<'a> {
    theta: &'a [f64],
    c: usize,
    h: usize,
}

impl<'a> Net<'a> {
    fn new(theta: &'a [f64], c: usize, h: usize) -> Self {
        Self { theta, c, h }
    }

    /// Logit for `x`; fills `act` with hidden activations when given.
    fn logit(&self, x: &[f64], act: Option<&mut Vec<f64>>) -> f64 {
        let (c, h, t) = (self.c, self.h, self.theta);
        if h == 0 {
            return t[..c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + t[c];
        }
        let mut local = Vec::new();
        let a = act.unwrap_or(&mut local);
        a.clear();
        for j in 0..h {
            let z: f64 = t[j * c..(j + 1) * c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + t[h * c + j];
            a.push(z.tanh());
        }
        let w2 = &t[h * c + h..h * c + 2 * h];
        w2.iter().zip(a.iter()).map(|(w, v)| w * v).sum::<f64>() + t[h * c + 2 * h]
    }

    /// Adds `scale · ∂logit/∂θ` at `x` to `grad`.
    fn add_grad(&self, x: &[f64], act: &[f64], scale: f64, grad: &mut [f64]) {
        let (c, h, t) = (self.c, self.h, self.theta);
        if h == 0 {
            for (g, v) in grad[..c].iter_mut().zip(x) {
                *g += scale * v;
            }
            grad[c] += scale;
            return;
        }
        for j in 0..h {
            let w2 = t[h * c + h + j];
            let dz = scale * w2 * (1.0 - act[j] * act[j]);
            for (g, v) in grad[j * c..(j + 1) * c].iter_mut().zip(x) {
                *g += dz * v;
            }
            grad[h * c + j] += dz;
            grad[h * c + h + j] += scale * act[j];
        }
        grad[h * c + 2 * h] += scale;
    }
}

/// Cross-entropy of one pixel from its logit, stable for large `|z|`.
fn pixel_loss(z: f64, y: bool, pos_weight: f64) -> f64 {
    let p = sigmoid(z).clamp(EPS, 1.0 - EPS);
    if y {
        -pos_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Valid pixels as a dense `[n, channels]` matrix with labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PixelSet {
    pub channels: usize,
    pub x: Vec<f32>,
    pub y: Vec<u8>,
}

impl PixelSet {
    pub fn new(channels: usize) -> Self {
        Self { channels, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.x[i * self.channels..(i + 1) * self.channels]
    }

    pub fn push_batch(&mut self, batch: &SampleBatch) -> Result<()> {
        if batch.channels != self.channels {
            return Err(Error::Shape(format!("shard has {} channels, expected {}", batch.channels, self.channels)));
        }
        let plane = batch.plane();
        for i in 0..batch.len() {
            let (t, v) = (batch.target_plane(i), batch.valid_plane(i));
            for px in (0..plane).filter(|&px| v[px] != 0) {
                self.x.extend((0..self.channels).map(|k| batch.input_plane(i, k)[px]));
                self.y.push(t[px]);
            }
        }
        Ok(())
    }

    pub fn from_shards(channels: usize, paths: &[PathBuf]) -> Result<Self> {
        let mut set = Self::new(channels);
        for p in paths {
            set.push_batch(&SampleBatch::read(p)?)?;
        }
        Ok(set)
    }
}

/// Mean (weighted) cross-entropy over `idx` rows of `data` and its gradient
/// with respect to the flat parameters. `None` when `idx` is empty.
pub fn loss_and_grad_flat(
    theta: &[f64],
    channels: usize,
    hidden: usize,
    data: &PixelSet,
    idx: &[usize],
    pos_weight: f64,
) -> Option<(f64, Vec<f64>)> {
    if idx.is_empty() {
        return None;
    }
    let net = Net::new(theta, channels, hidden);
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut act = Vec::with_capacity(hidden);
    let mut x = vec![0.0; channels];
    for &i in idx {
        for (d, &s) in x.iter_mut().zip(data.row(i)) {
            *d = f64::from(s);
        }
        let y = data.y[i] != 0;
        let z = net.logit(&x, Some(&mut act));
        loss += pixel_loss(z, y, pos_weight);
        // d/dz of the unclamped weighted loss
        let dz = if y { -pos_weight * (1.0 - sigmoid(z)) } else { sigmoid(z) };
        net.add_grad(&x, &act, dz, &mut grad);
    }
    let n = idx.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Some((loss / n, grad))
}

/// Masked mean cross-entropy and gradient for a batch of patches.
/// `Ok(None)` when every pixel is masked.
pub fn loss_and_grad(params: &ModelParams, batch: &SampleBatch) -> Result<Option<(f64, Vec<f64>)>> {
    let mut set = PixelSet::new(params.channels);
    set.push_batch(batch)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    Ok(loss_and_grad_flat(
        &params.to_flat(),
        params.channels,
        params.hidden_units(),
        &set,
        &idx,
        params.config.pos_weight,
    ))
}

/// Mean loss over a whole set, without the gradient.
fn mean_loss(theta: &[f64], channels: usize, hidden: usize, data: &PixelSet, pos_weight: f64) -> f64 {
    let net = Net::new(theta, channels, hidden);
    let mut x = vec![0.0; channels];
    let mut total = 0.0;
    for i in 0..data.len() {
        for (d, &s) in x.iter_mut().zip(data.row(i)) {
            *d = f64::from(s);
        }
        total += pixel_loss(net.logit(&x, None), data.y[i] != 0, pos_weight);
    }
    total / data.len() as f64
}

/// Epoch with the lowest loss, earliest on ties. `None` if empty or all NaN.
pub fn select_best_epoch(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in val_losses.iter().enumerate() {
        if l.is_finite() && best.is_none_or(|b| l < val_losses[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Zero-based index into `epochs` of the kept parameters.
    pub best_epoch: usize,
    pub n_train_pixels: usize,
    pub n_val_pixels: usize,
}

/// Trains on `train` pixels, keeping the parameters of the epoch with the
/// lowest validation loss.
pub fn train(train: &PixelSet, val: &PixelSet, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Domain("training and validation pixel sets must be non-empty".into()));
    }
    if train.channels != val.channels {
        return Err(Error::Shape("train and val channel counts differ".into()));
    }
    let mut params = ModelParams::init(train.channels, config);
    let (c, h) = (params.channels, params.hidden_units());
    let mut theta = params.to_flat();
    let streams = Streams::new(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog { n_train_pixels: train.len(), n_val_pixels: val.len(), ..TrainLog::default() };
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut streams.get(StreamKind::Shuffle, epoch as u32, 0));
        let mut train_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let (loss, grad) = loss_and_grad_flat(&theta, c, h, train, idx, config.pos_weight).expect("non-empty");
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= config.learning_rate * g;
            }
            if !loss.is_finite() || theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss {loss}, after {} logged epochs", log.epochs.len()),
                });
            }
            train_loss += loss * idx.len() as f64;
        }
        // Round to the stored precision so the kept parameters are exactly
        // the ones evaluated.
        params.set_flat(&theta)?;
        theta = params.to_flat();
        let val_loss = mean_loss(&theta, c, h, val, config.pos_weight);
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, detail: format!("validation loss {val_loss}") });
        }
        log.epochs.push(EpochLog { epoch, train_loss: train_loss / train.len() as f64, val_loss });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, theta.clone()));
        }
    }
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.val_loss).collect();
    log.best_epoch = select_best_epoch(&losses).expect("finite losses");
    params.set_flat(&best.expect("at least one epoch").1)?;
    Ok((params, log))
}

/// Hex SHA-256 over the given byte strings.
pub fn fingerprint(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-pixel probabilities for every pixel of a batch (valid or not).
pub fn predict_batch(params: &ModelParams, batch: &SampleBatch) -> Result<PredictionBatch> {
    if batch.channels != params.channels {
        return Err(Error::Shape(format!("shard has {} channels, model expects {}", batch.channels, params.channels)));
    }
    let theta = params.to_flat();
    let net = Net::new(&theta, params.channels, params.hidden_units());
    let plane = batch.plane();
    let mut preds = Vec::with_capacity(batch.len() * plane);
    let mut x = vec![0.0; params.channels];
    for i in 0..batch.len() {
        for px in 0..plane {
            for (k, d) in x.iter_mut().enumerate() {
                *d = f64::from(batch.input_plane(i, k)[px]);
            }
            preds.push(sigmoid(net.logit(&x, None)) as f32);
        }
    }
    Ok(PredictionBatch { patch: batch.patch, preds, meta: batch.meta.clone() })
}

/// Writes one prediction shard per input shard into `out_dir`, under the
/// input shard's file name.
pub fn predict_shards(params: &ModelParams, shards: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).io_context(|| format!("creating {}", out_dir.display()))?;
    let mut out = Vec::with_capacity(shards.len());
    for path in shards {
        let preds = predict_batch(params, &SampleBatch::read(path)?)?;
        let name = path.file_name().ok_or_else(|| Error::Domain(format!("{} is not a file path", path.display())))?;
        let dest = out_dir.join(name);
        preds.write(&dest)?;
        out.push(dest);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_half() {
        let p = ModelParams::init(8, &TrainConfig::default());
        assert_eq!(p.n_params(), 9);
        assert_eq!(p.forward(&[3.0, -1.0, 0.0, 2.0, 5.0, 1.0, 1.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = ModelParams::init(2, &TrainConfig::default());
        assert!(matches!(p.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(p.forward(&[1.0, f32::NAN]), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_round_trip_with_hidden_layer() {
        let cfg = TrainConfig { hidden_units: 3, ..TrainConfig::default() };
        let mut p = ModelParams::init(4, &cfg);
        assert_eq!(p.n_params(), 3 * 4 + 2 * 3 + 1);
        let theta: Vec<f64> = (0..p.n_params()).map(|i| i as f64 * 0.25).collect();
        p.set_flat(&theta).unwrap();
        assert_eq!(p.to_flat(), theta);
    }

    #[test]
    fn best_epoch_is_argmin_earliest() {
        assert_eq!(select_best_epoch(&[0.5, 0.3, 0.4]), Some(1));
        assert_eq!(select_best_epoch(&[0.3, 0.3]), Some(0));
        assert_eq!(select_best_epoch(&[]), None);
    }
}
