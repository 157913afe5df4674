//! Cosine and linear classification heads, the temperature-scaled
//! cross-entropy objective, its analytic gradients, and a full-batch
//! gradient-descent trainer for the head parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{FeatureMap, HeadKind, LabelMask, PrototypeBank, Scene, ScoreMap};
use crate::numeric::{argmax_unchecked, log_sum_exp, softmax_into};

/// Feature vectors with a norm below this score 0 against every prototype.
pub const FEATURE_NORM_EPS: f64 = 1e-12;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(features: &FeatureMap, bank: &PrototypeBank) -> Result<()> {
    if features.dim() != bank.dim() {
        return Err(Error::InvalidInput(format!(
            "feature dim {} != prototype dim {}",
            features.dim(),
            bank.dim()
        )));
    }
    Ok(())
}

fn check_head(bank: &PrototypeBank, want: HeadKind) -> Result<()> {
    if bank.head_kind() != want {
        return Err(Error::InvalidModel(format!(
            "expected a {} head, got {}",
            want.name(),
            bank.head_kind().name()
        )));
    }
    Ok(())
}

/// Row-wise unit prototypes and their original norms.
fn unit_prototypes(bank: &PrototypeBank) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = bank.dim();
    let mut unit = Vec::with_capacity(bank.weights().len());
    let mut norms = Vec::with_capacity(bank.classes());
    for c in 0..bank.classes() {
        let w = bank.prototype(c);
        let n = norm(w);
        if !(n > 0.0) {
            return Err(Error::InvalidModel(format!("prototype {c} has zero norm")));
        }
        unit.extend(w.iter().map(|v| v / n));
        norms.push(n);
    }
    debug_assert_eq!(unit.len(), bank.classes() * d);
    Ok((unit, norms))
}

/// Cosine scores of one pixel against unit prototypes; returns the feature norm.
fn cosine_pixel(f: &[f64], unit: &[f64], out: &mut [f64]) -> f64 {
    let nf = norm(f);
    if nf < FEATURE_NORM_EPS {
        out.fill(0.0);
        return nf;
    }
    for (o, w) in out.iter_mut().zip(unit.chunks_exact(f.len())) {
        *o = (dot(f, w) / nf).clamp(-1.0, 1.0);
    }
    nf
}

fn linear_pixel(f: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    for ((o, w), b) in out.iter_mut().zip(weights.chunks_exact(f.len())).zip(bias) {
        *o = dot(f, w) + b;
    }
}

/// Cosine similarity between every pixel feature and every prototype.
pub fn cosine_scores(features: &FeatureMap, bank: &PrototypeBank) -> Result<ScoreMap> {
    check_head(bank, HeadKind::Cosine)?;
    check_dims(features, bank)?;
    let (unit, _) = unit_prototypes(bank)?;
    let c = bank.classes();
    let mut data = vec![0.0; features.pixels() * c];
    for (f, out) in features.iter_pixels().zip(data.chunks_exact_mut(c)) {
        cosine_pixel(f, &unit, out);
    }
    ScoreMap::new(features.height(), features.width(), c, data)
}

/// Affine logits `f · w_c + b_c` of the linear head.
pub fn linear_scores(features: &FeatureMap, bank: &PrototypeBank) -> Result<ScoreMap> {
    check_head(bank, HeadKind::Linear)?;
    check_dims(features, bank)?;
    let c = bank.classes();
    let bias = bank.bias().expect("linear head has a bias");
    let mut data = vec![0.0; features.pixels() * c];
    for (f, out) in features.iter_pixels().zip(data.chunks_exact_mut(c)) {
        linear_pixel(f, bank.weights(), bias, out);
    }
    ScoreMap::new(features.height(), features.width(), c, data)
}

/// Class scores from whichever head the bank carries.
pub fn scores(features: &FeatureMap, bank: &PrototypeBank) -> Result<ScoreMap> {
    match bank.head_kind() {
        HeadKind::Cosine => cosine_scores(features, bank),
        HeadKind::Linear => linear_scores(features, bank),
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

fn check_mask(labels: &LabelMask, height: usize, width: usize, classes: usize) -> Result<()> {
    if labels.height() != height || labels.width() != width {
        return Err(Error::InvalidInput(format!(
            "mask {}x{} does not match grid {height}x{width}",
            labels.height(),
            labels.width()
        )));
    }
    labels.validate_training(classes)
}

/// Mean over pixels of `-log softmax(τ s_i)[y_i]`.
pub fn cross_entropy_loss(scores: &ScoreMap, labels: &LabelMask, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    check_mask(labels, scores.height(), scores.width(), scores.classes())?;
    let n = scores.pixels();
    if n == 0 {
        return Err(Error::InvalidInput("loss over an empty grid".into()));
    }
    let total: f64 = scores
        .iter_pixels()
        .zip(labels.labels())
        .map(|(s, &y)| log_sum_exp(s, temperature) - temperature * s[y as usize])
        .sum();
    Ok(total / n as f64)
}

/// Gradient of the cross-entropy loss with respect to every prototype of a
/// cosine head, as a row-major `classes x dim` matrix.
pub fn loss_gradient(
    features: &FeatureMap,
    bank: &PrototypeBank,
    labels: &LabelMask,
    temperature: f64,
) -> Result<Vec<f64>> {
    check_head(bank, HeadKind::Cosine)?;
    let scene = Scene::new(features.clone(), labels.clone())?;
    let obj = objective(std::slice::from_ref(&scene), bank, temperature)?;
    Ok(obj.grad_weights)
}

/// Gradients of the (untempered) cross-entropy of a linear head: weights then bias.
pub fn linear_loss_gradient(
    features: &FeatureMap,
    bank: &PrototypeBank,
    labels: &LabelMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_head(bank, HeadKind::Linear)?;
    let scene = Scene::new(features.clone(), labels.clone())?;
    let obj = objective(std::slice::from_ref(&scene), bank, 1.0)?;
    Ok((obj.grad_weights, obj.grad_bias.expect("linear head has a bias gradient")))
}

/// Loss, accuracy and gradients over a batch of scenes, pooled over all pixels.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub loss: f64,
    pub accuracy: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Option<Vec<f64>>,
}

pub(crate) fn objective(scenes: &[Scene], bank: &PrototypeBank, temperature: f64) -> Result<Objective> {
    check_temperature(temperature)?;
    let c = bank.classes();
    let d = bank.dim();
    let mut pixels = 0usize;
    for scene in scenes {
        check_dims(&scene.features, bank)?;
        check_mask(&scene.labels, scene.features.height(), scene.features.width(), c)?;
        pixels += scene.features.pixels();
    }
    if pixels == 0 {
        return Err(Error::InvalidInput("objective over zero pixels".into()));
    }

    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut s = vec![0.0; c];
    let mut p = vec![0.0; c];
    // Accumulators; summation order is fixed by scene then pixel order.
    let mut acc_dir = vec![0.0; c * d];
    let mut acc_scalar = vec![0.0; c];

    match bank.head_kind() {
        HeadKind::Cosine => {
            let (unit, norms) = unit_prototypes(bank)?;
            for scene in scenes {
                for (f, &y) in scene.features.iter_pixels().zip(scene.labels.labels()) {
                    let y = y as usize;
                    let nf = cosine_pixel(f, &unit, &mut s);
                    loss += log_sum_exp(&s, temperature) - temperature * s[y];
                    correct += usize::from(argmax_unchecked(&s) == y);
                    if nf < FEATURE_NORM_EPS {
                        continue;
                    }
                    softmax_into(&s, temperature, &mut p);
                    for k in 0..c {
                        let g = temperature * (p[k] - f64::from(u8::from(k == y)));
                        acc_scalar[k] += g * s[k];
                        let row = &mut acc_dir[k * d..(k + 1) * d];
                        let scale = g / nf;
                        for (a, v) in row.iter_mut().zip(f) {
                            *a += scale * v;
                        }
                    }
                }
            }
            // d s / d w = f̂ / |w| - s w / |w|²
            let mut grad = vec![0.0; c * d];
            for k in 0..c {
                let w = bank.prototype(k);
                let nw = norms[k];
                for j in 0..d {
                    grad[k * d + j] =
                        (acc_dir[k * d + j] / nw - acc_scalar[k] * w[j] / (nw * nw)) / pixels as f64;
                }
            }
            Ok(Objective {
                loss: loss / pixels as f64,
                accuracy: correct as f64 / pixels as f64,
                grad_weights: grad,
                grad_bias: None,
            })
        }
        HeadKind::Linear => {
            let bias = bank.bias().expect("linear head has a bias");
            for scene in scenes {
                for (f, &y) in scene.features.iter_pixels().zip(scene.labels.labels()) {
                    let y = y as usize;
                    linear_pixel(f, bank.weights(), bias, &mut s);
                    loss += log_sum_exp(&s, temperature) - temperature * s[y];
                    correct += usize::from(argmax_unchecked(&s) == y);
                    softmax_into(&s, temperature, &mut p);
                    for k in 0..c {
                        let g = temperature * (p[k] - f64::from(u8::from(k == y)));
                        acc_scalar[k] += g;
                        for (a, v) in acc_dir[k * d..(k + 1) * d].iter_mut().zip(f) {
                            *a += g * v;
                        }
                    }
                }
            }
            let n = pixels as f64;
            Ok(Objective {
                loss: loss / n,
                accuracy: correct as f64 / n,
                grad_weights: acc_dir.into_iter().map(|v| v / n).collect(),
                grad_bias: Some(acc_scalar.into_iter().map(|v| v / n).collect()),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrototypeInit {
    /// Seeded standard-normal rows, normalized.
    RandomNormal,
    /// Normalized mean training feature of each class.
    ClassMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// `lr * (1 - t / epochs)^power`
    Polynomial { power: f64 },
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub init: PrototypeInit,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub l2_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            init: PrototypeInit::RandomNormal,
            temperature: 10.0,
            learning_rate: 0.1,
            epochs: 200,
            schedule: LrSchedule::Polynomial { power: 0.9 },
            seed: 0,
            l2_weight: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_weight >= 0.0) || !self.l2_weight.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "l2 weight must be non-negative, got {}",
                self.l2_weight
            )));
        }
        if let LrSchedule::Polynomial { power } = self.schedule {
            if !(power >= 0.0) || !power.is_finite() {
                return Err(Error::InvalidConfig(format!("lr power must be non-negative, got {power}")));
            }
        }
        Ok(())
    }

    /// Learning rate used at zero-based epoch `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Polynomial { power } => {
                self.learning_rate * (1.0 - t as f64 / self.epochs as f64).powf(power)
            }
        }
    }
}

/// A trained head together with the temperature its softmax was trained at.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub bank: PrototypeBank,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Cross-entropy at the start of each epoch (before that epoch's update).
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub model: Model,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one epoch")
    }

    pub fn final_accuracy(&self) -> f64 {
        *self.accuracies.last().expect("at least one epoch")
    }
}

/// RNG stream for prototype initialization, disjoint from the synth streams.
const INIT_STREAM: u64 = 4 << 32;

/// Seeded standard-normal rows normalized to unit length.
pub fn init_prototypes(classes: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut w: Vec<f64> = (0..classes * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    for row in w.chunks_exact_mut(dim) {
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row[0] = 1.0;
        }
    }
    w
}

/// Normalized per-class mean feature; classes without pixels fall back to a
/// seeded random row.
pub fn class_mean_prototypes(scenes: &[Scene], classes: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; classes * dim];
    for scene in scenes {
        check_mask(&scene.labels, scene.features.height(), scene.features.width(), classes)?;
        if scene.features.dim() != dim {
            return Err(Error::InvalidInput(format!("feature dim {} != {dim}", scene.features.dim())));
        }
        for (f, &y) in scene.features.iter_pixels().zip(scene.labels.labels()) {
            let y = y as usize;
            sums[y * dim..(y + 1) * dim].iter_mut().zip(f).for_each(|(a, v)| *a += v);
        }
    }
    let fallback = init_prototypes(classes, dim, seed);
    for (c, row) in sums.chunks_exact_mut(dim).enumerate() {
        let n = norm(row);
        if n > FEATURE_NORM_EPS {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row.copy_from_slice(&fallback[c * dim..(c + 1) * dim]);
        }
    }
    Ok(sums)
}

/// Full-batch gradient descent on the head parameters.
///
/// The cosine head optimizes the loss at `config.temperature`; the linear head
/// feeds its logits to the softmax unscaled and its model records temperature 1.
pub fn train(scenes: &[Scene], classes: usize, head: HeadKind, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let dim = scenes
        .first()
        .map(|s| s.features.dim())
        .ok_or_else(|| Error::InvalidInput("no training scenes".into()))?;
    let weights = match config.init {
        PrototypeInit::RandomNormal => init_prototypes(classes, dim, config.seed),
        PrototypeInit::ClassMean => class_mean_prototypes(scenes, classes, dim, config.seed)?,
    };
    let (mut bank, temperature) = match head {
        HeadKind::Cosine => (PrototypeBank::cosine(classes, dim, weights)?, config.temperature),
        HeadKind::Linear => (PrototypeBank::linear(classes, dim, weights, vec![0.0; classes])?, 1.0),
    };

    let mut losses = Vec::with_capacity(config.epochs);
    let mut accuracies = Vec::with_capacity(config.epochs);
    for t in 0..config.epochs {
        let obj = objective(scenes, &bank, temperature)?;
        if !obj.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss diverged at epoch {t}")));
        }
        losses.push(obj.loss);
        accuracies.push(obj.accuracy);

        let lr = config.learning_rate_at(t);
        let (w, b) = bank.parts_mut();
        for (wi, gi) in w.iter_mut().zip(&obj.grad_weights) {
            *wi -= lr * (gi + config.l2_weight * *wi);
        }
        if let (Some(b), Some(gb)) = (b, obj.grad_bias.as_ref()) {
            for (bi, gi) in b.iter_mut().zip(gb) {
                *bi -= lr * gi;
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weights diverged at epoch {t}")));
        }
    }
    if head == HeadKind::Cosine {
        // re-validate: a prototype can only reach zero norm through heavy l2 decay
        bank = PrototypeBank::cosine(classes, dim, bank.weights().to_vec())?;
    }
    Ok(TrainReport {
        losses,
        accuracies,
        model: Model { bank, temperature },
    })
}
