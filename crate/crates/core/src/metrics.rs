//! Pixel-level anomaly detection metrics and segmentation IoU.
//!
//! Anomaly pixels (mask value [`ANOMALY_ID`]) are the positives, every other
//! pixel is a negative. All curves are swept over distinct score values in
//! descending order, with equal scores collapsed into one threshold step.
//! Multiple scenes are pooled into a single global curve.

use crate::error::{Error, Result};
use crate::grid::{AnomalyMap, LabelMask, ANOMALY_ID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Cumulative `(true positives, false positives)` after each tie group.
struct Sweep {
    steps: Vec<(usize, usize)>,
    positives: usize,
    negatives: usize,
}

impl Sweep {
    fn new(scores: &[f64], positive: &[bool]) -> Result<Self> {
        if scores.len() != positive.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                positive.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("anomaly score {bad}")));
        }
        let positives = positive.iter().filter(|&&p| p).count();
        let negatives = positive.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::UndefinedMetric(format!(
                "need both anomaly and normal pixels, got {positives} positives and {negatives} negatives"
            )));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

        let mut steps = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let level = scores[order[i]];
            while i < order.len() && scores[order[i]] == level {
                if positive[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            steps.push((tp, fp));
        }
        Ok(Self {
            steps,
            positives,
            negatives,
        })
    }

    /// Trapezoidal area under TPR(FPR).
    fn auroc(&self) -> f64 {
        let (p, n) = (self.positives as f64, self.negatives as f64);
        let mut area = 0.0;
        let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
        for &(tp, fp) in &self.steps {
            area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64;
            prev_tp = tp;
            prev_fp = fp;
        }
        area / (2.0 * p * n)
    }

    /// Step-wise average precision `Σ (R_k - R_{k-1}) P_k`.
    fn aupr(&self) -> f64 {
        let mut ap = 0.0;
        let mut prev_tp = 0usize;
        for &(tp, fp) in &self.steps {
            if tp > prev_tp {
                ap += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
            }
            prev_tp = tp;
        }
        ap / self.positives as f64
    }

    /// FPR at the first step whose TPR reaches 95%.
    fn fpr95(&self) -> f64 {
        let (_, fp) = self
            .steps
            .iter()
            .copied()
            .find(|&(tp, _)| reaches_95(tp, self.positives))
            .expect("the last step has TPR 1");
        fp as f64 / self.negatives as f64
    }

    fn report(&self) -> EvalReport {
        EvalReport {
            auroc: self.auroc(),
            aupr: self.aupr(),
            fpr95: self.fpr95(),
            positives: self.positives,
            negatives: self.negatives,
        }
    }
}

/// `tp / positives >= 0.95`, in exact integer arithmetic.
pub(crate) fn reaches_95(tp: usize, positives: usize) -> bool {
    tp * 100 >= positives * 95
}

fn flatten(anomaly: &AnomalyMap, mask: &LabelMask) -> Result<Vec<bool>> {
    if anomaly.height() != mask.height() || anomaly.width() != mask.width() {
        return Err(Error::InvalidInput(format!(
            "anomaly map {}x{} does not match mask {}x{}",
            anomaly.height(),
            anomaly.width(),
            mask.height(),
            mask.width()
        )));
    }
    Ok(mask.labels().iter().map(|&l| l == ANOMALY_ID).collect())
}

pub fn auroc(anomaly: &AnomalyMap, mask: &LabelMask) -> Result<f64> {
    Ok(Sweep::new(anomaly.data(), &flatten(anomaly, mask)?)?.auroc())
}

pub fn aupr(anomaly: &AnomalyMap, mask: &LabelMask) -> Result<f64> {
    Ok(Sweep::new(anomaly.data(), &flatten(anomaly, mask)?)?.aupr())
}

pub fn fpr95(anomaly: &AnomalyMap, mask: &LabelMask) -> Result<f64> {
    Ok(Sweep::new(anomaly.data(), &flatten(anomaly, mask)?)?.fpr95())
}

/// All three anomaly metrics from one sort.
pub fn evaluate(anomaly: &AnomalyMap, mask: &LabelMask) -> Result<EvalReport> {
    evaluate_pixels(anomaly.data(), &flatten(anomaly, mask)?)
}

/// Metrics over raw score/label slices (`true` = anomaly).
pub fn evaluate_pixels(scores: &[f64], positive: &[bool]) -> Result<EvalReport> {
    Ok(Sweep::new(scores, positive)?.report())
}

/// Metrics over several scenes pooled into one curve.
pub fn evaluate_pooled<'a>(
    scenes: impl IntoIterator<Item = (&'a AnomalyMap, &'a LabelMask)>,
) -> Result<EvalReport> {
    let mut scores = Vec::new();
    let mut positive = Vec::new();
    for (anomaly, mask) in scenes {
        positive.extend(flatten(anomaly, mask)?);
        scores.extend_from_slice(anomaly.data());
    }
    evaluate_pixels(&scores, &positive)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    /// `None` where the class appears in neither prediction nor truth.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean over the classes with a defined IoU.
    pub miou: f64,
    /// Ground-truth pixel count per class.
    pub per_class_support: Vec<usize>,
}

/// Accumulates intersection/union counts over many scenes.
#[derive(Debug, Clone)]
pub struct IouCounter {
    intersection: Vec<usize>,
    union: Vec<usize>,
    support: Vec<usize>,
}

impl IouCounter {
    pub fn new(classes: usize) -> Self {
        Self {
            intersection: vec![0; classes],
            union: vec![0; classes],
            support: vec![0; classes],
        }
    }

    pub fn add(&mut self, predictions: &LabelMask, truth: &LabelMask) -> Result<()> {
        if predictions.height() != truth.height() || predictions.width() != truth.width() {
            return Err(Error::InvalidInput(format!(
                "prediction {}x{} does not match truth {}x{}",
                predictions.height(),
                predictions.width(),
                truth.height(),
                truth.width()
            )));
        }
        let classes = self.union.len();
        for (&p, &t) in predictions.labels().iter().zip(truth.labels()) {
            if t == ANOMALY_ID {
                continue;
            }
            let (p, t) = (p as usize, t as usize);
            if t < classes {
                self.support[t] += 1;
                self.union[t] += 1;
            }
            if p == t {
                if t < classes {
                    self.intersection[t] += 1;
                }
            } else if p < classes {
                self.union[p] += 1;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> Result<IoUReport> {
        let per_class_iou: Vec<Option<f64>> = self
            .intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect();
        let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(Error::UndefinedMetric("no class has a non-empty union".into()));
        }
        Ok(IoUReport {
            miou: defined.iter().sum::<f64>() / defined.len() as f64,
            per_class_iou,
            per_class_support: self.support.clone(),
        })
    }
}

/// Per-class IoU with anomaly pixels in `truth` excluded from every count.
pub fn iou(predictions: &LabelMask, truth: &LabelMask, classes: usize) -> Result<IoUReport> {
    let mut counter = IouCounter::new(classes);
    counter.add(predictions, truth)?;
    counter.report()
}

/// Fraction of non-anomaly truth pixels predicted correctly.
pub fn pixel_accuracy(predictions: &LabelMask, truth: &LabelMask) -> Result<f64> {
    if predictions.pixels() != truth.pixels() {
        return Err(Error::InvalidInput("prediction and truth sizes differ".into()));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (&p, &t) in predictions.labels().iter().zip(truth.labels()) {
        if t != ANOMALY_ID {
            total += 1;
            correct += usize::from(p == t);
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("no known-class pixels".into()));
    }
    Ok(correct as f64 / total as f64)
}
