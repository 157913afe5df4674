//! Dense per-pixel grids and the prototype bank.
//!
//! Every grid is row-major by pixel, then by channel: the value for pixel
//! `(row, col)` and channel `k` lives at `((row * width) + col) * channels + k`.

use crate::error::{Error, Result};

/// Mask value reserved for anomalous pixels.
pub const ANOMALY_ID: u8 = 255;

fn check_len(what: &str, got: usize, height: usize, width: usize, channels: usize) -> Result<()> {
    let want = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::InvalidInput(format!("{what}: grid size overflows")))?;
    if got != want {
        return Err(Error::InvalidInput(format!(
            "{what}: data length {got} != {height}x{width}x{channels} = {want}"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}: value {} at index {i}", data[i]))),
        None => Ok(()),
    }
}

/// Per-pixel feature vectors of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("feature map: dim must be positive".into()));
        }
        check_len("feature map", data.len(), height, width, dim)?;
        check_finite("feature map", &data)?;
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Feature vector of a pixel by flat index.
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter_pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

/// Per-pixel class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "score map: need at least 2 classes, got {classes}"
            )));
        }
        check_len("score map", data.len(), height, width, classes)?;
        check_finite("score map", &data)?;
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.classes..(index + 1) * self.classes]
    }

    pub fn iter_pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.classes)
    }

    /// Argmax class per pixel, ties to the lowest class id.
    pub fn predict(&self) -> LabelMask {
        let labels = self
            .iter_pixels()
            .map(|s| crate::numeric::argmax_unchecked(s) as u8)
            .collect();
        LabelMask {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

/// Per-pixel anomaly scores; higher means more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AnomalyMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len("anomaly map", data.len(), height, width, 1)?;
        check_finite("anomaly map", &data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Per-pixel class labels; [`ANOMALY_ID`] marks anomalous pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        check_len("label mask", labels.len(), height, width, 1)?;
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn has_anomalies(&self) -> bool {
        self.labels.contains(&ANOMALY_ID)
    }

    /// Check that the mask is usable as a training target for `classes` classes.
    pub fn validate_training(&self, classes: usize) -> Result<()> {
        for (i, &l) in self.labels.iter().enumerate() {
            if l == ANOMALY_ID {
                return Err(Error::InvalidInput(format!(
                    "training mask contains anomaly label at pixel {i}"
                )));
            }
            if l as usize >= classes {
                return Err(Error::InvalidInput(format!(
                    "label {l} at pixel {i} out of range for {classes} classes"
                )));
            }
        }
        Ok(())
    }

    /// Check that every non-anomaly label is below `classes`.
    pub fn validate_eval(&self, classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .position(|&l| l != ANOMALY_ID && l as usize >= classes)
        {
            Some(i) => Err(Error::InvalidInput(format!(
                "label {} at pixel {i} out of range for {classes} classes",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Cosine,
    Linear,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Cosine => "cosine",
            HeadKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(HeadKind::Cosine),
            "linear" => Ok(HeadKind::Linear),
            other => Err(Error::Usage(format!("unknown head `{other}`"))),
        }
    }
}

/// Class prototypes `w_c` (one row per class), with a bias only for the linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl PrototypeBank {
    pub fn cosine(classes: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let bank = Self::build(classes, dim, weights, None)?;
        for c in 0..classes {
            let norm = crate::classifier::norm(bank.prototype(c));
            if !(norm > 0.0) {
                return Err(Error::InvalidModel(format!("prototype {c} has zero norm")));
            }
        }
        Ok(bank)
    }

    pub fn linear(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != classes {
            return Err(Error::InvalidModel(format!(
                "bias length {} != classes {classes}",
                bias.len()
            )));
        }
        check_finite("bias", &bias)?;
        Self::build(classes, dim, weights, Some(bias))
    }

    fn build(classes: usize, dim: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidModel(format!("need at least 2 classes, got {classes}")));
        }
        if classes > ANOMALY_ID as usize {
            return Err(Error::InvalidModel(format!(
                "at most {} classes fit in a mask, got {classes}",
                ANOMALY_ID
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be positive".into()));
        }
        if weights.len() != classes * dim {
            return Err(Error::InvalidModel(format!(
                "weight length {} != {classes}x{dim}",
                weights.len()
            )));
        }
        check_finite("weights", &weights)?;
        Ok(Self {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn head_kind(&self) -> HeadKind {
        if self.bias.is_some() {
            HeadKind::Linear
        } else {
            HeadKind::Cosine
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn prototype(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], Option<&mut [f64]>) {
        (&mut self.weights, self.bias.as_deref_mut())
    }
}

/// One image worth of features with its ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub features: FeatureMap,
    pub labels: LabelMask,
}

impl Scene {
    pub fn new(features: FeatureMap, labels: LabelMask) -> Result<Self> {
        if features.height() != labels.height() || features.width() != labels.width() {
            return Err(Error::InvalidInput(format!(
                "feature map {}x{} does not match mask {}x{}",
                features.height(),
                features.width(),
                labels.height(),
                labels.width()
            )));
        }
        Ok(Self { features, labels })
    }
}
