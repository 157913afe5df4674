//! Per-pixel anomaly scores derived from class scores. Every scorer maps a
//! [`ScoreMap`] to an [`AnomalyMap`] where larger values mean "more anomalous".

use crate::error::{Error, Result};
use crate::grid::{AnomalyMap, ScoreMap};
use crate::numeric::softmax_into;

/// Cosine scores may exceed `[-1, 1]` by this much before being rejected.
pub const COSINE_RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    /// `1 - max softmax(τ s)`
    Msp,
    /// `-max s`
    Raw,
    /// MSP on cosine scores at the training temperature.
    CosineSoftmax,
    /// `1 - (max s + 1) / 2` on cosine scores.
    Pans,
}

impl Scorer {
    pub const ALL: [Scorer; 4] = [Scorer::Msp, Scorer::Raw, Scorer::CosineSoftmax, Scorer::Pans];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Msp => "msp",
            Scorer::Raw => "raw",
            Scorer::CosineSoftmax => "cosine-softmax",
            Scorer::Pans => "pans",
        }
    }

    /// Whether the scorer is only defined on bounded cosine scores.
    pub fn needs_cosine(self) -> bool {
        matches!(self, Scorer::CosineSoftmax | Scorer::Pans)
    }

    /// Apply the scorer; `temperature` is used by the softmax-based scorers only.
    pub fn apply(self, scores: &ScoreMap, temperature: f64) -> Result<AnomalyMap> {
        match self {
            Scorer::Msp => msp(scores, temperature),
            Scorer::Raw => raw_score(scores),
            Scorer::CosineSoftmax => cosine_softmax(scores, temperature),
            Scorer::Pans => pans(scores),
        }
    }
}

impl std::str::FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scorer::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown scorer `{s}`")))
    }
}

fn per_pixel(scores: &ScoreMap, f: impl FnMut(&[f64]) -> f64) -> Result<AnomalyMap> {
    let data = scores.iter_pixels().map(f).collect();
    AnomalyMap::new(scores.height(), scores.width(), data)
}

fn max_of(s: &[f64]) -> f64 {
    s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum softmax probability, inverted: `1 - max_c softmax(τ s_i)_c`.
pub fn msp(scores: &ScoreMap, temperature: f64) -> Result<AnomalyMap> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    // ScoreMap construction already rejects non-finite values.
    let upper = 1.0 - 1.0 / scores.classes() as f64;
    let mut p = vec![0.0; scores.classes()];
    per_pixel(scores, |s| {
        softmax_into(s, temperature, &mut p);
        (1.0 - max_of(&p)).clamp(0.0, upper)
    })
}

/// Negated maximum class score. Unbounded; only meaningful for ranking.
pub fn raw_score(scores: &ScoreMap) -> Result<AnomalyMap> {
    per_pixel(scores, |s| -max_of(s))
}

fn check_cosine_range(scores: &ScoreMap) -> Result<()> {
    match scores
        .data()
        .iter()
        .position(|v| v.abs() > 1.0 + COSINE_RANGE_TOL)
    {
        Some(i) => Err(Error::InvalidInput(format!(
            "score {} at index {i} is outside [-1, 1]; these scores do not come from a cosine head",
            scores.data()[i]
        ))),
        None => Ok(()),
    }
}

/// Softmax-based score on cosine similarities.
pub fn cosine_softmax(scores: &ScoreMap, temperature: f64) -> Result<AnomalyMap> {
    check_cosine_range(scores)?;
    if scores.data().iter().all(|v| v.abs() <= 1.0) {
        return msp(scores, temperature);
    }
    let clamped = scores.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    msp(&ScoreMap::new(scores.height(), scores.width(), scores.classes(), clamped)?, temperature)
}

/// Prototype score: one minus the largest rescaled similarity `(s + 1) / 2`.
pub fn pans(scores: &ScoreMap) -> Result<AnomalyMap> {
    check_cosine_range(scores)?;
    per_pixel(scores, |s| {
        let best = max_of(s).clamp(-1.0, 1.0);
        1.0 - (best + 1.0) / 2.0
    })
}
