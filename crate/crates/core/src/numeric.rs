//! Shared numeric helpers: temperature softmax and deterministic argmax.

use crate::error::{Error, Result};

/// Softmax of `temperature * scores`, computed with max-subtraction.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be a positive finite number, got {temperature}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, temperature, &mut out);
    Ok(out)
}

/// Unchecked softmax kernel used on hot paths; inputs are validated upstream.
pub(crate) fn softmax_into(scores: &[f64], temperature: f64, out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (temperature * (s - max)).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `ln Σ exp(temperature * s)` with max-subtraction.
pub(crate) fn log_sum_exp(scores: &[f64], temperature: f64) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|&s| (temperature * (s - max)).exp()).sum();
    temperature * max + sum.ln()
}

/// Index of the maximum entry; ties go to the lowest index.
pub fn argmax_class(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("argmax of an empty vector".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    Ok(argmax_unchecked(scores))
}

pub(crate) fn argmax_unchecked(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
