//! In-memory pipeline steps shared by the subcommands.

use crate::anomaly::Scorer;
use crate::classifier::{self, Model};
use crate::error::{Error, Result};
use crate::grid::{AnomalyMap, HeadKind, Scene};
use crate::metrics::{self, IoUReport, IouCounter};

use super::report::EvalRow;

/// Temperature a scorer runs at: MSP defaults to 1, cosine-softmax to the
/// model's training temperature.
pub fn scorer_temperature(scorer: Scorer, model: &Model, override_tau: Option<f64>) -> f64 {
    override_tau.unwrap_or(match scorer {
        Scorer::CosineSoftmax => model.temperature,
        _ => 1.0,
    })
}

pub fn check_compatible(scorer: Scorer, head: HeadKind) -> Result<()> {
    if scorer.needs_cosine() && head != HeadKind::Cosine {
        return Err(Error::Usage(format!(
            "scorer `{}` needs cosine scores bounded in [-1, 1], but the model has a {} head",
            scorer.name(),
            head.name()
        )));
    }
    Ok(())
}

pub fn score_scenes(
    scenes: &[Scene],
    model: &Model,
    scorer: Scorer,
    override_tau: Option<f64>,
) -> Result<Vec<AnomalyMap>> {
    check_compatible(scorer, model.bank.head_kind())?;
    let tau = scorer_temperature(scorer, model, override_tau);
    scenes
        .iter()
        .map(|s| scorer.apply(&classifier::scores(&s.features, &model.bank)?, tau))
        .collect()
}

pub fn evaluate_maps(maps: &[AnomalyMap], scenes: &[Scene]) -> Result<metrics::EvalReport> {
    if maps.len() != scenes.len() {
        return Err(Error::InvalidInput(format!(
            "{} score maps for {} eval scenes",
            maps.len(),
            scenes.len()
        )));
    }
    metrics::evaluate_pooled(maps.iter().zip(scenes.iter().map(|s| &s.labels)))
}

/// The four scorer variants: MSP and raw logits on the linear head,
/// cosine-softmax and PAnS on the cosine head.
pub fn ablate(scenes: &[Scene], cosine: &Model, linear: &Model) -> Result<Vec<EvalRow>> {
    if cosine.bank.head_kind() != HeadKind::Cosine {
        return Err(Error::Usage("the cosine model argument holds a linear head".into()));
    }
    if linear.bank.head_kind() != HeadKind::Linear {
        return Err(Error::Usage("the linear model argument holds a cosine head".into()));
    }
    let runs = [
        (Scorer::Msp, linear),
        (Scorer::Raw, linear),
        (Scorer::CosineSoftmax, cosine),
        (Scorer::Pans, cosine),
    ];
    runs.into_iter()
        .map(|(scorer, model)| {
            let maps = score_scenes(scenes, model, scorer, None)?;
            Ok(EvalRow {
                method: scorer.name().to_string(),
                head: model.bank.head_kind().name().to_string(),
                report: evaluate_maps(&maps, scenes)?,
            })
        })
        .collect()
}

/// Argmax segmentation quality over the scenes: IoU report and pixel accuracy.
pub fn segmentation(scenes: &[Scene], model: &Model) -> Result<(IoUReport, f64)> {
    let mut counter = IouCounter::new(model.bank.classes());
    let (mut correct, mut total) = (0.0, 0usize);
    for s in scenes {
        let pred = classifier::scores(&s.features, &model.bank)?.predict();
        counter.add(&pred, &s.labels)?;
        let known = s.labels.labels().iter().filter(|&&l| l != crate::grid::ANOMALY_ID).count();
        if known > 0 {
            correct += metrics::pixel_accuracy(&pred, &s.labels)? * known as f64;
            total += known;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("no known-class pixels".into()));
    }
    Ok((counter.report()?, correct / total as f64))
}
