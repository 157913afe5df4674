//! Brute-force reference implementations, independent of the library's
//! sort-and-sweep code paths.
#![allow(dead_code)]

/// Probability a random positive outranks a random negative, ties counting 1/2.
pub fn auroc_pairwise(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// `(tp, fp)` when every pixel with score >= `threshold` is flagged.
fn counts_at(scores: &[f64], positive: &[bool], threshold: f64) -> (usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    for (s, &p) in scores.iter().zip(positive) {
        if *s >= threshold {
            if p {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

fn thresholds_descending(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// Average precision by enumerating every distinct threshold.
pub fn aupr_enumerated(scores: &[f64], positive: &[bool]) -> f64 {
    let total_pos = positive.iter().filter(|&&p| p).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds_descending(scores) {
        let (tp, fp) = counts_at(scores, positive, t);
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Smallest FPR over all thresholds whose TPR is at least 0.95.
pub fn fpr95_enumerated(scores: &[f64], positive: &[bool]) -> f64 {
    let total_pos = positive.iter().filter(|&&p| p).count();
    let total_neg = positive.len() - total_pos;
    thresholds_descending(scores)
        .into_iter()
        .map(|t| counts_at(scores, positive, t))
        .filter(|&(tp, _)| 20 * tp >= 19 * total_pos)
        .map(|(_, fp)| fp as f64 / total_neg as f64)
        .fold(f64::INFINITY, f64::min)
}

use astro_float::{BigFloat, Consts, RoundingMode};

const PREC: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(v: f64) -> BigFloat {
    BigFloat::from_f64(v, PREC)
}

/// Mean cosine cross-entropy evaluated in extended precision. `features` is
/// row-major `pixels x dim`, `weights` row-major `classes x dim`.
fn cosine_ce_big(
    features: &[Vec<BigFloat>],
    feature_norms: &[BigFloat],
    labels: &[u8],
    weights: &[BigFloat],
    classes: usize,
    tau: &BigFloat,
    cc: &mut Consts,
) -> BigFloat {
    let dim = weights.len() / classes;
    let dot = |a: &[BigFloat], b: &[BigFloat]| {
        a.iter().zip(b).fold(big(0.0), |acc, (x, y)| acc.add(&x.mul(y, PREC, RM), PREC, RM))
    };
    let rows: Vec<&[BigFloat]> = weights.chunks(dim).collect();
    let norms: Vec<BigFloat> = rows.iter().map(|r| dot(r, r).sqrt(PREC, RM)).collect();
    let mut total = big(0.0);
    for ((f, fnorm), &y) in features.iter().zip(feature_norms).zip(labels) {
        let logits: Vec<BigFloat> = rows
            .iter()
            .zip(&norms)
            .map(|(r, n)| tau.mul(&dot(f, r).div(&fnorm.mul(n, PREC, RM), PREC, RM), PREC, RM))
            .collect();
        let sum = logits.iter().fold(big(0.0), |acc, l| acc.add(&l.exp(PREC, RM, cc), PREC, RM));
        total = total.add(&sum.ln(PREC, RM, cc).sub(&logits[y as usize], PREC, RM), PREC, RM);
    }
    total.div(&BigFloat::from_word(labels.len() as u64, PREC), PREC, RM)
}

/// Central-difference gradient of the mean cosine cross-entropy with respect
/// to the prototypes. Loss, perturbation and quotient are all carried out in
/// extended precision so the only error left is the O(h^2) truncation term.
pub fn cosine_ce_central_difference(
    features: &[f64],
    dim: usize,
    labels: &[u8],
    weights: &[f64],
    classes: usize,
    tau: f64,
    h: f64,
) -> Vec<f64> {
    let mut cc = Consts::new().expect("constants cache");
    let feats: Vec<Vec<BigFloat>> = features.chunks(dim).map(|p| p.iter().map(|&v| big(v)).collect()).collect();
    let fnorms: Vec<BigFloat> = feats
        .iter()
        .map(|f| f.iter().fold(big(0.0), |acc, x| acc.add(&x.mul(x, PREC, RM), PREC, RM)).sqrt(PREC, RM))
        .collect();
    let w: Vec<BigFloat> = weights.iter().map(|&v| big(v)).collect();
    let (bh, btau) = (big(h), big(tau));
    let two_h = bh.add(&bh, PREC, RM);
    (0..w.len())
        .map(|j| {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[j] = up[j].add(&bh, PREC, RM);
            dn[j] = dn[j].sub(&bh, PREC, RM);
            let lu = cosine_ce_big(&feats, &fnorms, labels, &up, classes, &btau, &mut cc);
            let ld = cosine_ce_big(&feats, &fnorms, labels, &dn, classes, &btau, &mut cc);
            let q = lu.sub(&ld, PREC, RM).div(&two_h, PREC, RM);
            q.to_string().parse::<f64>().expect("decimal rendering of a finite value")
        })
        .collect()
}
