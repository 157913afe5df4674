//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p pans --test acceptance -- --nocapture --test-threads 1`.

mod support;

use std::time::{Duration, Instant};

use pans::anomaly::{cosine_softmax, msp, pans as pans_score, raw_score};
use pans::classifier::{self, cosine_scores, loss_gradient};
use pans::cli::{self, format, pipeline};
use pans::metrics::{self, evaluate_pixels};
use pans::numeric::softmax;
use pans::synth::{self, AnomalyMode, SynthConfig};
use pans::{AnomalyMap, FeatureMap, HeadKind, LabelMask, Model, PrototypeBank, ScoreMap, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(id: &str, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] {id} {name}: {detail}");
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random scores with a controllable number of distinct levels, plus labels
/// guaranteed to contain both classes.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=1000);
    let levels = rng.random_range(1..=n);
    let pos_rate = rng.random_range(0.02..0.98);
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64 - 0.3)
        .collect();
    let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(pos_rate)).collect();
    positive[0] = true;
    positive[1] = false;
    (scores, positive)
}

#[test]
fn c1_metric_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (s, p) = random_instance(&mut rng);
        let r = evaluate_pixels(&s, &p).unwrap();
        worst = worst
            .max((r.auroc - support::auroc_pairwise(&s, &p)).abs())
            .max((r.aupr - support::aupr_enumerated(&s, &p)).abs())
            .max((r.fpr95 - support::fpr95_enumerated(&s, &p)).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-9 && elapsed < Duration::from_secs(30);
    verdict(
        "C1",
        "metric oracle equivalence",
        ok,
        &format!("200 instances, max |diff| {worst:.2e} (tol 1e-9), {elapsed:.2?} (limit 30s)"),
    );
    assert!(ok);
}

#[test]
fn c2_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for inst in 0..100 {
        let h = rng.random_range(1..=4);
        let w = rng.random_range(1..=4);
        let d = rng.random_range(1..=8);
        let c = rng.random_range(2..=5);
        let tau = if inst % 2 == 0 { 1.0 } else { 10.0 };
        let features = FeatureMap::new(h, w, d, gaussian(&mut rng, h * w * d)).unwrap();
        let labels = LabelMask::new(h, w, (0..h * w).map(|_| rng.random_range(0..c) as u8).collect()).unwrap();
        let weights = gaussian(&mut rng, c * d);
        let bank = PrototypeBank::cosine(c, d, weights.clone()).unwrap();
        let analytic = loss_gradient(&features, &bank, &labels, tau).unwrap();
        let numeric =
            support::cosine_ce_central_difference(features.data(), d, labels.labels(), &weights, c, tau, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            if a.abs() > 1e-8 {
                checked += 1;
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-4 && elapsed < Duration::from_secs(10);
    verdict(
        "C2",
        "gradient correctness",
        ok,
        &format!("{checked} entries, max rel err {worst:.2e} (tol 1e-4), {elapsed:.2?} (limit 10s)"),
    );
    assert!(ok);
}

#[test]
fn c3_bound_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0usize;
    let mut pixels = 0usize;
    while pixels < 100_000 {
        let c = rng.random_range(2..=8);
        let d = rng.random_range(1..=8);
        let n = 100;
        let scale = [1e-6, 1.0, 1e6][rng.random_range(0..3)];
        let mut data: Vec<f64> = gaussian(&mut rng, n * d).into_iter().map(|v| v * scale).collect();
        // near-degenerate pixels: zero vectors and exact copies of a prototype
        data[..d].fill(0.0);
        let weights = gaussian(&mut rng, c * d);
        data[d..2 * d].copy_from_slice(&weights[..d]);
        let features = FeatureMap::new(1, n, d, data).unwrap();
        let bank = PrototypeBank::cosine(c, d, weights).unwrap();
        let scores = cosine_scores(&features, &bank).unwrap();
        let tau = [1.0, 10.0, 100.0][rng.random_range(0..3)];
        let upper = 1.0 - 1.0 / c as f64;

        violations += scores.data().iter().filter(|v| !(-1.0..=1.0).contains(*v)).count();
        violations += pans_score(&scores).unwrap().data().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        violations += msp(&scores, tau).unwrap().data().iter().filter(|v| !(0.0..=upper).contains(*v)).count();
        violations += cosine_softmax(&scores, tau)
            .unwrap()
            .data()
            .iter()
            .filter(|v| !(0.0..=upper).contains(*v))
            .count();
        for s in scores.iter_pixels() {
            let sum: f64 = softmax(s, tau).unwrap().iter().sum();
            violations += usize::from((sum - 1.0).abs() > 1e-12);
        }
        // unbounded logits through msp as well
        let logits = ScoreMap::new(1, n, c, gaussian(&mut rng, n * c).into_iter().map(|v| v * 50.0).collect()).unwrap();
        violations += msp(&logits, 1.0).unwrap().data().iter().filter(|v| !(0.0..=upper).contains(*v)).count();
        pixels += n;
    }
    let ok = violations == 0;
    verdict("C3", "bound invariants", ok, &format!("{pixels} pixels fuzzed, {violations} violations"));
    assert!(ok);
}

#[test]
fn c4_ranking_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(10..=500);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut p: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        p[0] = true;
        p[1] = false;
        let base = evaluate_pixels(&s, &p).unwrap();
        for f in [|x: f64| 2.0 * x + 1.0, f64::tanh] {
            let t: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            let r = evaluate_pixels(&t, &p).unwrap();
            worst = worst
                .max((r.auroc - base.auroc).abs())
                .max((r.aupr - base.aupr).abs())
                .max((r.fpr95 - base.fpr95).abs());
        }
    }

    let mut order_mismatches = 0usize;
    for _ in 0..100 {
        let c = rng.random_range(2..=6);
        let (h, w) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let data: Vec<f64> = (0..h * w * c).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let scores = ScoreMap::new(h, w, c, data).unwrap();
        let a = pans_score(&scores).unwrap().into_data();
        let b = raw_score(&scores).unwrap().into_data();
        for i in 0..a.len() {
            for j in 0..a.len() {
                // strictly ordered by one must never be strictly reversed by the other
                if (a[i] < a[j] && b[i] > b[j]) || (a[i] > a[j] && b[i] < b[j]) {
                    order_mismatches += 1;
                }
            }
        }
    }
    let ok = worst <= 1e-12 && order_mismatches == 0;
    verdict(
        "C4",
        "ranking invariance",
        ok,
        &format!("max metric drift {worst:.2e} (tol 1e-12); pans vs -max cosine order mismatches {order_mismatches}"),
    );
    assert!(ok);
}

#[test]
fn c5_oracle_pipeline() {
    let config = SynthConfig { noise_std: 0.0, ..SynthConfig::default() };
    let bench = synth::generate(&config).unwrap();
    let model = Model { bank: bench.oracle_bank(), temperature: 10.0 };
    let (iou, accuracy) = pipeline::segmentation(&bench.eval, &model).unwrap();
    let maps = pipeline::score_scenes(&bench.eval, &model, pans::Scorer::Pans, None).unwrap();
    let r = pipeline::evaluate_maps(&maps, &bench.eval).unwrap();
    let ok = accuracy == 1.0 && iou.miou == 1.0 && r.auroc == 1.0 && r.fpr95 == 0.0;
    verdict(
        "C5",
        "oracle pipeline",
        ok,
        &format!("accuracy {accuracy}, mIoU {}, pans AUROC {}, FPR95 {}", iou.miou, r.auroc, r.fpr95),
    );
    assert!(ok);
}

#[test]
fn c6_trainer_convergence() {
    let bench = synth::generate(&SynthConfig::default()).unwrap();
    let start = Instant::now();
    let report = classifier::train(&bench.train, bench.classes, HeadKind::Cosine, &TrainConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let (acc, loss) = (report.final_accuracy(), report.final_loss());
    let ok = report.losses.len() == 200 && acc >= 0.99 && loss < 0.05 && elapsed < Duration::from_secs(120);
    verdict(
        "C6",
        "trainer convergence",
        ok,
        &format!("accuracy {acc:.5} (>= 0.99), loss {loss:.5} (< 0.05), {elapsed:.2?} (limit 120s)"),
    );
    assert!(ok);
}

// Frozen on the default uniform-sphere benchmark, seed 0, default TrainConfig.
const FROZEN_PANS_AUROC: f64 = 0.9181;
const FROZEN_COSINE_SOFTMAX_AUROC: f64 = 0.9826;
const FROZEN_PANS_FPR95: f64 = 0.3423;
const FROZEN_MSP_LINEAR_FPR95: f64 = 0.4986;
const FROZEN_TOL: f64 = 0.01;

#[test]
fn c7_directional_reproduction() {
    let config = SynthConfig { anomaly_mode: AnomalyMode::UniformSphere, ..SynthConfig::default() };
    let bench = synth::generate(&config).unwrap();
    let train = |head| classifier::train(&bench.train, bench.classes, head, &TrainConfig::default()).unwrap();
    let cosine = train(HeadKind::Cosine).model;
    let linear = train(HeadKind::Linear).model;
    let rows = pipeline::ablate(&bench.eval, &cosine, &linear).unwrap();
    let get = |method: &str| rows.iter().find(|r| r.method == method).unwrap().report;
    let (msp_lin, cs, ps) = (get("msp"), get("cosine-softmax"), get("pans"));

    let pinned = [
        (ps.auroc, FROZEN_PANS_AUROC),
        (cs.auroc, FROZEN_COSINE_SOFTMAX_AUROC),
        (ps.fpr95, FROZEN_PANS_FPR95),
        (msp_lin.fpr95, FROZEN_MSP_LINEAR_FPR95),
    ];
    let regression_ok = pinned.iter().all(|(got, want)| (got - want).abs() <= FROZEN_TOL);
    let auroc_ok = ps.auroc >= cs.auroc;
    let fpr_ok = ps.fpr95 <= msp_lin.fpr95;
    let ok = regression_ok && auroc_ok && fpr_ok;
    verdict(
        "C7",
        "directional reproduction",
        ok,
        &format!(
            "PAnS AUROC {:.4} >= cosine-softmax AUROC {:.4}: {auroc_ok}; PAnS FPR95 {:.4} <= MSP(linear) FPR95 {:.4}: {fpr_ok}; pinned values within ±{FROZEN_TOL}: {regression_ok}",
            ps.auroc, cs.auroc, ps.fpr95, msp_lin.fpr95
        ),
    );
    assert!(regression_ok, "frozen values drifted: {pinned:?}");
    assert!(ok, "directional ordering does not hold");
}

fn tree_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run(args: &[&str]) -> i32 {
    cli::main_with_args(std::iter::once("pans").chain(args.iter().copied()))
}

#[test]
fn c8_determinism_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for rep in ["a", "b"] {
        let root = tmp.path().join(rep);
        let bench = root.join("bench");
        let models = root.join("models");
        let scores = root.join("scores");
        let p = |x: &std::path::Path| x.to_str().unwrap().to_string();
        let manifest = p(&bench.join("manifest.txt"));
        let common = ["--height", "24", "--width", "20", "--classes", "4", "--dim", "6", "--n-train", "3", "--n-eval", "2", "--mode", "uniform-sphere"];
        let mut gen = vec!["gen", "--seed", "7", "--out"];
        let bench_s = p(&bench);
        gen.push(&bench_s);
        gen.extend(common);
        assert_eq!(run(&gen), 0);
        let models_s = p(&models);
        assert_eq!(run(&["train", "--manifest", &manifest, "--head", "cosine", "--epochs", "30", "--seed", "3", "--out", &models_s]), 0);
        let model = p(&models.join("cosine.model"));
        let scores_s = p(&scores);
        assert_eq!(run(&["score", "--manifest", &manifest, "--model", &model, "--scorer", "pans", "--out", &scores_s]), 0);
        trees.push(tree_bytes(&root));
    }
    let deterministic = trees[0] == trees[1] && !trees[0].is_empty();

    // write -> read -> write on every format, using the files just produced
    let mut round_trips = 0;
    for (name, bytes) in &trees[0] {
        let again = if name.ends_with(".feat") {
            format::encode_features(&format::decode_features(bytes).unwrap()).unwrap()
        } else if name.ends_with(".pgm") {
            format::encode_mask(&format::decode_mask(bytes).unwrap())
        } else if name.ends_with(".model") {
            format::encode_model(&format::decode_model(bytes).unwrap()).unwrap()
        } else if name.ends_with(".score") {
            format::encode_scores(&format::decode_scores(bytes).unwrap()).unwrap()
        } else {
            continue;
        };
        assert_eq!(&again, bytes, "{name} changed on round trip");
        round_trips += 1;
    }
    let linear = Model {
        bank: PrototypeBank::linear(2, 2, vec![0.5, -0.25, 1.0, 2.0], vec![0.125, -3.0]).unwrap(),
        temperature: 1.0,
    };
    let bytes = format::encode_model(&linear).unwrap();
    assert_eq!(format::encode_model(&format::decode_model(&bytes).unwrap()).unwrap(), bytes);
    let scores = AnomalyMap::new(1, 3, vec![0.5, -7.25, 3.0]).unwrap();
    let sb = format::encode_scores(&scores).unwrap();
    assert_eq!(format::decode_scores(&sb).unwrap(), scores);

    let ok = deterministic && round_trips > 0;
    verdict(
        "C8",
        "determinism & format round-trips",
        ok,
        &format!("gen/train/score trees identical: {deterministic}; {round_trips} files round-tripped byte-exactly"),
    );
    assert!(ok);
}

#[test]
fn metrics_module_is_pooled() {
    // sanity: pooling two scenes equals evaluating the concatenation
    let a = AnomalyMap::new(1, 2, vec![0.9, 0.1]).unwrap();
    let b = AnomalyMap::new(1, 2, vec![0.4, 0.6]).unwrap();
    let ma = LabelMask::new(1, 2, vec![pans::ANOMALY_ID, 0]).unwrap();
    let mb = LabelMask::new(1, 2, vec![pans::ANOMALY_ID, 1]).unwrap();
    let pooled = metrics::evaluate_pooled([(&a, &ma), (&b, &mb)]).unwrap();
    assert_eq!(pooled.auroc, 0.75);
}
