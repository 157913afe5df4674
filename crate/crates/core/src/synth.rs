//! Seeded synthetic benchmark: scenes partitioned into contiguous regions,
//! each carrying a known class (or, in evaluation scenes, an anomaly), with
//! features drawn around orthonormal class directions.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classifier::{dot, norm};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, LabelMask, PrototypeBank, Scene, ANOMALY_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyMode {
    /// Every anomaly region uses the first basis direction not assigned to a class.
    HeldOutDirection,
    /// Each anomaly region draws its own uniformly random unit direction.
    UniformSphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub dim: usize,
    pub noise_std: f64,
    pub anomaly_fraction: f64,
    /// Expected region size in pixels.
    pub region_granularity: usize,
    pub anomaly_mode: AnomalyMode,
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            classes: 8,
            dim: 16,
            noise_std: 0.15,
            anomaly_fraction: 0.05,
            region_granularity: 100,
            anomaly_mode: AnomalyMode::HeldOutDirection,
            seed: 0,
            n_train: 20,
            n_eval: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.height == 0 || self.width == 0 {
            return bad(format!("grid {}x{} is empty", self.height, self.width));
        }
        if self.classes < 2 || self.classes >= ANOMALY_ID as usize {
            return bad(format!("classes must be in 2..{}, got {}", ANOMALY_ID, self.classes));
        }
        let needed = match self.anomaly_mode {
            AnomalyMode::HeldOutDirection => self.classes + 1,
            AnomalyMode::UniformSphere => self.classes,
        };
        if self.dim < needed {
            return bad(format!(
                "dim {} too small: {} classes in this anomaly mode need {needed} orthogonal directions",
                self.dim, self.classes
            ));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise std must be non-negative, got {}", self.noise_std));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 0.5) {
            return bad(format!("anomaly fraction must be in (0, 0.5), got {}", self.anomaly_fraction));
        }
        if self.region_granularity == 0 {
            return bad("region granularity must be positive".into());
        }
        if self.height * self.width < self.classes + 1 {
            return bad(format!(
                "a {}x{} grid cannot hold {} classes plus an anomaly region",
                self.height, self.width, self.classes
            ));
        }
        if self.n_train == 0 || self.n_eval == 0 {
            return bad("need at least one train and one eval scene".into());
        }
        Ok(())
    }

    fn regions(&self) -> usize {
        let pixels = self.height * self.width;
        let target = (pixels as f64 / self.region_granularity as f64).round() as usize;
        target.clamp(self.classes + 1, pixels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Unit class directions, one row per class.
    pub directions: Vec<f64>,
    pub classes: usize,
    pub dim: usize,
    pub train: Vec<Scene>,
    pub eval: Vec<Scene>,
}

impl Benchmark {
    /// Cosine head whose prototypes are the true class directions.
    pub fn oracle_bank(&self) -> PrototypeBank {
        PrototypeBank::cosine(self.classes, self.dim, self.directions.clone())
            .expect("class directions are unit vectors")
    }
}

const BASIS_STREAM: u64 = 3 << 32;
const TRAIN_STREAM: u64 = 1 << 32;
const EVAL_STREAM: u64 = 2 << 32;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, dim);
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Random orthonormal basis of `R^dim` by Gram-Schmidt on Gaussian rows.
fn orthonormal_basis(rng: &mut impl Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = gaussian_vec(rng, dim);
        // two passes keep the rows orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Multi-source BFS from `n` distinct random centers; every region is
/// 4-connected because each pixel inherits the region of the neighbour
/// that reached it.
fn partition(rng: &mut impl Rng, height: usize, width: usize, n: usize) -> Vec<usize> {
    let centers = rand::seq::index::sample(rng, height * width, n);
    let mut region = vec![usize::MAX; height * width];
    let mut queue = VecDeque::with_capacity(height * width);
    for (k, c) in centers.iter().enumerate() {
        region[c] = k;
        queue.push_back(c);
    }
    while let Some(p) = queue.pop_front() {
        let (r, c) = (p / width, p % width);
        let mut visit = |q: usize| {
            if region[q] == usize::MAX {
                region[q] = region[p];
                queue.push_back(q);
            }
        };
        if r > 0 {
            visit(p - width);
        }
        if r + 1 < height {
            visit(p + width);
        }
        if c > 0 {
            visit(p - 1);
        }
        if c + 1 < width {
            visit(p + 1);
        }
    }
    region
}

/// Greedily pick regions (in random order) whose total size approaches the
/// target, keeping at least `classes` regions for known classes.
fn pick_anomalies(rng: &mut impl Rng, sizes: &[usize], target: f64, classes: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    let max_anomalies = sizes.len() - classes;
    let mut chosen = vec![false; sizes.len()];
    let mut total = 0usize;
    let mut count = 0usize;
    for &r in &order {
        if count == max_anomalies {
            break;
        }
        let with = (total + sizes[r]) as f64;
        if (with - target).abs() < (total as f64 - target).abs() {
            chosen[r] = true;
            total += sizes[r];
            count += 1;
        }
    }
    if count == 0 {
        let best = order
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (sizes[a] as f64 - target).abs();
                let db = (sizes[b] as f64 - target).abs();
                da.total_cmp(&db)
            })
            .expect("at least one region");
        chosen[best] = true;
    }
    chosen
}

fn scene(
    config: &SynthConfig,
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    with_anomalies: bool,
) -> Result<Scene> {
    let (h, w, d, c) = (config.height, config.width, config.dim, config.classes);
    let n_regions = config.regions();
    let region = partition(rng, h, w, n_regions);
    let mut sizes = vec![0usize; n_regions];
    region.iter().for_each(|&r| sizes[r] += 1);

    let anomalous = if with_anomalies {
        let target = config.anomaly_fraction * (h * w) as f64;
        pick_anomalies(rng, &sizes, target, c)
    } else {
        vec![false; n_regions]
    };

    // Known regions cycle through every class, then get shuffled.
    let known = anomalous.iter().filter(|&&a| !a).count();
    let mut known_classes: Vec<u8> = (0..known).map(|k| (k % c) as u8).collect();
    known_classes.shuffle(rng);
    let mut known_iter = known_classes.into_iter();

    let mut region_label = vec![0u8; n_regions];
    let mut region_dir: Vec<Vec<f64>> = Vec::with_capacity(n_regions);
    for r in 0..n_regions {
        if anomalous[r] {
            region_label[r] = ANOMALY_ID;
            region_dir.push(match config.anomaly_mode {
                AnomalyMode::HeldOutDirection => basis[c].clone(),
                AnomalyMode::UniformSphere => random_unit(rng, d),
            });
        } else {
            let label = known_iter.next().expect("one class per known region");
            region_label[r] = label;
            region_dir.push(basis[label as usize].clone());
        }
    }

    let mut data = Vec::with_capacity(h * w * d);
    for &r in &region {
        for &mu in &region_dir[r] {
            let z: f64 = StandardNormal.sample(rng);
            data.push(mu + config.noise_std * z);
        }
    }
    let labels = region.iter().map(|&r| region_label[r]).collect();
    Scene::new(FeatureMap::new(h, w, d, data)?, LabelMask::new(h, w, labels)?)
}

/// Generate the train and eval scenes. Each scene uses its own RNG stream
/// derived from `(seed, split, index)`.
pub fn generate(config: &SynthConfig) -> Result<Benchmark> {
    config.validate()?;
    let basis = orthonormal_basis(&mut stream_rng(config.seed, BASIS_STREAM), config.dim);
    let train = (0..config.n_train)
        .map(|i| scene(config, &basis, &mut stream_rng(config.seed, TRAIN_STREAM | i as u64), false))
        .collect::<Result<Vec<_>>>()?;
    let eval = (0..config.n_eval)
        .map(|i| scene(config, &basis, &mut stream_rng(config.seed, EVAL_STREAM | i as u64), true))
        .collect::<Result<Vec<_>>>()?;
    Ok(Benchmark {
        directions: basis[..config.classes].concat(),
        classes: config.classes,
        dim: config.dim,
        train,
        eval,
    })
}
