//! Prototype-based anomaly segmentation.
//!
//! A cosine classifier learns one prototype per known class; pixels whose
//! features are far from every prototype are flagged as anomalous. The crate
//! also carries the softmax and linear-logit baselines, pixel-level OOD
//! metrics (AUROC, AUPR, FPR95), per-class IoU, a seeded synthetic benchmark,
//! and the `pans` command-line tool with its file formats.

pub mod anomaly;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod numeric;
pub mod synth;

pub use anomaly::Scorer;
pub use classifier::{Model, TrainConfig, TrainReport};
pub use error::{Error, Result};
pub use grid::{AnomalyMap, FeatureMap, HeadKind, LabelMask, PrototypeBank, Scene, ScoreMap, ANOMALY_ID};
pub use metrics::{EvalReport, IoUReport};
