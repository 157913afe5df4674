//! Line-oriented benchmark manifest.
//!
//! ```text
//! pans-manifest 1
//! classes 8
//! dim 16
//! train train/000.feat train/000.pgm
//! eval eval/000.feat eval/000.pgm
//! ```
//!
//! Scene paths are relative to the manifest's directory. Blank lines and
//! lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use super::format;
use crate::error::{Error, Result};
use crate::grid::Scene;

const HEADER: &str = "pans-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub features: PathBuf,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub classes: usize,
    pub dim: usize,
    pub train: Vec<Entry>,
    pub eval: Vec<Entry>,
    /// Directory the entry paths are relative to.
    pub base: PathBuf,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nclasses {}\ndim {}\n", self.classes, self.dim);
        for (split, entries) in [("train", &self.train), ("eval", &self.eval)] {
            for e in entries {
                out.push_str(&format!("{split} {} {}\n", e.features.display(), e.mask.display()));
            }
        }
        out
    }

    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((n, other)) => {
                return Err(Error::format("manifest", "header", format!("line {n}: expected `{HEADER}`, found `{other}`")))
            }
            None => return Err(Error::format("manifest", "header", "empty manifest")),
        }
        let (mut classes, mut dim) = (None, None);
        let (mut train, mut eval) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let number = |field: &str, v: &str| {
                v.parse::<usize>()
                    .map_err(|e| Error::format("manifest", field, format!("line {n}: {e}")))
            };
            match parts.as_slice() {
                ["classes", v] => classes = Some(number("classes", v)?),
                ["dim", v] => dim = Some(number("dim", v)?),
                [split @ ("train" | "eval"), feat, mask] => {
                    let entry = Entry {
                        features: PathBuf::from(feat),
                        mask: PathBuf::from(mask),
                    };
                    if *split == "train" {
                        train.push(entry)
                    } else {
                        eval.push(entry)
                    }
                }
                _ => return Err(Error::format("manifest", "entry", format!("line {n}: cannot parse `{line}`"))),
            }
        }
        Ok(Self {
            classes: classes.ok_or_else(|| Error::format("manifest", "classes", "missing"))?,
            dim: dim.ok_or_else(|| Error::format("manifest", "dim", "missing"))?,
            train,
            eval,
            base: base.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = format::read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format("manifest", "header", "not UTF-8 text"))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    fn read(&self, entry: &Entry) -> Result<Scene> {
        let features = format::read_features(&self.base.join(&entry.features))?;
        let labels = format::read_mask(&self.base.join(&entry.mask))?;
        if features.dim() != self.dim {
            return Err(Error::InvalidInput(format!(
                "{}: dim {} but manifest says {}",
                entry.features.display(),
                features.dim(),
                self.dim
            )));
        }
        Scene::new(features, labels)
    }

    /// Load every training scene, rejecting masks that contain anomalies.
    pub fn train_scenes(&self) -> Result<Vec<Scene>> {
        self.train
            .iter()
            .map(|e| {
                let scene = self.read(e)?;
                scene.labels.validate_training(self.classes).map_err(|err| {
                    Error::InvalidInput(format!("{}: {err}", e.mask.display()))
                })?;
                Ok(scene)
            })
            .collect()
    }

    pub fn eval_scenes(&self) -> Result<Vec<Scene>> {
        self.eval
            .iter()
            .map(|e| {
                let scene = self.read(e)?;
                scene.labels.validate_eval(self.classes)?;
                Ok(scene)
            })
            .collect()
    }
}
