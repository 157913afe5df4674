//! The `pans` command-line tool: `gen`, `train`, `score`, `eval`, `ablate`, `iou`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure.

pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::anomaly::Scorer;
use crate::classifier::{self, LrSchedule, Model, PrototypeInit, TrainConfig};
use crate::error::{Error, Result};
use crate::grid::HeadKind;
use crate::synth::{self, AnomalyMode, SynthConfig};

use manifest::{Entry, Manifest};
use report::EvalRow;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ORACLE_MODEL_FILE: &str = "oracle.model";
pub const SCORE_INDEX_FILE: &str = "index.txt";
const SCORE_INDEX_HEADER: &str = "pans-scores 1";

#[derive(Debug, Parser)]
#[command(name = "pans", version, about = "Prototype-based anomaly segmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark (scenes, manifest, oracle model).
    Gen(GenArgs),
    /// Train a cosine or linear head on the manifest's train scenes.
    Train(TrainArgs),
    /// Write per-pixel anomaly scores for every eval scene.
    Score(ScoreArgs),
    /// Compute AUPR / AUROC / FPR95 for one or more score directories.
    Eval(EvalArgs),
    /// Run all four scorers and report their metrics.
    Ablate(AblateArgs),
    /// Per-class IoU of argmax predictions on the eval scenes.
    Iou(IouArgs),
}

fn parse_mode(s: &str) -> std::result::Result<AnomalyMode, String> {
    match s {
        "held-out" => Ok(AnomalyMode::HeldOutDirection),
        "uniform-sphere" => Ok(AnomalyMode::UniformSphere),
        other => Err(format!("unknown mode `{other}` (expected held-out or uniform-sphere)")),
    }
}

fn parse_init(s: &str) -> std::result::Result<PrototypeInit, String> {
    match s {
        "random" => Ok(PrototypeInit::RandomNormal),
        "class-mean" => Ok(PrototypeInit::ClassMean),
        other => Err(format!("unknown init `{other}` (expected random or class-mean)")),
    }
}

fn parse_head(s: &str) -> std::result::Result<HeadKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scorer(s: &str) -> std::result::Result<Scorer, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.05)]
    pub anomaly_fraction: f64,
    /// Expected region size in pixels.
    #[arg(long, default_value_t = 100)]
    pub granularity: usize,
    /// held-out | uniform-sphere
    #[arg(long, value_parser = parse_mode, default_value = "held-out")]
    pub mode: AnomalyMode,
    #[arg(long, default_value_t = 20)]
    pub n_train: usize,
    #[arg(long, default_value_t = 10)]
    pub n_eval: usize,
}

impl GenArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            height: self.height,
            width: self.width,
            classes: self.classes,
            dim: self.dim,
            noise_std: self.noise,
            anomaly_fraction: self.anomaly_fraction,
            region_granularity: self.granularity,
            anomaly_mode: self.mode,
            seed: self.seed,
            n_train: self.n_train,
            n_eval: self.n_eval,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// cosine | linear
    #[arg(long, value_parser = parse_head, default_value = "cosine")]
    pub head: HeadKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 0.9)]
    pub lr_power: f64,
    /// Keep the learning rate fixed instead of polynomial decay.
    #[arg(long)]
    pub constant_lr: bool,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// random | class-mean
    #[arg(long, value_parser = parse_init, default_value = "random")]
    pub init: PrototypeInit,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            init: self.init,
            temperature: self.tau,
            learning_rate: self.lr,
            epochs: self.epochs as usize,
            schedule: if self.constant_lr {
                LrSchedule::Constant
            } else {
                LrSchedule::Polynomial { power: self.lr_power }
            },
            seed: self.seed,
            l2_weight: self.l2,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// msp | raw | cosine-softmax | pans
    #[arg(long, value_parser = parse_scorer)]
    pub scorer: Scorer,
    #[arg(long)]
    pub out: PathBuf,
    /// Softmax temperature (default: 1 for msp, the model's for cosine-softmax).
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `score`; repeat for several scorer runs.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cosine_model: PathBuf,
    #[arg(long)]
    pub linear_model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IouArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Repeat to compare heads; with two models the mIoU delta is printed.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => format::write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scene_name(i: usize) -> String {
    format!("{i:03}")
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let config = args.config();
    let bench = synth::generate(&config)?;
    let mut manifest = Manifest {
        classes: bench.classes,
        dim: bench.dim,
        train: Vec::new(),
        eval: Vec::new(),
        base: args.out.clone(),
    };
    for (split, scenes) in [("train", &bench.train), ("eval", &bench.eval)] {
        for (i, scene) in scenes.iter().enumerate() {
            let entry = Entry {
                features: PathBuf::from(format!("{split}/{}.feat", scene_name(i))),
                mask: PathBuf::from(format!("{split}/{}.pgm", scene_name(i))),
            };
            format::write_features(&args.out.join(&entry.features), &scene.features)?;
            format::write_mask(&args.out.join(&entry.mask), &scene.labels)?;
            if split == "train" {
                manifest.train.push(entry);
            } else {
                manifest.eval.push(entry);
            }
        }
    }
    let oracle = Model {
        bank: bench.oracle_bank(),
        temperature: TrainConfig::default().temperature,
    };
    format::write_model(&args.out.join(ORACLE_MODEL_FILE), &oracle)?;
    format::write_bytes(&args.out.join(MANIFEST_FILE), manifest.to_text().as_bytes())?;
    println!(
        "wrote {} train and {} eval scenes to {}",
        manifest.train.len(),
        manifest.eval.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.config();
    config.validate()?;
    let manifest = Manifest::load(&args.manifest)?;
    let scenes = manifest.train_scenes()?;
    let report = classifier::train(&scenes, manifest.classes, args.head, &config)?;
    let head = args.head.name();
    format::write_model(&args.out.join(format!("{head}.model")), &report.model)?;
    format::write_bytes(
        &args.out.join(format!("{head}_train.csv")),
        report::train_csv(&report.losses, &report.accuracies).as_bytes(),
    )?;
    println!(
        "{head} head: final loss {:.6}, train accuracy {:.4}",
        report.final_loss(),
        report.final_accuracy()
    );
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let model = format::read_model(&args.model)?;
    pipeline::check_compatible(args.scorer, model.bank.head_kind())?;
    let manifest = Manifest::load(&args.manifest)?;
    let scenes = manifest.eval_scenes()?;
    let maps = pipeline::score_scenes(&scenes, &model, args.scorer, args.tau)?;
    let mut index = format!(
        "{SCORE_INDEX_HEADER}\nmethod {}\nhead {}\n",
        args.scorer.name(),
        model.bank.head_kind().name()
    );
    for (i, map) in maps.iter().enumerate() {
        let name = format!("{}.score", scene_name(i));
        format::write_scores(&args.out.join(&name), map)?;
        index.push_str(&name);
        index.push('\n');
    }
    format::write_bytes(&args.out.join(SCORE_INDEX_FILE), index.as_bytes())?;
    println!("wrote {} score files to {}", maps.len(), args.out.display());
    Ok(())
}

struct ScoreIndex {
    method: String,
    head: String,
    files: Vec<PathBuf>,
}

fn read_score_index(dir: &Path) -> Result<ScoreIndex> {
    let path = dir.join(SCORE_INDEX_FILE);
    let text = String::from_utf8(format::read_bytes(&path)?)
        .map_err(|_| Error::format("score index", "header", "not UTF-8 text"))?;
    let mut lines = text.lines();
    if lines.next() != Some(SCORE_INDEX_HEADER) {
        return Err(Error::format("score index", "header", format!("expected `{SCORE_INDEX_HEADER}`")));
    }
    let mut field = |name: &'static str| {
        lines
            .next()
            .and_then(|l| l.strip_prefix(name))
            .map(|v| v.trim().to_string())
            .ok_or_else(|| Error::format("score index", name, "missing"))
    };
    let method = field("method")?;
    let head = field("head")?;
    let files = lines.filter(|l| !l.trim().is_empty()).map(|l| dir.join(l.trim())).collect();
    Ok(ScoreIndex { method, head, files })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let scenes = manifest.eval_scenes()?;
    let mut rows = Vec::with_capacity(args.scores.len());
    for dir in &args.scores {
        let index = read_score_index(dir)?;
        let maps = index
            .files
            .iter()
            .map(|p| format::read_scores(p))
            .collect::<Result<Vec<_>>>()?;
        rows.push(EvalRow {
            method: index.method,
            head: index.head,
            report: pipeline::evaluate_maps(&maps, &scenes)?,
        });
    }
    emit(args.out.as_deref(), &report::eval_csv(&rows))
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let cosine = format::read_model(&args.cosine_model)?;
    let linear = format::read_model(&args.linear_model)?;
    let manifest = Manifest::load(&args.manifest)?;
    let scenes = manifest.eval_scenes()?;
    let rows = pipeline::ablate(&scenes, &cosine, &linear)?;
    emit(args.out.as_deref(), &report::eval_csv(&rows))
}

pub fn cmd_iou(args: &IouArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let scenes = manifest.eval_scenes()?;
    let mut text = report::iou_header(manifest.classes);
    text.push('\n');
    let mut mious = Vec::new();
    for path in &args.model {
        let model = format::read_model(path)?;
        if model.bank.classes() != manifest.classes {
            return Err(Error::InvalidInput(format!(
                "{}: model has {} classes, manifest {}",
                path.display(),
                model.bank.classes(),
                manifest.classes
            )));
        }
        let (iou, _) = pipeline::segmentation(&scenes, &model)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        text.push_str(&report::iou_row(&name, model.bank.head_kind().name(), &iou));
        text.push('\n');
        mious.push((name, iou.miou));
    }
    emit(args.out.as_deref(), &text)?;
    if let [(a, ma), (b, mb)] = mious.as_slice() {
        println!("miou delta ({a} - {b}): {:+.4}", ma - mb);
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Iou(a) => cmd_iou(a),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
