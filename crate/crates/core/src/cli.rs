//! Command-line front end: `synth`, `build-freq`, `train-rel`, `train-attr`,
//! `infer` and `eval`.
//!
//! Every artifact `<out>` is accompanied by `<out>.manifest.json` recording
//! the subcommand, seed, configuration and the SHA-256 of each input. A
//! dataset directory gets `manifest.json` inside it. Manifests hold file
//! names rather than paths, so reruns in another directory are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::attribute::{self, AttributeModel};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, RecallAveraging};
use crate::freq::{FreqTable, FUSION_ALPHA};
use crate::fusion::{self, FusionConfig, FusionModel};
use crate::io::{read_gt, Dataset, DatasetPaths, VocabKind, Vocabularies, Vocabulary};
use crate::ranker::{infer_all, read_predictions, write_predictions, InferOptions, PredicateScorer, DEFAULT_TOP_K};
use crate::synth::{self, SynthConfig};
use crate::train::TrainConfig;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "vrd", version, about = "Visual relationship scoring pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Count ground-truth predicates per (subject, object) label pair.
    BuildFreq(BuildFreqArgs),
    /// Train the relationship fusion model.
    TrainRel(TrainRelArgs),
    /// Train the attribute model.
    TrainAttr(TrainAttrArgs),
    /// Score and rank relationship and attribute candidates.
    Infer(InferArgs),
    /// Compute R@K, mAP_rel, mAP_phr and the weighted score.
    Eval(EvalArgs),
}

/// Vocabulary overrides; unset ones are read from the dataset directory.
#[derive(Debug, Clone, Default, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub vocab_objects: Option<PathBuf>,
    #[arg(long)]
    pub vocab_predicates: Option<PathBuf>,
    #[arg(long)]
    pub vocab_attributes: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub neg_pos_ratio: Option<f64>,
    /// IoU for assigning ground truth to detections.
    #[arg(long, default_value_t = 0.5)]
    pub match_iou: f64,
}

impl TrainArgs {
    fn apply(&self, mut base: TrainConfig, seed: u64) -> TrainConfig {
        base.seed = seed;
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            base.momentum = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.neg_pos_ratio {
            base.neg_pos_ratio = v;
        }
        base
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n_images: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_objects_per_image: u64,
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BuildFreqArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Additive smoothing; 0 keeps raw frequencies.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainRelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub freq: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Smoothing applied to the table's counts before it feeds the model.
    #[arg(long, default_value_t = FUSION_ALPHA)]
    pub fusion_alpha: f64,
    /// Drop the spatial branch.
    #[arg(long)]
    pub no_spatial: bool,
    /// Drop the subject and object heads.
    #[arg(long)]
    pub no_solo_heads: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64])]
    pub spatial_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [256, 256])]
    pub visual_hidden: Vec<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainAttrArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [128])]
    pub hidden: Vec<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub freq: PathBuf,
    /// Relationship checkpoint; required unless `--baseline`.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// Attribute checkpoint; attributes are skipped without it.
    #[arg(long)]
    pub attr_model: Option<PathBuf>,
    /// Use the frequency table alone as the predicate score.
    #[arg(long, conflicts_with = "model")]
    pub baseline: bool,
    /// Smoothing applied to the table's counts before it feeds the model.
    #[arg(long, default_value_t = FUSION_ALPHA)]
    pub fusion_alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long)]
    pub per_pair_cap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Dataset directory holding the ground truth.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Text report.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub recall_k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Average recall per image instead of pooling.
    #[arg(long)]
    pub macro_recall: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub vocab: VocabArgs,
}

/// Runs a parsed command; the returned text is meant for standard output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::BuildFreq(a) => cmd_build_freq(a),
        Command::TrainRel(a) => cmd_train_rel(a),
        Command::TrainAttr(a) => cmd_train_attr(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn digests(paths: &[&Path]) -> Result<Value> {
    paths
        .iter()
        .filter(|p| p.exists())
        .map(|p| Ok(json!({ "file": file_name(p), "sha256": sha256_file(p)? })))
        .collect::<Result<Vec<_>>>()
        .map(Value::Array)
}

fn write_manifest(path: &Path, command: &str, seed: u64, config: Value, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
        "inputs": digests(inputs)?,
        "outputs": digests(outputs)?,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Dataset paths with vocabulary overrides applied.
fn resolve_paths(dir: &Path, vocab: &VocabArgs) -> DatasetPaths {
    let mut p = DatasetPaths::in_dir(dir);
    if let Some(v) = &vocab.vocab_objects {
        p.objects = v.clone();
    }
    if let Some(v) = &vocab.vocab_predicates {
        p.predicates = v.clone();
    }
    if let Some(v) = &vocab.vocab_attributes {
        p.attributes = v.clone();
    }
    p
}

fn vocab_inputs(p: &DatasetPaths) -> [&Path; 3] {
    [&p.objects, &p.predicates, &p.attributes]
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let base = synth::standard_vocab();
    let read_or = |path: &Option<PathBuf>, kind: VocabKind, default: &Vocabulary| match path {
        Some(p) => Vocabulary::read(p, kind),
        None => Ok(default.clone()),
    };
    let vocab = Vocabularies {
        objects: read_or(&a.vocab.vocab_objects, VocabKind::Object, &base.objects)?,
        predicates: read_or(&a.vocab.vocab_predicates, VocabKind::Predicate, &base.predicates)?,
        attributes: read_or(&a.vocab.vocab_attributes, VocabKind::Attribute, &base.attributes)?,
    };
    let config = SynthConfig {
        feature_dim: a.feature_dim,
        ..SynthConfig::default()
    };
    let ds = synth::synth_world_with(a.seed, a.n_images, a.n_objects_per_image as usize, &vocab, &config)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let paths = DatasetPaths::in_dir(&a.out);
    ds.write(&paths)?;
    let outputs = [
        paths.objects.as_path(),
        &paths.predicates,
        &paths.attributes,
        &paths.detections,
        &paths.features,
        &paths.pair_features,
        &paths.gt,
    ];
    write_manifest(
        &a.out.join("manifest.json"),
        "synth",
        a.seed,
        json!({
            "n_images": a.n_images,
            "n_objects_per_image": a.n_objects_per_image,
            "feature_dim": a.feature_dim,
        }),
        &[],
        &outputs,
    )?;
    Ok(format!(
        "wrote {} images, {} detections, {} relationships, {} attributes to {}\n",
        ds.images.len(),
        ds.num_detections(),
        ds.gt.relationships.len(),
        ds.gt.attributes.len(),
        a.out.display()
    ))
}

pub fn cmd_build_freq(a: &BuildFreqArgs) -> Result<String> {
    let paths = resolve_paths(&a.data, &a.vocab);
    let vocab = Vocabularies::read(&paths)?;
    let gt = read_gt(&paths.gt, &vocab)?;
    let table = FreqTable::build(&gt.relationships, vocab.predicates.len(), a.alpha)?;
    ensure_parent(&a.out)?;
    table.write(&a.out)?;
    let [o, p, at] = vocab_inputs(&paths);
    write_manifest(
        &manifest_path(&a.out),
        "build-freq",
        a.seed,
        json!({ "alpha": a.alpha }),
        &[o, p, at, &paths.gt],
        &[&a.out],
    )?;
    Ok(format!(
        "{} label pairs from {} relationships -> {}\n",
        table.num_keys(),
        gt.relationships.len(),
        a.out.display()
    ))
}

fn train_config_json(c: &TrainConfig) -> Value {
    json!({
        "epochs": c.epochs,
        "neg_pos_ratio": c.neg_pos_ratio,
        "learning_rate": c.learning_rate,
        "momentum": c.momentum,
        "batch_size": c.batch_size,
    })
}

fn format_losses(trace: &[f64]) -> String {
    trace
        .iter()
        .enumerate()
        .map(|(i, l)| format!("epoch {:>2}  loss {l:.6}\n", i + 1))
        .collect()
}

pub fn cmd_train_rel(a: &TrainRelArgs) -> Result<String> {
    let paths = resolve_paths(&a.data, &a.vocab);
    let ds = Dataset::load(&paths)?;
    let freq = FreqTable::read(&a.freq)?.with_alpha(a.fusion_alpha)?;
    if freq.num_classes() != ds.vocab.predicates.len() {
        return Err(Error::Dimension {
            branch: "frequency table",
            expected: ds.vocab.predicates.len(),
            actual: freq.num_classes(),
        });
    }
    let fcfg = FusionConfig {
        spatial_hidden: a.spatial_hidden.clone(),
        visual_hidden: a.visual_hidden.clone(),
        use_spatial: !a.no_spatial,
        use_solo_heads: !a.no_solo_heads,
    };
    let tcfg = a.train.apply(TrainConfig::relationship(), a.seed);
    tcfg.validate()?;
    let mut model = FusionModel::init(ds.vocab.predicates.len(), ds.features.dim(), &fcfg, a.seed)?;
    let examples = fusion::build_examples(&ds, &freq, a.train.match_iou)?;
    let trace = fusion::train(&mut model, &examples, &tcfg)?;
    ensure_parent(&a.out)?;
    model.save(&a.out)?;
    let [o, p, at] = vocab_inputs(&paths);
    write_manifest(
        &manifest_path(&a.out),
        "train-rel",
        a.seed,
        json!({
            "train": train_config_json(&tcfg),
            "match_iou": a.train.match_iou,
            "fusion_alpha": a.fusion_alpha,
            "spatial_hidden": fcfg.spatial_hidden,
            "visual_hidden": fcfg.visual_hidden,
            "use_spatial": fcfg.use_spatial,
            "use_solo_heads": fcfg.use_solo_heads,
            "loss_trace": trace,
        }),
        &[o, p, at, &paths.detections, &paths.features, &paths.pair_features, &paths.gt, &a.freq],
        &[&a.out],
    )?;
    Ok(format_losses(&trace))
}

pub fn cmd_train_attr(a: &TrainAttrArgs) -> Result<String> {
    let paths = resolve_paths(&a.data, &a.vocab);
    let ds = Dataset::load(&paths)?;
    let tcfg = a.train.apply(TrainConfig::attribute(), a.seed);
    tcfg.validate()?;
    let mut model = AttributeModel::init(ds.vocab.attributes.len(), ds.features.dim(), &a.hidden, a.seed)?;
    let examples = attribute::build_examples(&ds, a.train.match_iou)?;
    let trace = attribute::train_attributes(&mut model, &examples, &tcfg)?;
    ensure_parent(&a.out)?;
    model.save(&a.out)?;
    let [o, p, at] = vocab_inputs(&paths);
    write_manifest(
        &manifest_path(&a.out),
        "train-attr",
        a.seed,
        json!({
            "train": train_config_json(&tcfg),
            "match_iou": a.train.match_iou,
            "hidden": a.hidden,
            "loss_trace": trace,
        }),
        &[o, p, at, &paths.detections, &paths.features, &paths.gt],
        &[&a.out],
    )?;
    Ok(format_losses(&trace))
}

pub fn cmd_infer(a: &InferArgs) -> Result<String> {
    let paths = resolve_paths(&a.data, &a.vocab);
    let vocab = Vocabularies::read(&paths)?;
    let images = crate::io::read_detections(&paths.detections, &vocab.objects)?;
    let features = crate::io::FeatureStore::read(&paths.features)?;
    let pair_features = if paths.pair_features.exists() {
        crate::io::PairFeatureIndex::read(&paths.pair_features)?
    } else {
        crate::io::PairFeatureIndex::new()
    };
    let freq = FreqTable::read(&a.freq)?;
    let model = a.model.as_ref().map(FusionModel::load).transpose()?;
    let attrs = a.attr_model.as_ref().map(AttributeModel::load).transpose()?;
    let (scorer, freq) = match &model {
        Some(m) if !a.baseline => (PredicateScorer::Fusion(m), freq.with_alpha(a.fusion_alpha)?),
        _ => (PredicateScorer::Baseline, freq),
    };
    let options = InferOptions {
        top_k: a.top_k,
        per_pair_cap: a.per_pair_cap,
    };
    let preds = infer_all(&images, &features, &pair_features, &freq, scorer, attrs.as_ref(), &options)?;
    ensure_parent(&a.out)?;
    write_predictions(&a.out, &preds, &vocab)?;

    let [o, p, at] = vocab_inputs(&paths);
    let mut inputs: Vec<&Path> = vec![o, p, at, &paths.detections, &paths.features, &paths.pair_features, &a.freq];
    inputs.extend(a.model.as_deref());
    inputs.extend(a.attr_model.as_deref());
    write_manifest(
        &manifest_path(&a.out),
        "infer",
        a.seed,
        json!({
            "baseline": a.baseline || model.is_none(),
            "fusion_alpha": a.fusion_alpha,
            "top_k": a.top_k,
            "per_pair_cap": a.per_pair_cap,
            "attributes": attrs.is_some(),
        }),
        &inputs,
        &[&a.out],
    )?;
    Ok(format!("{} predictions over {} images -> {}\n", preds.len(), images.len(), a.out.display()))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    if a.recall_k == 0 {
        return Err(Error::InvalidArgument("recall-k must be >= 1".into()));
    }
    if !(a.iou > 0.0 && a.iou <= 1.0) {
        return Err(Error::InvalidArgument(format!("iou must be in (0, 1], got {}", a.iou)));
    }
    let paths = resolve_paths(&a.data, &a.vocab);
    let vocab = Vocabularies::read(&paths)?;
    let gt = read_gt(&paths.gt, &vocab)?;
    let preds = read_predictions(&a.predictions, &vocab)?;
    let options = EvalOptions {
        recall_k: a.recall_k,
        iou_threshold: a.iou,
        recall_averaging: if a.macro_recall { RecallAveraging::Macro } else { RecallAveraging::Micro },
    };
    let report = evaluate(&preds, &gt, &options);
    let text = report.to_text(&vocab);
    ensure_parent(&a.out)?;
    fs::write(&a.out, &text).map_err(|e| Error::io(&a.out, e))?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(j) = &a.json {
        ensure_parent(j)?;
        let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
        s.push('\n');
        fs::write(j, s).map_err(|e| Error::io(j, e))?;
        outputs.push(j);
    }
    let [o, p, at] = vocab_inputs(&paths);
    write_manifest(
        &manifest_path(&a.out),
        "eval",
        a.seed,
        json!({
            "recall_k": a.recall_k,
            "iou": a.iou,
            "recall_averaging": options.recall_averaging,
        }),
        &[o, p, at, &paths.gt, &a.predictions],
        &outputs,
    )?;
    Ok(text)
}
