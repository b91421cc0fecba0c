use crate::data::{make_split, Dataset, PreparedUtterance, Protocol, ProtocolSplit};
use crate::error::{invalid, Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{Checkpoint, Encoder, FusionNet, StreamClassifier, StreamKind};
use crate::numerics::{Rng, Tensor};
use crate::rbm::pretrain_stack;
use crate::training::{build_fusion, fit, EpochRecord, Stage, TrainHistory};

use super::config::{Pipeline, RunConfig};

/// RNG stream for protocol splits and validation hold-outs.
const SPLIT_STREAM: u64 = 3;

/// A protocol split with every partition loaded and preprocessed.
pub struct PreparedSplit {
    pub split: ProtocolSplit,
    pub train: Vec<PreparedUtterance>,
    pub validation: Vec<PreparedUtterance>,
    pub test: Vec<PreparedUtterance>,
}

impl PreparedSplit {
    pub fn part(&self, name: &str) -> Result<&[PreparedUtterance]> {
        match name {
            "train" => Ok(&self.train),
            "validation" => Ok(&self.validation),
            "test" => Ok(&self.test),
            other => Err(invalid(format!("unknown split `{other}` (expected train, validation or test)"))),
        }
    }
}

pub fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data.as_ref().ok_or_else(|| invalid("missing --data"))?;
    Dataset::open(path)
}

pub fn protocol(cfg: &RunConfig) -> Result<Protocol> {
    Ok(match cfg.protocol.parse()? {
        Protocol::Custom(_) => Protocol::Custom(cfg.subjects.clone()),
        p => p,
    })
}

/// Splits the dataset per the configured protocol and seed, holding out
/// validation utterances when the protocol defines none.
pub fn split_dataset(ds: &Dataset, cfg: &RunConfig) -> Result<ProtocolSplit> {
    let mut rng = Rng::with_stream(cfg.seed, SPLIT_STREAM);
    let split = make_split(&ds.manifest, &protocol(cfg)?, &mut rng)?;
    if split.validation.is_empty() && cfg.holdout == 0.0 {
        return Ok(split);
    }
    Ok(split.with_holdout(cfg.holdout, &mut rng))
}

pub fn prepare_split(ds: &Dataset, cfg: &RunConfig) -> Result<PreparedSplit> {
    let split = split_dataset(ds, cfg)?;
    Ok(PreparedSplit {
        train: ds.prepare(&split.train)?,
        validation: ds.prepare(&split.validation)?,
        test: ds.prepare(&split.test)?,
        split,
    })
}

/// Stamps dataset geometry, seed, stage and the resolved config.
pub fn annotate(ckpt: &mut Checkpoint, ds: &Dataset, cfg: &RunConfig, stage: &str) {
    ckpt.set_meta("height", ds.manifest.height.to_string());
    ckpt.set_meta("width", ds.manifest.width.to_string());
    ckpt.set_meta("stage", stage);
    ckpt.set_meta("seed", cfg.seed.to_string());
    ckpt.set_meta("config", cfg.echo().to_string());
}

/// Errors unless `ckpt` was built for this dataset's classes and frame size.
pub fn check_compatible(ckpt: &Checkpoint, ds: &Dataset) -> Result<()> {
    if ckpt.kind()? != crate::model::CheckpointKind::Encoder {
        ckpt.expect_classes(ds.manifest.num_classes())?;
    }
    if ckpt.meta("height").is_some() {
        ckpt.expect_image_dims(ds.manifest.height, ds.manifest.width)?;
    }
    let input_dim: usize = ckpt.parse_meta("input_dim")?;
    if input_dim != ds.manifest.height * ds.manifest.width {
        return Err(Error::MetadataMismatch(format!(
            "checkpoint expects {input_dim} pixels per frame, dataset has {}",
            ds.manifest.height * ds.manifest.width
        )));
    }
    Ok(())
}

/// Greedy RBM pretraining of an encoder on all training frames of one stream.
/// Returns the encoder and the per-layer, per-epoch reconstruction errors.
pub fn pretrain_encoder(cfg: &RunConfig, train: &[PreparedUtterance], kind: StreamKind) -> Result<(Encoder, Vec<Vec<f64>>)> {
    let frames: Vec<&Tensor> = train.iter().map(|u| u.stream(kind)).collect();
    if frames.is_empty() {
        return Err(invalid("no training utterances to pretrain on"));
    }
    let data = Tensor::concat_rows(&frames)?;
    let sizes: Vec<usize> = std::iter::once(data.cols()).chain(cfg.encoder_sizes.iter().copied()).collect();
    let stack = pretrain_stack(&sizes, &data, &cfg.pretrain)?;
    Ok((Encoder { layers: stack.encoder_layers() }, stack.errors))
}

fn init_stream(kind: StreamKind) -> u64 {
    match kind {
        StreamKind::Raw => 0,
        StreamKind::Diff => 1,
    }
}

pub fn train_single_stream(
    cfg: &RunConfig,
    ds: &Dataset,
    data: &PreparedSplit,
    kind: StreamKind,
    encoder: Option<Encoder>,
    progress: &mut dyn FnMut(&StreamClassifier, &EpochRecord),
) -> Result<(StreamClassifier, TrainHistory)> {
    let arch = cfg.arch(ds.manifest.height * ds.manifest.width)?;
    let mut rng = Rng::with_stream(cfg.seed, init_stream(kind));
    let model = StreamClassifier::build(&arch, kind, ds.manifest.num_classes(), encoder, &mut rng)?;
    fit(model, &data.train, &data.validation, &cfg.train_config(Stage::Stream), progress)
}

pub fn train_fused(
    cfg: &RunConfig,
    raw: &StreamClassifier,
    diff: &StreamClassifier,
    data: &PreparedSplit,
    progress: &mut dyn FnMut(&FusionNet, &EpochRecord),
) -> Result<(FusionNet, TrainHistory)> {
    let train_cfg = cfg.train_config(Stage::Fusion);
    let model = build_fusion(raw, diff, cfg.fusion_hidden, train_cfg.seed)?;
    fit(model, &data.train, &data.validation, &train_cfg, progress)
}

/// Test reports of one complete run.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub raw: Option<EvalReport>,
    pub diff: Option<EvalReport>,
    pub fusion: Option<EvalReport>,
}

impl PipelineOutcome {
    /// Report of the pipeline's final model.
    pub fn final_report(&self) -> &EvalReport {
        self.fusion.as_ref().or(self.diff.as_ref()).or(self.raw.as_ref()).expect("at least one model was evaluated")
    }
}

/// Runs the configured pipeline once (optional pretraining, stream
/// training, optional fusion) and evaluates every trained model on test.
pub fn run_pipeline(ds: &Dataset, cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<PipelineOutcome> {
    let data = prepare_split(ds, cfg)?;
    let classes = ds.manifest.num_classes();
    let stream = |kind: StreamKind, log: &mut dyn FnMut(&str)| -> Result<(StreamClassifier, EvalReport)> {
        let encoder = if cfg.use_pretrain { Some(pretrain_encoder(cfg, &data.train, kind)?.0) } else { None };
        let tag = kind.as_str();
        let (model, _) = train_single_stream(cfg, ds, &data, kind, encoder, &mut |_, r| {
            log(&format!("[seed {} {tag}] epoch {}: loss {:.4}, validation {:.1}%", cfg.seed, r.epoch, r.train_loss, 100.0 * r.val_accuracy))
        })?;
        let report = evaluate(&model, classes, &data.test, "test", tag)?;
        Ok((model, report))
    };
    let mut outcome = PipelineOutcome { raw: None, diff: None, fusion: None };
    let needs_raw = matches!(cfg.pipeline, Pipeline::Raw | Pipeline::Fusion);
    let needs_diff = matches!(cfg.pipeline, Pipeline::Diff | Pipeline::Fusion);
    let raw = if needs_raw { Some(stream(StreamKind::Raw, log)?) } else { None };
    let diff = if needs_diff { Some(stream(StreamKind::Diff, log)?) } else { None };
    if let (Some((raw_model, _)), Some((diff_model, _))) = (&raw, &diff) {
        let (fused, _) = train_fused(cfg, raw_model, diff_model, &data, &mut |_, r| {
            log(&format!("[seed {} fusion] epoch {}: loss {:.4}, validation {:.1}%", cfg.seed, r.epoch, r.train_loss, 100.0 * r.val_accuracy))
        })?;
        outcome.fusion = Some(evaluate(&fused, classes, &data.test, "test", "fusion")?);
    }
    outcome.raw = raw.map(|r| r.1);
    outcome.diff = diff.map(|d| d.1);
    Ok(outcome)
}
