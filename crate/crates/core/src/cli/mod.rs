//! The `vsr` command line: synthetic data, pretraining, both training
//! stages, evaluation, repeated runs and gradient checks.

mod config;
mod pipeline;

pub use config::{merge_json, Pipeline, RunConfig};
pub use pipeline::{
    annotate, check_compatible, open_dataset, prepare_split, pretrain_encoder, protocol, run_pipeline, split_dataset,
    train_fused, train_single_stream, PipelineOutcome, PreparedSplit,
};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::data::{synth_generate, SynthConfig};
use crate::error::{invalid, Error, Result};
use crate::eval::{aggregate_runs, evaluate, render_aggregate, render_report, ReportFormat, Sections};
use crate::gradcheck::{render_results, run_gradchecks, GradcheckOptions, CHECKS};
use crate::model::{Checkpoint, CheckpointKind, SequenceModel, StreamKind};
use crate::training::EpochRecord;

#[derive(Debug, Parser)]
#[command(name = "vsr", version, about = "Two-stream end-to-end visual speech recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Pretrain a stream encoder with stacked RBMs.
    Pretrain(PretrainArgs),
    /// Train a single stream end to end.
    TrainStream(TrainStreamArgs),
    /// Fuse two trained streams and fine-tune.
    TrainFusion(TrainFusionArgs),
    /// Evaluate a checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Run a full pipeline for several seeds and aggregate.
    Repeat(RepeatArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub subjects: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 26)]
    pub height: usize,
    #[arg(long, default_value_t = 44)]
    pub width: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Standard deviation of the Gaussian pixel noise.
    #[arg(long, default_value_t = 6.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// oulu, cuave, avletters, avletters2-fold-K or custom.
    #[arg(long)]
    pub protocol: Option<String>,
    /// raw or diff.
    #[arg(long)]
    pub stream: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with configuration values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// text, json or csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Training subjects for the custom protocol.
    #[arg(long, value_delimiter = ',')]
    pub train_subjects: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub val_subjects: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub test_subjects: Option<Vec<String>>,
    /// Share of training utterances held out when a protocol has no validation set.
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ArchArgs {
    /// Encoder layer sizes, the last being the linear bottleneck.
    #[arg(long, value_delimiter = ',')]
    pub encoder_sizes: Option<Vec<usize>>,
    /// BLSTM units per direction in each stream.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// BLSTM units per direction in the fusion layer.
    #[arg(long)]
    pub fusion_hidden: Option<usize>,
    /// Half-width of the delta regression window.
    #[arg(long)]
    pub delta_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    /// Utterances per mini-batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Global-norm clipping threshold for BLSTM gradients.
    #[arg(long, conflicts_with = "no_clip")]
    pub clip: Option<f64>,
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Frames per mini-batch.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainStreamArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Pretrained encoder checkpoint.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFusionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Trained raw-stream checkpoint.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Trained diff-stream checkpoint.
    #[arg(long)]
    pub diff: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Stream or fusion checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// train, validation or test.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub per_subject: bool,
    #[arg(long)]
    pub confusion: bool,
}

#[derive(Debug, Args)]
pub struct RepeatArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    /// raw, diff or fusion.
    #[arg(long)]
    pub pipeline: Option<String>,
    /// Pretrain encoders with RBMs in every run.
    #[arg(long)]
    pub pretrain: bool,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// List the available checks and exit.
    #[arg(long)]
    pub list: bool,
    /// Run only these checks (repeatable).
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Corrupt the analytic gradient of this check.
    #[arg(long)]
    pub sabotage: Option<String>,
}

fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v).expect("flag serializes"));
    }
}

impl CommonArgs {
    fn overrides(&self, map: &mut Map<String, Value>) {
        put(map, "data", &self.data);
        put(map, "protocol", &self.protocol);
        put(map, "stream", &self.stream);
        put(map, "seed", &self.seed);
        put(map, "out", &self.out);
        put(map, "format", &self.format);
        put(map, "holdout", &self.holdout);
        let mut subjects = Map::new();
        put(&mut subjects, "train", &self.train_subjects);
        put(&mut subjects, "validation", &self.val_subjects);
        put(&mut subjects, "test", &self.test_subjects);
        if !subjects.is_empty() {
            map.insert("subjects".into(), Value::Object(subjects));
        }
    }

    fn resolve(&self, extra: Map<String, Value>) -> Result<RunConfig> {
        let mut map = Map::new();
        self.overrides(&mut map);
        map.extend(extra);
        RunConfig::resolve(self.config.as_deref(), map)
    }
}

impl ArchArgs {
    fn overrides(&self, map: &mut Map<String, Value>) {
        put(map, "encoder_sizes", &self.encoder_sizes);
        put(map, "hidden", &self.hidden);
        put(map, "fusion_hidden", &self.fusion_hidden);
        put(map, "delta_window", &self.delta_window);
    }
}

impl TrainArgs {
    fn overrides(&self, map: &mut Map<String, Value>) {
        put(map, "lr", &self.lr);
        put(map, "batch_utts", &self.batch);
        put(map, "patience", &self.patience);
        put(map, "clip_threshold", &self.clip);
        if self.no_clip {
            map.insert("clip_threshold".into(), Value::Null);
        }
        put(map, "max_epochs", &self.max_epochs);
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::TrainStream(a) => cmd_train_stream(a),
        Command::TrainFusion(a) => cmd_train_fusion(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Repeat(a) => cmd_repeat(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn required_out(cfg: &RunConfig) -> Result<&Path> {
    cfg.out.as_deref().ok_or_else(|| invalid("missing --out"))
}

/// `model.vsrm` → `model.history.json`.
pub fn history_path(out: &Path) -> PathBuf {
    out.with_extension("history.json")
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn log_epoch<M>(tag: &str) -> impl FnMut(&M, &EpochRecord) + '_ {
    move |_, r| eprintln!("[{tag}] epoch {}: loss {:.4}, validation {:.1}%", r.epoch, r.train_loss, 100.0 * r.val_accuracy)
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let cfg = SynthConfig {
        classes: a.classes,
        subjects: a.subjects,
        reps: a.reps,
        frames: a.frames,
        height: a.height,
        width: a.width,
        seed: a.seed,
        noise_std: a.noise,
    };
    let manifest = synth_generate(&cfg, &a.out)?;
    println!(
        "wrote {} utterances ({} classes x {} subjects x {} repetitions, {} frames of {}x{}) to {}",
        manifest.records.len(),
        cfg.classes,
        cfg.subjects,
        cfg.reps,
        cfg.frames,
        cfg.height,
        cfg.width,
        a.out.display()
    );
    Ok(0)
}

fn cmd_pretrain(a: &PretrainArgs) -> Result<i32> {
    let mut extra = Map::new();
    a.arch.overrides(&mut extra);
    let mut pre = Map::new();
    put(&mut pre, "epochs", &a.epochs);
    put(&mut pre, "batch", &a.batch);
    put(&mut pre, "lr", &a.lr);
    put(&mut pre, "l2", &a.l2);
    if !pre.is_empty() {
        extra.insert("pretrain".into(), Value::Object(pre));
    }
    let cfg = a.common.resolve(extra)?;
    let out = required_out(&cfg)?;
    let ds = open_dataset(&cfg)?;
    let split = split_dataset(&ds, &cfg)?;
    let train = ds.prepare(&split.train)?;
    let (encoder, errors) = pretrain_encoder(&cfg, &train, cfg.stream)?;
    for (i, e) in errors.iter().enumerate() {
        if let (Some(first), Some(last)) = (e.first(), e.last()) {
            eprintln!("layer {}: reconstruction error {first:.5} (epoch 1) -> {last:.5} (epoch {})", i + 1, e.len());
        }
    }
    let mut ckpt = Checkpoint::from_encoder(&encoder);
    ckpt.set_meta("streams", cfg.stream.as_str());
    annotate(&mut ckpt, &ds, &cfg, "pretrain");
    ckpt.save(out)?;
    write_json(&history_path(out), &json!({ "run_config": cfg.echo(), "reconstruction_error": errors }))?;
    println!("wrote encoder {} ({} layers)", out.display(), encoder.layers.len());
    Ok(0)
}

fn report_validation<M: SequenceModel<f32>>(model: &M, classes: usize, data: &PreparedSplit, id: &str) -> Result<Value> {
    let report = evaluate(model, classes, &data.validation, "validation", id)?;
    print!("{}", render_report(&report, ReportFormat::Text, Sections { per_subject: false, confusion: false }));
    Ok(serde_json::to_value(report)?)
}

fn cmd_train_stream(a: &TrainStreamArgs) -> Result<i32> {
    let mut extra = Map::new();
    a.arch.overrides(&mut extra);
    a.train.overrides(&mut extra);
    put(&mut extra, "encoder", &a.encoder);
    let cfg = a.common.resolve(extra)?;
    let out = required_out(&cfg)?;
    let ds = open_dataset(&cfg)?;
    let encoder = match &cfg.encoder {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            check_compatible(&ckpt, &ds)?;
            Some(ckpt.to_encoder()?)
        }
        None => None,
    };
    let data = prepare_split(&ds, &cfg)?;
    let (model, history) = train_single_stream(&cfg, &ds, &data, cfg.stream, encoder, &mut log_epoch(cfg.stream.as_str()))?;
    let mut ckpt = Checkpoint::from_stream(&model);
    annotate(&mut ckpt, &ds, &cfg, "stream");
    ckpt.save(out)?;
    let validation = report_validation(&model, ds.manifest.num_classes(), &data, cfg.stream.as_str())?;
    write_json(&history_path(out), &json!({ "run_config": cfg.echo(), "history": history, "validation": validation }))?;
    println!("best epoch {:?}, stopped by {:?}; wrote {}", history.best_epoch, history.stop_reason, out.display());
    Ok(0)
}

fn cmd_train_fusion(a: &TrainFusionArgs) -> Result<i32> {
    let mut extra = Map::new();
    a.arch.overrides(&mut extra);
    a.train.overrides(&mut extra);
    put(&mut extra, "raw", &a.raw);
    put(&mut extra, "diff", &a.diff);
    let cfg = a.common.resolve(extra)?;
    let out = required_out(&cfg)?;
    let ds = open_dataset(&cfg)?;
    let load = |path: &Option<PathBuf>, kind: StreamKind| -> Result<_> {
        let path = path.as_ref().ok_or_else(|| invalid(format!("missing --{}", kind.as_str())))?;
        let ckpt = Checkpoint::load(path)?;
        check_compatible(&ckpt, &ds)?;
        let model = ckpt.to_stream::<f32>()?;
        if model.stream.kind != kind {
            return Err(Error::MetadataMismatch(format!(
                "{} holds a {} stream, expected {}",
                path.display(),
                model.stream.kind.as_str(),
                kind.as_str()
            )));
        }
        Ok(model)
    };
    let raw = load(&cfg.raw, StreamKind::Raw)?;
    let diff = load(&cfg.diff, StreamKind::Diff)?;
    let data = prepare_split(&ds, &cfg)?;
    let (model, history) = train_fused(&cfg, &raw, &diff, &data, &mut log_epoch("fusion"))?;
    let mut ckpt = Checkpoint::from_fusion(&model);
    annotate(&mut ckpt, &ds, &cfg, "fusion");
    ckpt.save(out)?;
    let validation = report_validation(&model, ds.manifest.num_classes(), &data, "fusion")?;
    write_json(&history_path(out), &json!({ "run_config": cfg.echo(), "history": history, "validation": validation }))?;
    println!("best epoch {:?}, stopped by {:?}; wrote {}", history.best_epoch, history.stop_reason, out.display());
    Ok(0)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let mut extra = Map::new();
    put(&mut extra, "model", &a.model);
    put(&mut extra, "split", &a.split);
    let cfg = a.common.resolve(extra)?;
    let model_path = cfg.model.as_ref().ok_or_else(|| invalid("missing --model"))?;
    let ckpt = Checkpoint::load(model_path)?;
    let ds = open_dataset(&cfg)?;
    check_compatible(&ckpt, &ds)?;
    let split = split_dataset(&ds, &cfg)?;
    let indices = match cfg.split.as_str() {
        "train" => &split.train,
        "validation" => &split.validation,
        "test" => &split.test,
        other => return Err(invalid(format!("unknown split `{other}` (expected train, validation or test)"))),
    };
    let data = ds.prepare::<f32>(indices)?;
    let classes = ds.manifest.num_classes();
    let id = model_path.display().to_string();
    let mut report = match ckpt.kind()? {
        CheckpointKind::Stream => evaluate(&ckpt.to_stream::<f32>()?, classes, &data, &cfg.split, &id)?,
        CheckpointKind::Fusion => evaluate(&ckpt.to_fusion::<f32>()?, classes, &data, &cfg.split, &id)?,
        CheckpointKind::Encoder => return Err(invalid("an encoder checkpoint cannot classify; train a stream first")),
    };
    report.run_config = Some(cfg.echo());
    let sections = Sections { per_subject: a.per_subject, confusion: a.confusion };
    emit(cfg.out.as_deref(), &render_report(&report, cfg.format, sections))?;
    Ok(0)
}

fn cmd_repeat(a: &RepeatArgs) -> Result<i32> {
    let mut extra = Map::new();
    a.arch.overrides(&mut extra);
    a.train.overrides(&mut extra);
    put(&mut extra, "runs", &a.runs);
    put(&mut extra, "pipeline", &a.pipeline);
    if a.pretrain {
        extra.insert("use_pretrain".into(), Value::Bool(true));
    }
    if let Some(e) = a.pretrain_epochs {
        extra.insert("pretrain".into(), json!({ "epochs": e }));
    }
    let cfg = a.common.resolve(extra)?;
    if cfg.runs == 0 {
        return Err(invalid("--runs must be at least 1"));
    }
    let ds = open_dataset(&cfg)?;
    let mut reports = Vec::new();
    let mut seeds = Vec::new();
    let mut failures = 0;
    for i in 0..cfg.runs {
        let seed = cfg.seed + i as u64;
        match run_pipeline(&ds, &cfg.with_seed(seed), &mut |line| eprintln!("{line}")) {
            Ok(outcome) => {
                let r = outcome.final_report().clone();
                eprintln!("run {} (seed {seed}): test accuracy {:.1}%", i + 1, 100.0 * r.accuracy);
                reports.push(r);
                seeds.push(seed);
            }
            Err(e) => {
                eprintln!("run {} (seed {seed}) failed: {e}", i + 1);
                failures += 1;
            }
        }
    }
    if reports.is_empty() {
        return Err(invalid("every run failed"));
    }
    if failures > 0 {
        eprintln!("warning: aggregate covers {} of {} runs", reports.len(), cfg.runs);
    }
    let mut agg = aggregate_runs(&reports, &seeds)?;
    agg.run_config = Some(cfg.echo());
    let name = serde_json::to_value(cfg.pipeline)?.as_str().unwrap_or("model").to_string();
    emit(cfg.out.as_deref(), &render_aggregate(&agg, &name, cfg.format))?;
    Ok(if failures > 0 { 1 } else { 0 })
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if a.list {
        for c in CHECKS {
            println!("{c}");
        }
        return Ok(0);
    }
    let opts = GradcheckOptions {
        instances: a.instances,
        step: a.step,
        tolerance: a.tolerance,
        seed: a.seed,
        sabotage: a.sabotage.clone(),
    };
    let results = run_gradchecks(&a.checks, &opts)?;
    print!("{}", render_results(&results, a.tolerance));
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
}
