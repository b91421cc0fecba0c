//! Mini-batching with padding masks, the Adam training loop with clipping
//! and early stopping, and the stream and fusion training stages.

mod batch;
mod stopping;

pub use batch::{make_batches, make_batches_padded, PaddedBatch};
pub use stopping::{EarlyStopping, StopDecision};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::PreparedUtterance;
use crate::error::{invalid, Error, Result};
use crate::model::{FusionNet, ParamGroup, Parameterized, SequenceModel, StreamClassifier};
use crate::numerics::{adam_step, clip_global_norm, AdamConfig, AdamState, Real, Rng};

/// RNG stream used for batch shuffling, kept apart from initialisation.
const BATCH_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stream,
    Fusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub batch_utts: usize,
    pub patience: usize,
    /// Global-norm threshold for the BLSTM gradients; `None` disables clipping.
    pub clip_threshold: Option<f64>,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Extra padding frames appended to every batch.
    pub extra_padding: usize,
}

impl TrainConfig {
    pub fn for_stage(stage: Stage) -> Self {
        TrainConfig {
            stage,
            lr: match stage {
                Stage::Stream => 3e-4,
                Stage::Fusion => 1e-4,
            },
            batch_utts: 10,
            patience: 5,
            clip_threshold: Some(5.0),
            max_epochs: 200,
            seed: 0,
            adam: AdamConfig::default(),
            extra_padding: 0,
        }
    }

    pub fn stream() -> Self {
        Self::for_stage(Stage::Stream)
    }

    pub fn fusion() -> Self {
        Self::for_stage(Stage::Fusion)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(invalid(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.batch_utts == 0 {
            return Err(invalid("batch_utts must be at least 1"));
        }
        if let Some(c) = self.clip_threshold {
            if c.is_nan() || c <= 0.0 {
                return Err(invalid(format!("clip threshold must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stream()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over all valid training frames of the epoch.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub stop_reason: StopReason,
    /// Wall-clock seconds per epoch; not serialized so artifacts stay reproducible.
    #[serde(skip)]
    pub wall_seconds: Vec<f64>,
}

/// Adam state for every parameter plus the clipping rule.
#[derive(Clone, Debug)]
pub struct Optimizer<S: Real> {
    states: Vec<AdamState<S>>,
    pub lr: f64,
    pub clip_threshold: Option<f64>,
}

impl<S: Real> Optimizer<S> {
    pub fn new(model: &impl Parameterized<S>, cfg: &TrainConfig) -> Self {
        let states = model.params().iter().map(|p| AdamState::new(p.tensor.dims(), cfg.adam)).collect();
        Optimizer { states, lr: cfg.lr, clip_threshold: cfg.clip_threshold }
    }

    /// Clips the recurrent-group gradients by global norm, then applies
    /// Adam to every parameter. Returns the clipping scale.
    pub fn step<M: Parameterized<S>>(&mut self, model: &mut M, grads: &mut M) -> Result<f64> {
        let mut grad_params = grads.params_mut();
        let mut scale = 1.0;
        if let Some(threshold) = self.clip_threshold {
            let mut recurrent: Vec<_> = grad_params
                .iter_mut()
                .filter(|p| p.group == ParamGroup::Recurrent)
                .map(|p| &mut *p.tensor)
                .collect();
            scale = clip_global_norm(&mut recurrent, threshold)?;
        }
        let params = model.params_mut();
        if params.len() != grad_params.len() || params.len() != self.states.len() {
            return Err(invalid("model, gradient and optimizer state disagree on parameter count"));
        }
        for ((p, g), state) in params.into_iter().zip(&grad_params).zip(&mut self.states) {
            adam_step(p.tensor, g.tensor, state, self.lr)?;
        }
        Ok(scale)
    }
}

/// Fraction of utterances whose majority-vote label is correct.
pub fn accuracy<S: Real, M: SequenceModel<S>>(model: &M, data: &[PreparedUtterance<S>]) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("accuracy of an empty set"));
    }
    let mut correct = 0;
    for utt in data {
        if model.predict(utt)? == utt.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_labels<S: Real>(classes: usize, sets: &[&[PreparedUtterance<S>]]) -> Result<()> {
    for utt in sets.iter().flat_map(|s| s.iter()) {
        if utt.label >= classes {
            return Err(invalid(format!("utterance {} has label {} but the model has {classes} classes", utt.path, utt.label)));
        }
    }
    Ok(())
}

/// Trains `model` until early stopping or `max_epochs`, then restores the
/// parameters of the best validation epoch.
pub fn train_model<S: Real, M: SequenceModel<S>>(
    model: M,
    train: &[PreparedUtterance<S>],
    validation: &[PreparedUtterance<S>],
    cfg: &TrainConfig,
) -> Result<(M, TrainHistory)> {
    fit(model, train, validation, cfg, &mut |_, _| {})
}

/// [`train_model`] with a callback receiving the model and its record
/// after every epoch.
pub fn fit<S: Real, M: SequenceModel<S>>(
    mut model: M,
    train: &[PreparedUtterance<S>],
    validation: &[PreparedUtterance<S>],
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&M, &EpochRecord),
) -> Result<(M, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if validation.is_empty() {
        return Err(invalid("validation set is empty"));
    }
    check_labels(model.num_classes(), &[train, validation])?;

    let mut optimizer = Optimizer::new(&model, cfg);
    let mut rng = Rng::with_stream(cfg.seed, BATCH_STREAM);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = None;
    let mut history = TrainHistory {
        config: cfg.clone(),
        epochs: Vec::new(),
        best_epoch: None,
        best_val_accuracy: None,
        stop_reason: StopReason::MaxEpochs,
        wall_seconds: Vec::new(),
    };

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let batches = make_batches_padded(train, cfg.batch_utts, &mut rng, cfg.extra_padding)?;
        let (mut loss_sum, mut frames) = (0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let mut grads = model.zeros_like();
            let loss = model.batch_loss_grad(train, batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, loss });
            }
            optimizer.step(&mut model, &mut grads)?;
            loss_sum += loss * batch.valid_frames() as f64;
            frames += batch.valid_frames();
        }
        let val_accuracy = accuracy(&model, validation)?;
        let record = EpochRecord { epoch, train_loss: loss_sum / frames as f64, val_accuracy };
        progress(&model, &record);
        history.epochs.push(record);
        history.wall_seconds.push(start.elapsed().as_secs_f64());
        match stopper.observe(val_accuracy) {
            StopDecision::Improved => best = Some(model.clone()),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stop_reason = StopReason::Patience;
                break;
            }
        }
    }

    history.best_epoch = stopper.best_epoch;
    history.best_val_accuracy = stopper.best_epoch.map(|_| stopper.best_score);
    Ok((best.unwrap_or(model), history))
}

/// Single-stream stage: trains a stream with its own softmax head.
pub fn train_stream<S: Real>(
    model: StreamClassifier<S>,
    train: &[PreparedUtterance<S>],
    validation: &[PreparedUtterance<S>],
    cfg: &TrainConfig,
) -> Result<(StreamClassifier<S>, TrainHistory)> {
    train_model(model, train, validation, cfg)
}

/// Fusion stage: builds a fusion network on top of two trained streams
/// (their heads are dropped) and fine-tunes everything end to end.
pub fn train_fusion<S: Real>(
    raw: &StreamClassifier<S>,
    diff: &StreamClassifier<S>,
    fusion_hidden: usize,
    train: &[PreparedUtterance<S>],
    validation: &[PreparedUtterance<S>],
    cfg: &TrainConfig,
) -> Result<(FusionNet<S>, TrainHistory)> {
    let model = build_fusion(raw, diff, fusion_hidden, cfg.seed)?;
    train_model(model, train, validation, cfg)
}

/// The untrained fusion network: both streams as given, with a
/// Glorot-initialised fusion BLSTM and output layer drawn from `seed`.
pub fn build_fusion<S: Real>(raw: &StreamClassifier<S>, diff: &StreamClassifier<S>, fusion_hidden: usize, seed: u64) -> Result<FusionNet<S>> {
    if raw.classes() != diff.classes() {
        return Err(invalid(format!(
            "streams disagree on class count: raw {} vs diff {}",
            raw.classes(),
            diff.classes()
        )));
    }
    let mut rng = Rng::new(seed);
    FusionNet::build(raw.stream.clone(), diff.stream.clone(), raw.classes(), fusion_hidden, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::DeltaWindow;
    use crate::model::{StreamArch, StreamKind};
    use crate::numerics::Tensor;

    fn toy_data(n: usize, classes: usize, seed: u64) -> Vec<PreparedUtterance<f64>> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let t = 3 + i % 4;
                let label = i % classes;
                let raw: Vec<f64> = (0..t * 4).map(|j| if j % 4 == label { 1.0 } else { 0.0 } + 0.1 * rng.normal(0.0, 1.0)).collect();
                let diff: Vec<f64> = (0..t * 4).map(|_| rng.normal(0.0, 1.0)).collect();
                PreparedUtterance {
                    raw: Tensor::from_vec(&[t, 4], raw).unwrap(),
                    diff: Tensor::from_vec(&[t, 4], diff).unwrap(),
                    label,
                    subject: format!("s{}", i % 3),
                    path: format!("u{i}"),
                }
            })
            .collect()
    }

    fn toy_model(kind: StreamKind, seed: u64) -> StreamClassifier<f64> {
        let arch = StreamArch { input_dim: 4, encoder_sizes: vec![6, 3], hidden: 4, delta: DeltaWindow::default() };
        StreamClassifier::build(&arch, kind, 3, None, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn stage_defaults() {
        let s = TrainConfig::stream();
        assert_eq!((s.lr, s.batch_utts, s.patience), (0.0003, 10, 5));
        assert_eq!(TrainConfig::fusion().lr, 0.0001);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = toy_data(12, 3, 1);
        let model = toy_model(StreamKind::Raw, 2);
        let cfg = TrainConfig { lr: 0.0, max_epochs: 3, batch_utts: 4, ..TrainConfig::stream() };
        let (trained, hist) = train_stream(model.clone(), &data, &data[..6], &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(hist.epochs.windows(2).all(|w| w[0].val_accuracy == w[1].val_accuracy));
    }

    #[test]
    fn learns_toy_problem() {
        let data = toy_data(24, 3, 3);
        let cfg = TrainConfig { lr: 0.01, max_epochs: 30, batch_utts: 4, patience: 30, ..TrainConfig::stream() };
        let (trained, hist) = train_stream(toy_model(StreamKind::Raw, 4), &data, &data, &cfg).unwrap();
        assert!(hist.epochs.last().unwrap().train_loss < hist.epochs[0].train_loss);
        assert!(accuracy(&trained, &data).unwrap() >= 0.9);
    }

    #[test]
    fn infinite_clip_equals_no_clip() {
        let data = toy_data(6, 3, 5);
        let model = toy_model(StreamKind::Raw, 6);
        let batch = PaddedBatch::new(&data, (0..6).collect(), None).unwrap();
        let run = |clip| {
            let mut m = model.clone();
            let mut g = m.zeros_like();
            m.batch_loss_grad(&data, &batch, &mut g).unwrap();
            let cfg = TrainConfig { clip_threshold: clip, ..TrainConfig::stream() };
            Optimizer::new(&m, &cfg).step(&mut m, &mut g).unwrap();
            m
        };
        assert_eq!(run(None), run(Some(f64::INFINITY)));
        assert_ne!(run(None), run(Some(1e-6)));
    }

    #[test]
    fn fusion_zero_epochs_keeps_streams() {
        let data = toy_data(6, 3, 7);
        let raw = toy_model(StreamKind::Raw, 8);
        let diff = toy_model(StreamKind::Diff, 9);
        let cfg = TrainConfig { max_epochs: 0, ..TrainConfig::fusion() };
        let (fused, hist) = train_fusion(&raw, &diff, 3, &data, &data, &cfg).unwrap();
        assert_eq!(fused.raw, raw.stream);
        assert_eq!(fused.diff, diff.stream);
        assert!(hist.epochs.is_empty() && hist.best_epoch.is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = toy_data(6, 3, 7);
        let cfg = TrainConfig { max_epochs: 1, ..TrainConfig::stream() };
        assert!(train_stream(toy_model(StreamKind::Raw, 1), &data, &[], &cfg).is_err());
        let mut bad = data.clone();
        bad[0].label = 5;
        assert!(train_stream(toy_model(StreamKind::Raw, 1), &bad, &data, &cfg).is_err());
        assert!(TrainConfig { lr: f64::NAN, ..cfg }.validate().is_err());
    }
}
