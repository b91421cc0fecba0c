use serde::{Deserialize, Serialize};

use super::params::{join, ParamGroup, ParamMut, ParamRef, Parameterized};
use super::{padded_loss, SequenceModel};
use crate::data::PreparedUtterance;
use crate::error::{invalid, Error, Result};
use crate::layers::{Activation, Blstm, BlstmCache, DeltaWindow, FcLayer};
use crate::numerics::{Real, Rng, Tensor};
use crate::training::PaddedBatch;

/// Which preprocessed view of an utterance a stream consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Raw,
    Diff,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Raw => "raw",
            StreamKind::Diff => "diff",
        }
    }
}

impl std::str::FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(StreamKind::Raw),
            "diff" => Ok(StreamKind::Diff),
            other => Err(invalid(format!("unknown stream kind `{other}` (expected raw or diff)"))),
        }
    }
}

/// Architecture of one stream: encoder sizes, Δ window and BLSTM width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamArch {
    pub input_dim: usize,
    /// Hidden sizes; the last entry is the linear bottleneck.
    pub encoder_sizes: Vec<usize>,
    pub hidden: usize,
    pub delta: DeltaWindow,
}

impl StreamArch {
    pub const DEFAULT_ENCODER: [usize; 4] = [2000, 1000, 500, 50];
    pub const DEFAULT_HIDDEN: usize = 250;

    pub fn new(input_dim: usize) -> Self {
        StreamArch {
            input_dim,
            encoder_sizes: Self::DEFAULT_ENCODER.to_vec(),
            hidden: Self::DEFAULT_HIDDEN,
            delta: DeltaWindow::default(),
        }
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_sizes.last().expect("encoder has layers")
    }

    /// BLSTM input width: bottleneck plus Δ and ΔΔ.
    pub fn feature_dim(&self) -> usize {
        3 * self.bottleneck()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.encoder_sizes.is_empty() || self.encoder_sizes.contains(&0) {
            return Err(invalid(format!("invalid stream architecture {self:?}")));
        }
        Ok(())
    }
}

/// Stack of FC layers; ReLU everywhere except the linear bottleneck.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<S: Real = f32> {
    pub layers: Vec<FcLayer<S>>,
}

/// Activations of every encoder layer; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct EncoderCache<S: Real> {
    acts: Vec<Tensor<S>>,
}

impl<S: Real> EncoderCache<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.acts.last().expect("non-empty cache")
    }
}

impl<S: Real> Encoder<S> {
    pub fn glorot(input_dim: usize, sizes: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input_dim;
        for (i, &size) in sizes.iter().enumerate() {
            let act = if i + 1 == sizes.len() { Activation::Linear } else { Activation::Relu };
            layers.push(FcLayer::glorot(fan_in, size, act, rng));
            fan_in = size;
        }
        Encoder { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Encoder { layers: self.layers.iter().map(FcLayer::zeros_like).collect() }
    }

    /// Checks the layer chain `input_dim → sizes[0] → …` and the activation pattern.
    pub fn check(&self, input_dim: usize, sizes: &[usize]) -> Result<()> {
        if self.layers.len() != sizes.len() {
            return Err(Error::MetadataMismatch(format!(
                "encoder has {} layers, expected {}",
                self.layers.len(),
                sizes.len()
            )));
        }
        let mut fan_in = input_dim;
        for (i, (layer, &size)) in self.layers.iter().zip(sizes).enumerate() {
            if layer.in_dim() != fan_in || layer.out_dim() != size {
                return Err(Error::MetadataMismatch(format!(
                    "encoder layer {i} is {}x{}, expected {size}x{fan_in}",
                    layer.out_dim(),
                    layer.in_dim()
                )));
            }
            fan_in = size;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<EncoderCache<S>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let y = layer.forward(acts.last().expect("input"))?;
            acts.push(y);
        }
        acts.last().expect("output").ensure_finite("encoder output")?;
        Ok(EncoderCache { acts })
    }

    /// Accumulates parameter gradients; the input gradient is not needed.
    pub fn backward(&self, cache: &EncoderCache<S>, d_out: &Tensor<S>, grads: &mut Encoder<S>) -> Result<()> {
        let mut d = d_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dx = layer.backward(&cache.acts[i], &cache.acts[i + 1], &d, &mut grads.layers[i], i > 0)?;
            if let Some(dx) = dx {
                d = dx;
            }
        }
        Ok(())
    }
}

impl<S: Real> Parameterized<S> for Encoder<S> {
    fn collect<'a>(&'a self, prefix: &str, _group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.collect(&join(prefix, &i.to_string()), ParamGroup::Encoder, out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, _group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.collect_mut(&join(prefix, &i.to_string()), ParamGroup::Encoder, out);
        }
    }
}

/// One stream: encoder → bottleneck ⊕ Δ ⊕ ΔΔ → BLSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamNet<S: Real = f32> {
    pub kind: StreamKind,
    pub encoder: Encoder<S>,
    pub delta: DeltaWindow,
    pub blstm: Blstm<S>,
}

/// Forward state for a group of sequences pushed through one stream.
#[derive(Debug)]
pub(crate) struct StreamBatchCache<S: Real> {
    encoder: EncoderCache<S>,
    spans: Vec<(usize, usize)>,
    blstm: Vec<BlstmCache<S>>,
    pub(crate) outputs: Vec<Tensor<S>>,
}

impl<S: Real> StreamNet<S> {
    pub fn arch(&self) -> StreamArch {
        StreamArch {
            input_dim: self.encoder.layers[0].in_dim(),
            encoder_sizes: self.encoder.layers.iter().map(FcLayer::out_dim).collect(),
            hidden: self.blstm.hidden(),
            delta: self.delta,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.blstm.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        StreamNet { kind: self.kind, encoder: self.encoder.zeros_like(), delta: self.delta, blstm: self.blstm.zeros_like() }
    }

    /// `[T × D]` frames to `[T × 2H]` BLSTM outputs.
    pub fn forward(&self, seq: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cache = self.forward_many(&[seq])?;
        Ok(cache.outputs.pop().expect("one output"))
    }

    /// Runs all frames of all sequences through the encoder as one matrix,
    /// then each sequence through Δ/ΔΔ and the BLSTM.
    pub(crate) fn forward_many(&self, seqs: &[&Tensor<S>]) -> Result<StreamBatchCache<S>> {
        if seqs.is_empty() {
            return Err(invalid("stream forward needs at least one sequence"));
        }
        let mut spans = Vec::with_capacity(seqs.len());
        let mut start = 0;
        for s in seqs {
            if s.rank() != 2 {
                return Err(Error::Shape { op: "stream input", expected: vec![0, 0], actual: s.dims().to_vec() });
            }
            spans.push((start, s.rows()));
            start += s.rows();
        }
        let stacked = Tensor::concat_rows(seqs)?;
        let encoder = self.encoder.forward(&stacked)?;
        let bottleneck = encoder.output();
        let mut blstm = Vec::with_capacity(seqs.len());
        let mut outputs = Vec::with_capacity(seqs.len());
        for &(s, len) in &spans {
            let feats = self.delta.append_derivatives(&bottleneck.slice_rows(s, s + len))?;
            let (out, cache) = self.blstm.run(&feats)?;
            blstm.push(cache);
            outputs.push(out);
        }
        Ok(StreamBatchCache { encoder, spans, blstm, outputs })
    }

    pub(crate) fn backward_many(&self, cache: &StreamBatchCache<S>, d_outputs: &[Tensor<S>], grads: &mut StreamNet<S>) -> Result<()> {
        let bottleneck = cache.encoder.output();
        let mut d_bottleneck = Tensor::zeros(bottleneck.dims());
        for ((&(s, len), bc), d_out) in cache.spans.iter().zip(&cache.blstm).zip(d_outputs) {
            let d_feats = self.blstm.backprop(bc, d_out, &mut grads.blstm)?;
            let d_b = self.delta.append_derivatives_backward(&d_feats)?;
            for t in 0..len {
                d_bottleneck.row_mut(s + t).copy_from_slice(d_b.row(t));
            }
        }
        self.encoder.backward(&cache.encoder, &d_bottleneck, &mut grads.encoder)
    }
}

impl<S: Real> Parameterized<S> for StreamNet<S> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        self.encoder.collect(&join(prefix, "encoder"), group, out);
        self.blstm.collect(&join(prefix, "blstm"), group, out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        self.encoder.collect_mut(&join(prefix, "encoder"), group, out);
        self.blstm.collect_mut(&join(prefix, "blstm"), group, out);
    }
}

/// A stream with its own per-frame linear softmax head, used for
/// single-stream training. The head is dropped when streams are fused.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamClassifier<S: Real = f32> {
    pub stream: StreamNet<S>,
    pub head: FcLayer<S>,
}

impl<S: Real> StreamClassifier<S> {
    /// Builds a stream for `classes` outputs. Encoder weights come from
    /// `encoder_init` (e.g. RBM pretraining) when given, Glorot otherwise;
    /// BLSTM and head are always Glorot-initialised.
    pub fn build(arch: &StreamArch, kind: StreamKind, classes: usize, encoder_init: Option<Encoder<S>>, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        if classes < 2 {
            return Err(invalid(format!("need at least 2 classes, got {classes}")));
        }
        let encoder = match encoder_init {
            Some(enc) => {
                enc.check(arch.input_dim, &arch.encoder_sizes)?;
                enc
            }
            None => Encoder::glorot(arch.input_dim, &arch.encoder_sizes, rng),
        };
        let blstm = Blstm::glorot(arch.feature_dim(), arch.hidden, rng);
        let head = FcLayer::glorot(2 * arch.hidden, classes, Activation::Linear, rng);
        Ok(StreamClassifier { stream: StreamNet { kind, encoder, delta: arch.delta, blstm }, head })
    }

    pub fn classes(&self) -> usize {
        self.head.out_dim()
    }
}

impl<S: Real> Parameterized<S> for StreamClassifier<S> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        self.stream.collect(&join(prefix, "stream"), group, out);
        self.head.collect(&join(prefix, "head"), ParamGroup::Output, out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        self.stream.collect_mut(&join(prefix, "stream"), group, out);
        self.head.collect_mut(&join(prefix, "head"), ParamGroup::Output, out);
    }
}

impl<S: Real> SequenceModel<S> for StreamClassifier<S> {
    fn num_classes(&self) -> usize {
        self.classes()
    }

    fn logits(&self, utt: &PreparedUtterance<S>) -> Result<Tensor<S>> {
        let out = self.stream.forward(utt.stream(self.stream.kind))?;
        self.head.forward(&out)
    }

    fn batch_loss_grad(&self, data: &[PreparedUtterance<S>], batch: &PaddedBatch, grads: &mut Self) -> Result<f64> {
        let seqs = batch.sequences(data, self.stream.kind)?;
        let cache = self.stream.forward_many(&seqs)?;
        let logits = cache.outputs.iter().map(|o| self.head.forward(o)).collect::<Result<Vec<_>>>()?;
        let (loss, d_logits) = padded_loss(&logits, batch)?;
        let mut d_outputs = Vec::with_capacity(logits.len());
        for ((out, y), d) in cache.outputs.iter().zip(&logits).zip(&d_logits) {
            d_outputs.push(self.head.backward(out, y, d, &mut grads.head, true)?.expect("dx"));
        }
        self.stream.backward_many(&cache, &d_outputs, &mut grads.stream)?;
        Ok(loss)
    }

    fn zeros_like(&self) -> Self {
        StreamClassifier { stream: self.stream.zeros_like(), head: self.head.zeros_like() }
    }
}
