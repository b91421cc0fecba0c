use super::params::{join, ParamGroup, ParamMut, ParamRef, Parameterized};
use super::stream::{StreamKind, StreamNet};
use super::{padded_loss, SequenceModel};
use crate::data::PreparedUtterance;
use crate::error::{invalid, Error, Result};
use crate::layers::{Activation, Blstm, FcLayer};
use crate::numerics::{Real, Rng, Tensor};
use crate::training::PaddedBatch;

/// Raw and diff streams whose BLSTM outputs are concatenated per frame and
/// fed to a fusion BLSTM followed by a per-frame linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionNet<S: Real = f32> {
    pub raw: StreamNet<S>,
    pub diff: StreamNet<S>,
    pub fusion: Blstm<S>,
    pub out: FcLayer<S>,
}

impl<S: Real> FusionNet<S> {
    /// Takes over trained streams as they are; the fusion BLSTM (width
    /// `fusion_hidden` per direction) and output layer are Glorot-initialised.
    pub fn build(raw: StreamNet<S>, diff: StreamNet<S>, classes: usize, fusion_hidden: usize, rng: &mut Rng) -> Result<Self> {
        if raw.kind != StreamKind::Raw || diff.kind != StreamKind::Diff {
            return Err(invalid(format!(
                "fusion needs a raw and a diff stream, got {} and {}",
                raw.kind.as_str(),
                diff.kind.as_str()
            )));
        }
        if raw.arch().input_dim != diff.arch().input_dim {
            return Err(invalid("raw and diff streams disagree on input size"));
        }
        let width = raw.output_dim() + diff.output_dim();
        let fusion = Blstm::glorot(width, fusion_hidden, rng);
        let out = FcLayer::glorot(2 * fusion_hidden, classes, Activation::Linear, rng);
        Ok(FusionNet { raw, diff, fusion, out })
    }

    pub fn classes(&self) -> usize {
        self.out.out_dim()
    }

    /// Per-frame logits `[T × K]` for aligned raw and diff sequences.
    pub fn forward(&self, raw_seq: &Tensor<S>, diff_seq: &Tensor<S>) -> Result<Tensor<S>> {
        if raw_seq.rows() != diff_seq.rows() {
            return Err(Error::Shape { op: "fusion inputs", expected: vec![raw_seq.rows()], actual: vec![diff_seq.rows()] });
        }
        let r = self.raw.forward(raw_seq)?;
        let d = self.diff.forward(diff_seq)?;
        let (h, _) = self.fusion.run(&Tensor::concat_cols(&[&r, &d])?)?;
        self.out.forward(&h)
    }
}

impl<S: Real> Parameterized<S> for FusionNet<S> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        self.raw.collect(&join(prefix, "raw"), group, out);
        self.diff.collect(&join(prefix, "diff"), group, out);
        self.fusion.collect(&join(prefix, "fusion"), group, out);
        self.out.collect(&join(prefix, "out"), ParamGroup::Output, out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        self.raw.collect_mut(&join(prefix, "raw"), group, out);
        self.diff.collect_mut(&join(prefix, "diff"), group, out);
        self.fusion.collect_mut(&join(prefix, "fusion"), group, out);
        self.out.collect_mut(&join(prefix, "out"), ParamGroup::Output, out);
    }
}

impl<S: Real> SequenceModel<S> for FusionNet<S> {
    fn num_classes(&self) -> usize {
        self.classes()
    }

    fn logits(&self, utt: &PreparedUtterance<S>) -> Result<Tensor<S>> {
        self.forward(&utt.raw, &utt.diff)
    }

    fn batch_loss_grad(&self, data: &[PreparedUtterance<S>], batch: &PaddedBatch, grads: &mut Self) -> Result<f64> {
        let raw = self.raw.forward_many(&batch.sequences(data, StreamKind::Raw)?)?;
        let diff = self.diff.forward_many(&batch.sequences(data, StreamKind::Diff)?)?;
        let raw_w = self.raw.output_dim();
        let diff_w = self.diff.output_dim();

        let mut fused = Vec::with_capacity(raw.outputs.len());
        let mut caches = Vec::with_capacity(raw.outputs.len());
        let mut logits = Vec::with_capacity(raw.outputs.len());
        for (r, d) in raw.outputs.iter().zip(&diff.outputs) {
            if r.rows() != d.rows() {
                return Err(Error::Shape { op: "fusion inputs", expected: vec![r.rows()], actual: vec![d.rows()] });
            }
            let (h, cache) = self.fusion.run(&Tensor::concat_cols(&[r, d])?)?;
            logits.push(self.out.forward(&h)?);
            fused.push(h);
            caches.push(cache);
        }
        let (loss, d_logits) = padded_loss(&logits, batch)?;

        let mut d_raw = Vec::with_capacity(fused.len());
        let mut d_diff = Vec::with_capacity(fused.len());
        for (((h, y), d), cache) in fused.iter().zip(&logits).zip(&d_logits).zip(&caches) {
            let d_h = self.out.backward(h, y, d, &mut grads.out, true)?.expect("dx");
            let d_cat = self.fusion.backprop(cache, &d_h, &mut grads.fusion)?;
            let mut parts = d_cat.split_cols(&[raw_w, diff_w])?;
            d_diff.push(parts.pop().expect("diff part"));
            d_raw.push(parts.pop().expect("raw part"));
        }
        self.raw.backward_many(&raw, &d_raw, &mut grads.raw)?;
        self.diff.backward_many(&diff, &d_diff, &mut grads.diff)?;
        Ok(loss)
    }

    fn zeros_like(&self) -> Self {
        FusionNet {
            raw: self.raw.zeros_like(),
            diff: self.diff.zeros_like(),
            fusion: self.fusion.zeros_like(),
            out: self.out.zeros_like(),
        }
    }
}
