//! Stream and fusion networks, utterance labelling by majority vote, and
//! checkpoints.

mod checkpoint;
mod fusion;
mod params;
mod stream;

pub use checkpoint::{Checkpoint, CheckpointKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fusion::FusionNet;
pub use params::{ParamGroup, ParamMut, ParamRef, Parameterized};
pub use stream::{Encoder, EncoderCache, StreamArch, StreamClassifier, StreamKind, StreamNet};

use crate::data::PreparedUtterance;
use crate::error::Result;
use crate::layers::{softmax_rows, softmax_xent};
use crate::numerics::{Real, Tensor};
use crate::training::PaddedBatch;

/// A trainable per-frame sequence classifier.
pub trait SequenceModel<S: Real>: Parameterized<S> + Clone {
    fn num_classes(&self) -> usize;

    /// Per-frame logits `[T × K]` for one utterance.
    fn logits(&self, utt: &PreparedUtterance<S>) -> Result<Tensor<S>>;

    /// Forward and backward pass over one padded batch. Returns the mean
    /// cross-entropy over valid frames and accumulates gradients into `grads`.
    fn batch_loss_grad(&self, data: &[PreparedUtterance<S>], batch: &PaddedBatch, grads: &mut Self) -> Result<f64>;

    /// Same architecture with every parameter zero; used as gradient buffer.
    fn zeros_like(&self) -> Self;

    /// Utterance label by majority vote over frames.
    fn predict(&self, utt: &PreparedUtterance<S>) -> Result<usize> {
        Ok(predict_label(&self.logits(utt)?))
    }
}

/// Places per-utterance logits into the batch's padded `[B·T_max × K]`
/// layout, applies the masked cross-entropy and slices the gradient back.
pub(crate) fn padded_loss<S: Real>(logits: &[Tensor<S>], batch: &PaddedBatch) -> Result<(f64, Vec<Tensor<S>>)> {
    let k = logits[0].cols();
    let t_max = batch.max_len;
    let mut padded = Tensor::zeros(&[logits.len() * t_max, k]);
    for (b, l) in logits.iter().enumerate() {
        for t in 0..l.rows() {
            padded.row_mut(b * t_max + t).copy_from_slice(l.row(t));
        }
    }
    let (loss, grad) = softmax_xent(&padded, &batch.labels, &batch.mask)?;
    let d = logits
        .iter()
        .enumerate()
        .map(|(b, l)| grad.slice_rows(b * t_max, b * t_max + l.rows()))
        .collect();
    Ok((loss, d))
}

/// Majority vote over per-frame argmaxes.
///
/// Ties between modal classes go to the larger summed softmax posterior;
/// an exact tie on that too goes to the smaller class index.
pub fn predict_label<S: Real>(logits: &Tensor<S>) -> usize {
    let k = logits.cols();
    let mut votes = vec![0usize; k];
    for t in 0..logits.rows() {
        let row = logits.row(t);
        let mut best = 0;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        votes[best] += 1;
    }
    let top = *votes.iter().max().expect("at least one class");
    let tied: Vec<usize> = (0..k).filter(|&j| votes[j] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let posteriors = softmax_rows(logits);
    let mass = |j: usize| (0..posteriors.rows()).map(|t| posteriors.row(t)[j].f64()).sum::<f64>();
    let mut winner = tied[0];
    let mut winner_mass = mass(winner);
    for &j in &tied[1..] {
        let m = mass(j);
        if m > winner_mass {
            winner = j;
            winner_mass = m;
        }
    }
    winner
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[&[f64]]) -> Tensor<f64> {
        let k = rows[0].len();
        Tensor::from_vec(&[rows.len(), k], rows.concat()).unwrap()
    }

    #[test]
    fn strict_majority() {
        let l = logits(&[&[2.0, 0.0], &[1.0, 0.5], &[0.0, 3.0]]);
        assert_eq!(predict_label(&l), 0);
    }

    #[test]
    fn tie_broken_by_posterior_mass() {
        // Frame 0 votes 0 with p = [0.6, 0.4], frame 1 votes 1 with p = [0.3, 0.7]:
        // mean posterior 0.45 for class 0, 0.55 for class 1.
        let l = logits(&[&[0.6f64.ln(), 0.4f64.ln()], &[0.3f64.ln(), 0.7f64.ln()]]);
        assert_eq!(predict_label(&l), 1);
        let swapped = logits(&[&[0.7f64.ln(), 0.3f64.ln()], &[0.4f64.ln(), 0.6f64.ln()]]);
        assert_eq!(predict_label(&swapped), 0);
    }

    #[test]
    fn exact_tie_goes_to_smaller_index() {
        let l = logits(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(predict_label(&l), 0);
    }

    #[test]
    fn single_frame() {
        assert_eq!(predict_label(&logits(&[&[0.1, 0.4, 0.2]])), 1);
    }

    #[test]
    fn invariant_to_per_frame_shift() {
        let l = logits(&[&[0.3, 0.1, 0.2], &[0.0, 0.9, 0.1], &[0.2, 0.6, 0.5], &[1.0, 0.0, 0.1]]);
        let shifted = logits(&[&[10.3, 10.1, 10.2], &[-5.0, -4.1, -4.9], &[0.2, 0.6, 0.5], &[4.0, 3.0, 3.1]]);
        assert_eq!(predict_label(&l), predict_label(&shifted));
    }
}
