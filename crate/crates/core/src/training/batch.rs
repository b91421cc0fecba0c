use crate::data::PreparedUtterance;
use crate::error::{invalid, Result};
use crate::model::StreamKind;
use crate::numerics::{Real, Rng, Tensor};

/// A mini-batch of utterances padded to a common length.
///
/// `labels` and `mask` are laid out `[B · max_len]`, utterance-major; every
/// frame of an utterance carries its label and padding frames are masked out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedBatch {
    /// Indices into the utterance slice the batch was built from.
    pub members: Vec<usize>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

impl PaddedBatch {
    /// Builds a batch; `pad_to` may only lengthen the padding.
    pub fn new<S: Real>(data: &[PreparedUtterance<S>], members: Vec<usize>, pad_to: Option<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("empty batch"));
        }
        let lengths: Vec<usize> = members
            .iter()
            .map(|&i| data.get(i).map(PreparedUtterance::len).ok_or_else(|| invalid(format!("utterance {i} out of range"))))
            .collect::<Result<_>>()?;
        let longest = *lengths.iter().max().expect("non-empty");
        let max_len = pad_to.unwrap_or(longest).max(longest);
        let mut labels = Vec::with_capacity(members.len() * max_len);
        let mut mask = Vec::with_capacity(members.len() * max_len);
        for (&i, &len) in members.iter().zip(&lengths) {
            labels.extend(std::iter::repeat_n(data[i].label, max_len));
            mask.extend((0..max_len).map(|t| t < len));
        }
        Ok(PaddedBatch { members, lengths, max_len, labels, mask })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn valid_frames(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Mask row of member `b`.
    pub fn frame_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.max_len..(b + 1) * self.max_len]
    }

    /// The members' unpadded input sequences for one stream.
    pub fn sequences<'a, S: Real>(&self, data: &'a [PreparedUtterance<S>], kind: StreamKind) -> Result<Vec<&'a Tensor<S>>> {
        self.members
            .iter()
            .zip(&self.lengths)
            .map(|(&i, &len)| {
                let seq = data.get(i).ok_or_else(|| invalid(format!("utterance {i} out of range")))?.stream(kind);
                if seq.rows() != len {
                    return Err(invalid(format!("utterance {i} has {} frames, batch expects {len}", seq.rows())));
                }
                Ok(seq)
            })
            .collect()
    }

    /// Zero-padded `[B × max_len × D]` copy of one stream's inputs.
    pub fn padded_inputs<S: Real>(&self, data: &[PreparedUtterance<S>], kind: StreamKind) -> Result<Tensor<S>> {
        let seqs = self.sequences(data, kind)?;
        let d = seqs[0].cols();
        let mut out = Tensor::zeros(&[self.len(), self.max_len, d]);
        for (b, seq) in seqs.iter().enumerate() {
            let start = b * self.max_len * d;
            out.as_mut_slice()[start..start + seq.len()].copy_from_slice(seq.as_slice());
        }
        Ok(out)
    }
}

/// Shuffles the utterances and cuts them into padded batches of
/// `batch_utts` (the last batch may be smaller).
pub fn make_batches<S: Real>(data: &[PreparedUtterance<S>], batch_utts: usize, rng: &mut Rng) -> Result<Vec<PaddedBatch>> {
    make_batches_padded(data, batch_utts, rng, 0)
}

/// As [`make_batches`], with `extra` additional padding frames per batch.
pub fn make_batches_padded<S: Real>(data: &[PreparedUtterance<S>], batch_utts: usize, rng: &mut Rng, extra: usize) -> Result<Vec<PaddedBatch>> {
    if batch_utts == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    if data.is_empty() {
        return Err(invalid("cannot batch an empty dataset"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    order
        .chunks(batch_utts)
        .map(|chunk| {
            let longest = chunk.iter().map(|&i| data[i].len()).max().expect("non-empty chunk");
            PaddedBatch::new(data, chunk.to_vec(), Some(longest + extra))
        })
        .collect()
}
