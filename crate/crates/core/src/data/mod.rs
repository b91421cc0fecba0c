//! Utterance containers, manifests, preprocessing, evaluation protocols
//! and the synthetic corpus generator.

mod container;
mod manifest;
mod preprocess;
mod protocol;
mod synth;

pub use container::{load_utterance, save_utterance, Frames, UTTERANCE_MAGIC, UTTERANCE_VERSION};
pub use manifest::{subject_number, Dataset, Manifest, UtteranceRecord, MANIFEST_FILE};
pub use preprocess::{preprocess_diff, preprocess_raw, ZERO_VARIANCE};
pub use protocol::{
    conforming_manifest, make_split, roi_preset, Protocol, ProtocolSplit, SubjectSplit, DEFAULT_HOLDOUT,
    OULU_TEST_SUBJECTS,
};
pub use synth::{class_motion, render_utterance, subject_style, synth_generate, ClassMotion, SubjectStyle, SynthConfig};

use crate::model::StreamKind;
use crate::numerics::{Real, Tensor};

/// An utterance ready for the network: both stream inputs as `[T × D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedUtterance<S: Real = f32> {
    pub raw: Tensor<S>,
    pub diff: Tensor<S>,
    pub label: usize,
    pub subject: String,
    pub path: String,
}

impl<S: Real> PreparedUtterance<S> {
    pub fn stream(&self, kind: StreamKind) -> &Tensor<S> {
        match kind {
            StreamKind::Raw => &self.raw,
            StreamKind::Diff => &self.diff,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn cast<T: Real>(&self) -> PreparedUtterance<T> {
        PreparedUtterance {
            raw: self.raw.cast(),
            diff: self.diff.cast(),
            label: self.label,
            subject: self.subject.clone(),
            path: self.path.clone(),
        }
    }
}
