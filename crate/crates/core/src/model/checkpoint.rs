//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "VSRM"
//! version    u16
//! n_meta     u32      then n_meta × (u32 len, UTF-8 key, u32 len, UTF-8 value)
//! n_tensors  u32      then per tensor:
//!                     u32 name len, UTF-8 name, u32 rank, rank × u32 dims,
//!                     product(dims) × f32 values
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::params::Parameterized;
use super::stream::{Encoder, StreamArch, StreamClassifier, StreamKind, StreamNet};
use super::FusionNet;
use crate::error::{Error, Result};
use crate::layers::{Activation, Blstm, DeltaWindow, FcLayer};
use crate::numerics::{Real, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"VSRM";
pub const CHECKPOINT_VERSION: u16 = 1;

/// What a checkpoint holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    /// Pretrained encoder stack only.
    Encoder,
    /// Single stream with its classification head.
    Stream,
    /// Two-stream fusion model.
    Fusion,
}

impl CheckpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckpointKind::Encoder => "encoder",
            CheckpointKind::Stream => "stream",
            CheckpointKind::Fusion => "fusion",
        }
    }
}

impl FromStr for CheckpointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(CheckpointKind::Encoder),
            "stream" => Ok(CheckpointKind::Stream),
            "fusion" => Ok(CheckpointKind::Fusion),
            other => Err(Error::CorruptCheckpoint(format!("unknown checkpoint kind `{other}`"))),
        }
    }
}

/// Ordered metadata and named `f32` tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces a metadata entry, keeping insertion order.
    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.meta(key).ok_or_else(|| Error::CorruptCheckpoint(format!("missing metadata key `{key}`")))
    }

    pub fn parse_meta<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::CorruptCheckpoint(format!("bad value `{raw}` for metadata key `{key}`")))
    }

    pub fn kind(&self) -> Result<CheckpointKind> {
        self.require("kind")?.parse()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Errors unless the checkpoint is of `kind`.
    pub fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        let found = self.kind()?;
        if found != kind {
            return Err(Error::MetadataMismatch(format!(
                "expected a {} checkpoint, found {}",
                kind.as_str(),
                found.as_str()
            )));
        }
        Ok(())
    }

    /// Errors unless the checkpoint was trained for `classes` classes.
    pub fn expect_classes(&self, classes: usize) -> Result<()> {
        let found: usize = self.parse_meta("classes")?;
        if found != classes {
            return Err(Error::MetadataMismatch(format!("checkpoint has {found} classes, dataset has {classes}")));
        }
        Ok(())
    }

    /// Errors unless the checkpoint was built for `height × width` frames.
    pub fn expect_image_dims(&self, height: usize, width: usize) -> Result<()> {
        let h: usize = self.parse_meta("height")?;
        let w: usize = self.parse_meta("width")?;
        if (h, w) != (height, width) {
            return Err(Error::MetadataMismatch(format!("checkpoint expects {h}x{w} frames, dataset has {height}x{width}")));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.rank());
            for &d in t.dims() {
                put_u32(&mut out, d);
            }
            for &x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { expected: CHECKPOINT_VERSION, found: version });
        }
        let n_meta = r.u32()?;
        let mut metadata = Vec::new();
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            metadata.push((k, v));
        }
        let n_tensors = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u32()?;
            if !(1..=3).contains(&rank) {
                return Err(Error::CorruptCheckpoint(format!("tensor `{name}` has rank {rank}")));
            }
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let count = count.filter(|&c| c > 0 && c <= bytes.len() / 4).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("tensor `{name}` has implausible dims {dims:?}"))
            })?;
            let raw = r.take(count * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::from_vec(&dims, data).map_err(|e| Error::CorruptCheckpoint(format!("tensor `{name}`: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// A checkpoint of `kind` holding every parameter of `model` and no
    /// architecture metadata.
    pub fn from_parameters<S: Real>(kind: CheckpointKind, model: &impl Parameterized<S>) -> Self {
        let mut ckpt = Checkpoint::default();
        ckpt.set_meta("kind", kind.as_str());
        ckpt.tensors = model.params().into_iter().map(|p| (p.name, p.tensor.cast::<f32>())).collect();
        ckpt
    }

    /// Copies every stored tensor into the same-named parameter of `model`.
    /// Both name sets must match exactly and shapes must agree.
    pub fn fill_params<S: Real>(&self, model: &mut impl Parameterized<S>) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::MetadataMismatch(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let t = self
                .tensor(&p.name)
                .ok_or_else(|| Error::MetadataMismatch(format!("checkpoint lacks tensor `{}`", p.name)))?;
            if t.dims() != p.tensor.dims() {
                return Err(Error::MetadataMismatch(format!(
                    "tensor `{}` is {:?}, model expects {:?}",
                    p.name,
                    t.dims(),
                    p.tensor.dims()
                )));
            }
            *p.tensor = t.cast();
        }
        Ok(())
    }

    fn put_arch(&mut self, arch: &StreamArch) {
        self.set_meta("input_dim", arch.input_dim.to_string());
        self.set_meta("encoder_sizes", join_sizes(&arch.encoder_sizes));
        self.set_meta("hidden", arch.hidden.to_string());
        self.set_meta("delta_window", arch.delta.theta.to_string());
    }

    fn arch(&self) -> Result<StreamArch> {
        let encoder_sizes = self
            .require("encoder_sizes")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::CorruptCheckpoint("bad encoder_sizes".into()))?;
        let arch = StreamArch {
            input_dim: self.parse_meta("input_dim")?,
            encoder_sizes,
            hidden: self.parse_meta("hidden").unwrap_or(StreamArch::DEFAULT_HIDDEN),
            delta: DeltaWindow::new(self.parse_meta("delta_window").unwrap_or(2))?,
        };
        arch.validate().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        Ok(arch)
    }

    pub fn from_encoder<S: Real>(encoder: &Encoder<S>) -> Self {
        let mut ckpt = Self::from_parameters(CheckpointKind::Encoder, encoder);
        ckpt.set_meta("input_dim", encoder.layers[0].in_dim().to_string());
        ckpt.set_meta("encoder_sizes", join_sizes(&encoder.layers.iter().map(FcLayer::out_dim).collect::<Vec<_>>()));
        ckpt
    }

    pub fn to_encoder<S: Real>(&self) -> Result<Encoder<S>> {
        self.expect_kind(CheckpointKind::Encoder)?;
        let arch = self.arch()?;
        let mut enc = zero_encoder(&arch);
        self.fill_params(&mut enc)?;
        Ok(enc)
    }

    pub fn from_stream<S: Real>(model: &StreamClassifier<S>) -> Self {
        let mut ckpt = Self::from_parameters(CheckpointKind::Stream, model);
        ckpt.put_arch(&model.stream.arch());
        ckpt.set_meta("classes", model.classes().to_string());
        ckpt.set_meta("streams", model.stream.kind.as_str());
        ckpt
    }

    pub fn to_stream<S: Real>(&self) -> Result<StreamClassifier<S>> {
        self.expect_kind(CheckpointKind::Stream)?;
        let arch = self.arch()?;
        let kind: StreamKind = self.require("streams")?.parse()?;
        let classes: usize = self.parse_meta("classes")?;
        let mut model = StreamClassifier {
            stream: zero_stream(&arch, kind),
            head: FcLayer::zeros(2 * arch.hidden, classes, Activation::Linear),
        };
        self.fill_params(&mut model)?;
        Ok(model)
    }

    pub fn from_fusion<S: Real>(model: &FusionNet<S>) -> Self {
        let mut ckpt = Self::from_parameters(CheckpointKind::Fusion, model);
        ckpt.put_arch(&model.raw.arch());
        ckpt.set_meta("diff_hidden", model.diff.arch().hidden.to_string());
        ckpt.set_meta("fusion_hidden", model.fusion.hidden().to_string());
        ckpt.set_meta("classes", model.classes().to_string());
        ckpt.set_meta("streams", "raw,diff");
        ckpt
    }

    pub fn to_fusion<S: Real>(&self) -> Result<FusionNet<S>> {
        self.expect_kind(CheckpointKind::Fusion)?;
        let arch = self.arch()?;
        let diff_arch = StreamArch { hidden: self.parse_meta("diff_hidden")?, ..arch.clone() };
        let fusion_hidden: usize = self.parse_meta("fusion_hidden")?;
        let classes: usize = self.parse_meta("classes")?;
        let raw = zero_stream(&arch, StreamKind::Raw);
        let diff = zero_stream(&diff_arch, StreamKind::Diff);
        let width = raw.output_dim() + diff.output_dim();
        let mut model = FusionNet {
            raw,
            diff,
            fusion: Blstm::zeros(width, fusion_hidden),
            out: FcLayer::zeros(2 * fusion_hidden, classes, Activation::Linear),
        };
        self.fill_params(&mut model)?;
        Ok(model)
    }
}

fn zero_encoder<S: Real>(arch: &StreamArch) -> Encoder<S> {
    let mut layers = Vec::new();
    let mut fan_in = arch.input_dim;
    for (i, &size) in arch.encoder_sizes.iter().enumerate() {
        let act = if i + 1 == arch.encoder_sizes.len() { Activation::Linear } else { Activation::Relu };
        layers.push(FcLayer::zeros(fan_in, size, act));
        fan_in = size;
    }
    Encoder { layers }
}

fn zero_stream<S: Real>(arch: &StreamArch, kind: StreamKind) -> StreamNet<S> {
    StreamNet {
        kind,
        encoder: zero_encoder(arch),
        delta: arch.delta,
        blstm: Blstm::zeros(arch.feature_dim(), arch.hidden),
    }
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!(
                "unexpected end of data: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::CorruptCheckpoint("invalid UTF-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn tiny_arch() -> StreamArch {
        StreamArch { input_dim: 6, encoder_sizes: vec![5, 4, 2], hidden: 3, delta: DeltaWindow::default() }
    }

    #[test]
    fn stream_round_trip_is_bit_exact() {
        let mut rng = Rng::new(1);
        let model = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Diff, 4, None, &mut rng).unwrap();
        let mut ckpt = Checkpoint::from_stream(&model);
        ckpt.set_meta("seed", "1");
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.to_stream::<f32>().unwrap(), model);
        assert_eq!(Checkpoint::from_stream(&loaded.to_stream::<f32>().unwrap()).tensors, ckpt.tensors);
        assert_eq!(loaded.to_bytes(), bytes);
    }

    #[test]
    fn fusion_round_trip() {
        let mut rng = Rng::new(2);
        let raw = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Raw, 3, None, &mut rng).unwrap();
        let diff = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Diff, 3, None, &mut rng).unwrap();
        let fused = FusionNet::build(raw.stream, diff.stream, 3, 2, &mut rng).unwrap();
        let ckpt = Checkpoint::from_fusion(&fused);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap().to_fusion::<f32>().unwrap();
        assert_eq!(back, fused);
    }

    #[test]
    fn truncated_and_corrupt_files() {
        let mut rng = Rng::new(3);
        let model = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Raw, 2, None, &mut rng).unwrap();
        let bytes = Checkpoint::from_stream(&model).to_bytes();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CorruptCheckpoint(_)), "cut {cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::UnsupportedVersion { found: 9, .. })));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn class_count_mismatch() {
        let mut rng = Rng::new(4);
        let model = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Raw, 10, None, &mut rng).unwrap();
        let ckpt = Checkpoint::from_stream(&model);
        assert!(ckpt.expect_classes(10).is_ok());
        assert!(matches!(ckpt.expect_classes(26), Err(Error::MetadataMismatch(_))));
        assert!(matches!(ckpt.to_fusion::<f32>(), Err(Error::MetadataMismatch(_))));
    }

    #[test]
    fn inconsistent_tensor_shape_is_rejected() {
        let mut rng = Rng::new(5);
        let model = StreamClassifier::<f32>::build(&tiny_arch(), StreamKind::Raw, 2, None, &mut rng).unwrap();
        let mut ckpt = Checkpoint::from_stream(&model);
        ckpt.set_meta("hidden", "4");
        assert!(matches!(ckpt.to_stream::<f32>(), Err(Error::MetadataMismatch(_))));
    }
}
