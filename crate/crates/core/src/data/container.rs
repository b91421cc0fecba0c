//! Utterance container: `VSRU`, u16 version, u32 T, u32 height, u32 width
//! (little-endian), then `T·height·width` grayscale bytes, frame-major and
//! row-major within a frame.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numerics::{Real, Tensor};

pub const UTTERANCE_MAGIC: [u8; 4] = *b"VSRU";
pub const UTTERANCE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12;

/// 8-bit grayscale frames of one utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frames {
    pub len: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl Frames {
    pub fn new(len: usize, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if len < 2 {
            return Err(invalid(format!("utterance has {len} frames, need at least 2")));
        }
        if height == 0 || width == 0 {
            return Err(invalid(format!("frame size {height}x{width} is empty")));
        }
        let expected = len * height * width;
        if pixels.len() != expected {
            return Err(Error::PayloadSize { expected, actual: pixels.len() });
        }
        Ok(Frames { len, height, width, pixels })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let d = self.frame_len();
        &self.pixels[t * d..(t + 1) * d]
    }

    /// Pixels as a `[T × height × width]` tensor.
    pub fn to_tensor<S: Real>(&self) -> Tensor<S> {
        let data = self.pixels.iter().map(|&p| S::of(f64::from(p))).collect();
        Tensor::from_vec(&[self.len, self.height, self.width], data).expect("dims match payload")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        out.extend_from_slice(&UTTERANCE_MAGIC);
        out.extend_from_slice(&UTTERANCE_VERSION.to_le_bytes());
        for v in [self.len, self.height, self.width] {
            out.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::PayloadSize { expected: HEADER_LEN, actual: bytes.len() });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != UTTERANCE_MAGIC {
            return Err(Error::BadMagic { expected: UTTERANCE_MAGIC, found: magic });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::PayloadSize { expected: HEADER_LEN, actual: bytes.len() });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != UTTERANCE_VERSION {
            return Err(Error::UnsupportedVersion { expected: UTTERANCE_VERSION, found: version });
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (len, height, width) = (dim(0), dim(1), dim(2));
        let expected = len
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| invalid(format!("utterance dims {len}x{height}x{width} overflow")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::PayloadSize { expected, actual: payload.len() });
        }
        Frames::new(len, height, width, payload.to_vec())
    }
}

pub fn load_utterance(path: impl AsRef<Path>) -> Result<Frames> {
    Frames::from_bytes(&fs::read(path)?)
}

pub fn save_utterance(path: impl AsRef<Path>, frames: &Frames) -> Result<()> {
    fs::write(path, frames.to_bytes())?;
    Ok(())
}
