//! Synthetic lip-motion corpus.
//!
//! Each class is a bright bar oscillating across the frame with a
//! class-specific orientation and frequency; each subject has its own brightness,
//! contrast, static background blobs and a small centre offset. Utterances
//! add a little phase and amplitude jitter plus Gaussian pixel noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{save_utterance, Frames};
use super::manifest::{Manifest, UtteranceRecord, MANIFEST_FILE};
use crate::error::{invalid, Result};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub subjects: usize,
    pub reps: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { classes: 4, subjects: 6, reps: 5, frames: 20, height: 26, width: 44, seed: 7, noise_std: 6.0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.subjects == 0 || self.reps == 0 {
            return Err(invalid("classes, subjects and reps must be at least 1"));
        }
        if self.frames < 2 {
            return Err(invalid(format!("need at least 2 frames per utterance, got {}", self.frames)));
        }
        if self.height < 4 || self.width < 4 {
            return Err(invalid(format!("frames of {}x{} are too small", self.height, self.width)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!("noise_std must be finite and non-negative, got {}", self.noise_std)));
        }
        Ok(())
    }

    pub fn num_utterances(&self) -> usize {
        self.classes * self.subjects * self.reps
    }
}

/// Motion pattern of a class; depends on the class alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMotion {
    /// Bar direction in radians.
    pub orientation: f64,
    /// Oscillations per utterance.
    pub frequency: f64,
    /// Peak displacement as a fraction of the smaller frame side.
    pub amplitude: f64,
}

/// Classes alternate between two bar orientations; pairs sharing an
/// orientation differ only in how fast the bar oscillates.
pub fn class_motion(label: usize, _classes: usize) -> ClassMotion {
    ClassMotion {
        orientation: PI / 4.0 + PI / 2.0 * (label % 2) as f64,
        frequency: 1.0 + 0.75 * (label / 2) as f64,
        amplitude: 0.22,
    }
}

/// Appearance signature of a subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectStyle {
    pub brightness: f64,
    pub contrast: f64,
    pub offset: (f64, f64),
    /// `(y, x, sigma, amplitude)` of static Gaussian blobs.
    pub blobs: Vec<(f64, f64, f64, f64)>,
}

pub fn subject_style(subject: usize, cfg: &SynthConfig) -> SubjectStyle {
    let mut rng = Rng::with_stream(cfg.seed, (1 << 32) | subject as u64);
    let brightness = rng.uniform_range(60.0, 110.0);
    let contrast = rng.uniform_range(70.0, 120.0);
    let offset = (rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0));
    let blobs = (0..3)
        .map(|_| {
            (
                rng.uniform_range(0.0, cfg.height as f64),
                rng.uniform_range(0.0, cfg.width as f64),
                rng.uniform_range(2.0, 5.0),
                rng.uniform_range(-35.0, 35.0),
            )
        })
        .collect();
    SubjectStyle { brightness, contrast, offset, blobs }
}

fn utterance_index(cfg: &SynthConfig, subject: usize, label: usize, rep: usize) -> usize {
    (subject * cfg.classes + label) * cfg.reps + rep
}

/// Renders one utterance deterministically from the config seed.
pub fn render_utterance(cfg: &SynthConfig, subject: usize, label: usize, rep: usize) -> Frames {
    let motion = class_motion(label, cfg.classes);
    let style = subject_style(subject, cfg);
    let mut rng = Rng::with_stream(cfg.seed, utterance_index(cfg, subject, label, rep) as u64 + 1);
    let phase = rng.uniform_range(-0.5, 0.5);
    let scale = rng.uniform_range(0.9, 1.1);

    let (h, w) = (cfg.height, cfg.width);
    let side = h.min(w) as f64;
    let cy = (h as f64 - 1.0) / 2.0 + style.offset.0;
    let cx = (w as f64 - 1.0) / 2.0 + style.offset.1;
    let (ny, nx) = (motion.orientation.cos(), -motion.orientation.sin());
    let bar_width = 2.0;

    let mut background = vec![style.brightness; h * w];
    for (i, b) in background.iter_mut().enumerate() {
        let (y, x) = ((i / w) as f64, (i % w) as f64);
        for &(by, bx, sigma, amp) in &style.blobs {
            let r2 = (y - by).powi(2) + (x - bx).powi(2);
            *b += amp * (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }

    let mut pixels = Vec::with_capacity(cfg.frames * h * w);
    for t in 0..cfg.frames {
        let tau = t as f64 / (cfg.frames - 1) as f64;
        let shift = motion.amplitude * scale * side * (2.0 * PI * motion.frequency * tau + phase).sin();
        for (i, &bg) in background.iter().enumerate() {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let dist = (y - cy) * ny + (x - cx) * nx - shift;
            let v = bg + style.contrast * (-dist * dist / (2.0 * bar_width * bar_width)).exp() + cfg.noise_std * rng.normal(0.0, 1.0);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Frames::new(cfg.frames, h, w, pixels).expect("validated dims")
}

/// Writes `manifest.jsonl` and `utts/sSS_cKK_rRR.vsru` files under `out_dir`.
pub fn synth_generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("utts"))?;
    let mut records = Vec::with_capacity(cfg.num_utterances());
    for s in 0..cfg.subjects {
        for k in 0..cfg.classes {
            for r in 0..cfg.reps {
                let path = format!("utts/s{:02}_c{k:02}_r{:02}.vsru", s + 1, r + 1);
                save_utterance(out_dir.join(&path), &render_utterance(cfg, s, k, r))?;
                records.push(UtteranceRecord { path, subject: format!("s{:02}", s + 1), label: k });
            }
        }
    }
    let manifest = Manifest {
        classes: (0..cfg.classes).map(|k| format!("c{k:02}")).collect(),
        height: cfg.height,
        width: cfg.width,
        protocol: Some("custom".into()),
        records,
    };
    fs::write(out_dir.join(MANIFEST_FILE), manifest.to_jsonl())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_motion_ignores_subject() {
        let cfg = SynthConfig::default();
        let a = render_utterance(&cfg, 0, 2, 0);
        let b = render_utterance(&cfg, 3, 2, 0);
        assert_ne!(a.pixels, b.pixels);
        assert_ne!(subject_style(0, &cfg), subject_style(3, &cfg));
        assert_eq!(class_motion(2, 4), class_motion(2, 4));
        assert_ne!(class_motion(1, 4), class_motion(2, 4));
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = SynthConfig { frames: 5, ..SynthConfig::default() };
        assert_eq!(render_utterance(&cfg, 1, 1, 1), render_utterance(&cfg, 1, 1, 1));
        assert_ne!(render_utterance(&cfg, 1, 1, 1), render_utterance(&cfg, 1, 1, 2));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SynthConfig { frames: 1, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { classes: 0, ..SynthConfig::default() }.validate().is_err());
    }
}
