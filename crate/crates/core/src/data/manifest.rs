//! JSON-lines dataset manifest.
//!
//! The first line is a header `{"classes": [...], "height": h, "width": w}`
//! (optionally with `"protocol"`); every further line is a record
//! `{"path": ..., "subject": ..., "label": k}` with `path` relative to the
//! manifest's directory.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::container::{load_utterance, Frames};
use super::preprocess::{preprocess_diff, preprocess_raw};
use super::PreparedUtterance;
use crate::error::{Error, Result};
use crate::numerics::Real;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    classes: Vec<String>,
    height: usize,
    width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    protocol: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub path: String,
    pub subject: String,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub height: usize,
    pub width: usize,
    pub protocol: Option<String>,
    pub records: Vec<UtteranceRecord>,
}

impl Manifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if self.height == 0 || self.width == 0 {
            return bad(format!("empty frame size {}x{}", self.height, self.width));
        }
        let mut paths = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.label >= self.classes.len() {
                return bad(format!("record {i}: label {} outside [0, {})", r.label, self.classes.len()));
            }
            if r.subject.is_empty() {
                return bad(format!("record {i}: empty subject"));
            }
            if !paths.insert(r.path.as_str()) {
                return bad(format!("record {i}: duplicate path `{}`", r.path));
            }
        }
        Ok(())
    }

    /// Distinct subjects ordered by trailing number, then by name.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.subject.as_str()).collect();
        let mut subjects: Vec<String> = set.into_iter().map(String::from).collect();
        subjects.sort_by(|a, b| (subject_number(a), a).cmp(&(subject_number(b), b)));
        subjects
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            classes: self.classes.clone(),
            height: self.height,
            width: self.width,
            protocol: self.protocol.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Manifest("empty manifest".into()))?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| Error::Manifest(format!("line 1: bad header: {e}")))?;
        let records = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<UtteranceRecord>>>()?;
        let m = Manifest {
            classes: header.classes,
            height: header.height,
            width: header.width,
            protocol: header.protocol,
            records,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Trailing decimal digits of a subject id (`"s06"` → 6).
pub fn subject_number(subject: &str) -> Option<u32> {
    let digits: String = subject.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

/// A manifest together with the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    /// Opens a dataset from a directory holding `manifest.jsonl` or from
    /// the manifest file itself.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", file.display())))?;
        let manifest = Manifest::from_jsonl(&text)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { root, manifest })
    }

    pub fn load_frames(&self, index: usize) -> Result<Frames> {
        let rec = &self.manifest.records[index];
        let frames = load_utterance(self.root.join(&rec.path))?;
        if (frames.height, frames.width) != (self.manifest.height, self.manifest.width) {
            return Err(Error::Manifest(format!(
                "{}: frames are {}x{}, manifest says {}x{}",
                rec.path, frames.height, frames.width, self.manifest.height, self.manifest.width
            )));
        }
        Ok(frames)
    }

    /// Loads and preprocesses the given records.
    pub fn prepare<S: Real>(&self, indices: &[usize]) -> Result<Vec<PreparedUtterance<S>>> {
        indices
            .iter()
            .map(|&i| {
                let frames = self.load_frames(i)?.to_tensor::<f64>();
                let rec = &self.manifest.records[i];
                Ok(PreparedUtterance {
                    raw: preprocess_raw(&frames)?.cast(),
                    diff: preprocess_diff(&frames)?.cast(),
                    label: rec.label,
                    subject: rec.subject.clone(),
                    path: rec.path.clone(),
                })
            })
            .collect()
    }
}
