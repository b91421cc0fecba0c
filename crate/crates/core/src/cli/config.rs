use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::SubjectSplit;
use crate::error::{invalid, Error, Result};
use crate::eval::ReportFormat;
use crate::layers::DeltaWindow;
use crate::model::{StreamArch, StreamKind};
use crate::rbm::PretrainConfig;
use crate::training::{Stage, TrainConfig};

/// Which models `repeat` trains in every run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Raw,
    Diff,
    Fusion,
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Pipeline::Raw),
            "diff" => Ok(Pipeline::Diff),
            "fusion" => Ok(Pipeline::Fusion),
            other => Err(invalid(format!("unknown pipeline `{other}` (expected raw, diff or fusion)"))),
        }
    }
}

/// Fully resolved settings of one command: defaults, then the JSON config
/// file, then command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub protocol: String,
    /// Subject lists for the `custom` protocol.
    pub subjects: SubjectSplit,
    pub stream: StreamKind,
    pub seed: u64,
    /// Share of training utterances held out when a protocol has no validation set.
    pub holdout: f64,

    pub encoder_sizes: Vec<usize>,
    pub hidden: usize,
    pub fusion_hidden: usize,
    pub delta_window: usize,

    pub pretrain: PretrainConfig,
    /// Pretrain encoders inside `repeat`.
    pub use_pretrain: bool,

    /// Learning rate; `None` takes the stage default.
    pub lr: Option<f64>,
    pub batch_utts: usize,
    pub patience: usize,
    pub clip_threshold: Option<f64>,
    pub max_epochs: usize,

    pub encoder: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    pub diff: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub split: String,

    pub runs: usize,
    pub pipeline: Pipeline,

    pub format: ReportFormat,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::stream();
        RunConfig {
            data: None,
            protocol: "custom".into(),
            subjects: SubjectSplit::default(),
            stream: StreamKind::Raw,
            seed: 0,
            holdout: crate::data::DEFAULT_HOLDOUT,
            encoder_sizes: StreamArch::DEFAULT_ENCODER.to_vec(),
            hidden: StreamArch::DEFAULT_HIDDEN,
            fusion_hidden: StreamArch::DEFAULT_HIDDEN,
            delta_window: DeltaWindow::default().theta,
            pretrain: PretrainConfig::default(),
            use_pretrain: false,
            lr: None,
            batch_utts: train.batch_utts,
            patience: train.patience,
            clip_threshold: train.clip_threshold,
            max_epochs: train.max_epochs,
            encoder: None,
            raw: None,
            diff: None,
            model: None,
            split: "test".into(),
            runs: 10,
            pipeline: Pipeline::Fusion,
            format: ReportFormat::Text,
            out: None,
        }
    }
}

/// Recursively overlays `over` onto `base`; objects merge key by key,
/// anything else replaces.
pub fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Resolves defaults ← `file` ← `flags`. Pretraining always uses the run seed.
    pub fn resolve(file: Option<&Path>, flags: Map<String, Value>) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
            let parsed: Value = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("config {} is not valid JSON: {e}", path.display())))?;
            if !parsed.is_object() {
                return Err(invalid(format!("config {} must hold a JSON object", path.display())));
            }
            merge_json(&mut value, parsed);
        }
        merge_json(&mut value, Value::Object(flags));
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| invalid(format!("bad configuration: {e}")))?;
        cfg.pretrain.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch(1)?.validate()?;
        self.pretrain.validate()?;
        if self.fusion_hidden == 0 {
            return Err(invalid("fusion_hidden must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(invalid(format!("holdout must lie in [0, 1), got {}", self.holdout)));
        }
        self.train_config(Stage::Stream).validate()
    }

    /// Stream architecture for frames of `input_dim` pixels.
    pub fn arch(&self, input_dim: usize) -> Result<StreamArch> {
        Ok(StreamArch {
            input_dim,
            encoder_sizes: self.encoder_sizes.clone(),
            hidden: self.hidden,
            delta: DeltaWindow::new(self.delta_window)?,
        })
    }

    pub fn train_config(&self, stage: Stage) -> TrainConfig {
        let defaults = TrainConfig::for_stage(stage);
        TrainConfig {
            lr: self.lr.unwrap_or(defaults.lr),
            batch_utts: self.batch_utts,
            patience: self.patience,
            clip_threshold: self.clip_threshold,
            max_epochs: self.max_epochs,
            seed: self.seed,
            ..defaults
        }
    }

    /// The configuration as embedded in artifacts (output paths excluded).
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.pretrain.seed = seed;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flags(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.json");
        fs::write(&file, r#"{"seed": 4, "hidden": 32, "pretrain": {"epochs": 3}}"#).unwrap();
        let cfg = RunConfig::resolve(Some(&file), flags(json!({"hidden": 64}))).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.hidden, 64);
        assert_eq!(cfg.pretrain.epochs, 3);
        assert_eq!(cfg.pretrain.batch, 100);
        assert_eq!(cfg.pretrain.seed, 4);
        assert_eq!(cfg.patience, 5);
    }

    #[test]
    fn stage_learning_rates() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train_config(Stage::Stream).lr, 3e-4);
        assert_eq!(cfg.train_config(Stage::Fusion).lr, 1e-4);
        let cfg = RunConfig { lr: Some(0.01), ..RunConfig::default() };
        assert_eq!(cfg.train_config(Stage::Fusion).lr, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(RunConfig::resolve(None, flags(json!({"hiden": 3}))).is_err());
        assert!(RunConfig::resolve(None, flags(json!({"hidden": 0}))).is_err());
        assert!(RunConfig::resolve(None, flags(json!({"stream": "rgb"}))).is_err());
    }

    #[test]
    fn echo_omits_output_path() {
        let cfg = RunConfig { out: Some("x.vsrm".into()), ..RunConfig::default() };
        assert!(cfg.echo().get("out").is_none());
        assert_eq!(cfg.echo()["batch_utts"], 10);
    }
}
