//! Utterance-level accuracy, per-subject accuracy, confusion matrices,
//! repeated-run aggregation and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PreparedUtterance;
use crate::error::{invalid, Error, Result};
use crate::model::SequenceModel;
use crate::numerics::Real;

/// Anything that labels whole utterances.
pub trait UtteranceClassifier<S: Real> {
    fn num_classes(&self) -> usize;
    fn classify(&self, utt: &PreparedUtterance<S>) -> Result<usize>;
}

impl<S: Real, M: SequenceModel<S>> UtteranceClassifier<S> for M {
    fn num_classes(&self) -> usize {
        SequenceModel::num_classes(self)
    }

    fn classify(&self, utt: &PreparedUtterance<S>) -> Result<usize> {
        self.predict(utt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectAccuracy {
    pub n_utterances: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub model: String,
    pub n_utterances: usize,
    pub accuracy: f64,
    pub per_subject: BTreeMap<String, SubjectAccuracy>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Resolved configuration of the run that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl EvalReport {
    /// Builds a report from per-utterance truths, predictions and subjects.
    pub fn from_predictions(
        classes: usize,
        truth: &[usize],
        predicted: &[usize],
        subjects: &[&str],
        split: &str,
        model: &str,
    ) -> Result<Self> {
        if truth.is_empty() {
            return Err(invalid(format!("split `{split}` has no utterances")));
        }
        if truth.len() != predicted.len() || truth.len() != subjects.len() {
            return Err(invalid("truth, prediction and subject lists differ in length"));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        let mut per_subject: BTreeMap<String, SubjectAccuracy> = BTreeMap::new();
        let mut correct = 0;
        for ((&t, &p), &s) in truth.iter().zip(predicted).zip(subjects) {
            if t >= classes || p >= classes {
                return Err(invalid(format!("label pair ({t}, {p}) outside {classes} classes")));
            }
            confusion[t][p] += 1;
            let entry = per_subject
                .entry(s.to_string())
                .or_insert(SubjectAccuracy { n_utterances: 0, correct: 0, accuracy: 0.0 });
            entry.n_utterances += 1;
            if t == p {
                entry.correct += 1;
                correct += 1;
            }
        }
        for entry in per_subject.values_mut() {
            entry.accuracy = entry.correct as f64 / entry.n_utterances as f64;
        }
        Ok(EvalReport {
            split: split.to_string(),
            model: model.to_string(),
            n_utterances: truth.len(),
            accuracy: correct as f64 / truth.len() as f64,
            per_subject,
            confusion,
            run_config: None,
        })
    }

    /// Accuracy recomputed from the confusion matrix.
    pub fn confusion_accuracy(&self) -> f64 {
        let trace: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        let total: usize = self.confusion.iter().flatten().sum();
        trace as f64 / total as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Labels every utterance of a split with `model`.
pub fn evaluate<S: Real>(
    model: &impl UtteranceClassifier<S>,
    classes: usize,
    data: &[PreparedUtterance<S>],
    split: &str,
    model_id: &str,
) -> Result<EvalReport> {
    if model.num_classes() != classes {
        return Err(Error::MetadataMismatch(format!(
            "model has {} classes, dataset has {classes}",
            model.num_classes()
        )));
    }
    let predicted = data.iter().map(|u| model.classify(u)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = data.iter().map(|u| u.label).collect();
    let subjects: Vec<&str> = data.iter().map(|u| u.subject.as_str()).collect();
    EvalReport::from_predictions(classes, &truth, &predicted, &subjects, split, model_id)
}

/// Accuracy over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub accuracies: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; zero for one run).
    pub std: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl RunAggregate {
    pub fn from_accuracies(accuracies: &[f64], seeds: &[u64]) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(invalid("cannot aggregate zero runs"));
        }
        if accuracies.len() != seeds.len() {
            return Err(invalid("one seed per run is required"));
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(RunAggregate { accuracies: accuracies.to_vec(), seeds: seeds.to_vec(), mean, std, max, run_config: None })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("aggregate serializes")
    }
}

pub fn aggregate_runs(reports: &[EvalReport], seeds: &[u64]) -> Result<RunAggregate> {
    let accuracies: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    RunAggregate::from_accuracies(&accuracies, seeds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(invalid(format!("unknown format `{other}` (expected text, json or csv)"))),
        }
    }
}

/// Which optional sections a text report includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sections {
    pub per_subject: bool,
    pub confusion: bool,
}

impl Default for Sections {
    fn default() -> Self {
        Sections { per_subject: true, confusion: true }
    }
}

/// Percentage with one decimal, rounding halves away from zero.
pub fn percent(x: f64) -> String {
    let tenths = ((x * 1000.0) * 1e6).round() / 1e6;
    format!("{:.1}", tenths.round() / 10.0)
}

/// The `Mean (Std) | Max` cell group of a results table.
pub fn aggregate_row(agg: &RunAggregate) -> String {
    format!("{} ({}) | {}", percent(agg.mean), percent(agg.std), percent(agg.max))
}

pub fn render_report(report: &EvalReport, format: ReportFormat, sections: Sections) -> String {
    match format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => {
            let mut out = String::from("subject,n_utterances,accuracy\n");
            for (s, a) in &report.per_subject {
                let _ = writeln!(out, "{s},{},{}", a.n_utterances, a.accuracy);
            }
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "split: {}", report.split);
            let _ = writeln!(out, "model: {}", report.model);
            let _ = writeln!(out, "utterances: {}", report.n_utterances);
            let _ = writeln!(out, "accuracy: {}", percent(report.accuracy));
            if sections.per_subject && !report.per_subject.is_empty() {
                let _ = writeln!(out, "\nper-subject accuracy:");
                let width = report.per_subject.keys().map(String::len).max().unwrap_or(0);
                for (s, a) in &report.per_subject {
                    let _ = writeln!(out, "  {s:<width$}  {:>5}  (n = {})", percent(a.accuracy), a.n_utterances);
                }
            }
            if sections.confusion && !report.confusion.is_empty() {
                let _ = writeln!(out, "\nconfusion (rows true, columns predicted):");
                let width = report.confusion.iter().flatten().max().map_or(1, |m| m.to_string().len());
                for row in &report.confusion {
                    let cells: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
                    let _ = writeln!(out, "  {}", cells.join(" "));
                }
            }
            out
        }
    }
}

pub fn render_aggregate(agg: &RunAggregate, name: &str, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => agg.to_json() + "\n",
        ReportFormat::Csv => {
            let mut out = String::from("run,seed,accuracy\n");
            for (i, (s, a)) in agg.seeds.iter().zip(&agg.accuracies).enumerate() {
                let _ = writeln!(out, "{},{s},{a}", i + 1);
            }
            out
        }
        ReportFormat::Text => {
            let width = name.len().max(5);
            format!("{:<width$} | Mean (Std) | Max\n{name:<width$} | {}\n", "Model", aggregate_row(agg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_report() {
        let r = EvalReport::from_predictions(2, &[0, 0, 1], &[0, 1, 1], &["a", "a", "b"], "test", "m").unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(r.per_subject["a"].accuracy, 0.5);
        assert_eq!(r.per_subject["b"].accuracy, 1.0);
        assert_eq!(r.confusion_accuracy(), r.accuracy);
    }

    #[test]
    fn aggregate_fixture() {
        let a = RunAggregate::from_accuracies(&[0.9, 0.94], &[0, 1]).unwrap();
        assert!((a.mean - 0.92).abs() < 1e-12);
        assert!((a.std - 0.028284271247461926).abs() < 1e-9);
        assert_eq!(a.max, 0.94);
        let single = RunAggregate::from_accuracies(&[0.8], &[3]).unwrap();
        assert_eq!((single.mean, single.std, single.max), (0.8, 0.0, 0.8));
        assert_eq!(RunAggregate::from_accuracies(&[0.7; 4], &[0, 1, 2, 3]).unwrap().std, 0.0);
        assert!(RunAggregate::from_accuracies(&[], &[]).is_err());
    }

    #[test]
    fn table_row_format() {
        let a = RunAggregate { accuracies: vec![], seeds: vec![], mean: 0.936, std: 0.010, max: 0.956, run_config: None };
        assert_eq!(aggregate_row(&a), "93.6 (1.0) | 95.6");
        assert!(render_aggregate(&a, "raw+diff", ReportFormat::Text).contains("raw+diff | 93.6 (1.0) | 95.6"));
    }

    #[test]
    fn percent_rounds_half_away_from_zero() {
        assert_eq!(percent(0.9365), "93.7");
        assert_eq!(percent(0.9364), "93.6");
        assert_eq!(percent(0.0005), "0.1");
        assert_eq!(percent(1.0), "100.0");
    }

    #[test]
    fn sections_and_formats() {
        let r = EvalReport::from_predictions(2, &[0, 1], &[0, 1], &["s1", "s2"], "test", "m").unwrap();
        let text = render_report(&r, ReportFormat::Text, Sections::default());
        assert!(text.contains("accuracy: 100.0") && text.contains("per-subject") && text.contains("confusion"));
        let bare = render_report(&r, ReportFormat::Text, Sections { per_subject: false, confusion: false });
        assert!(!bare.contains("per-subject") && !bare.contains("confusion"));
        let mut empty = r.clone();
        empty.per_subject.clear();
        assert!(!render_report(&empty, ReportFormat::Text, Sections::default()).contains("per-subject"));
        assert_eq!(render_report(&r, ReportFormat::Csv, Sections::default()), "subject,n_utterances,accuracy\ns1,1,1\ns2,1,1\n");
        let json = render_report(&r, ReportFormat::Json, Sections::default());
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json() + "\n", json);
    }

    #[test]
    fn errors() {
        assert!(EvalReport::from_predictions(2, &[], &[], &[], "t", "m").is_err());
        assert!(EvalReport::from_predictions(2, &[2], &[0], &["a"], "t", "m").is_err());
    }
}
