//! Train/validation/test splits for the supported evaluation protocols.

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::{subject_number, Manifest, UtteranceRecord};
use crate::error::{invalid, Error, Result};
use crate::numerics::Rng;

/// Designated OuluVS2 test speakers.
pub const OULU_TEST_SUBJECTS: [u32; 12] = [6, 8, 9, 15, 26, 30, 34, 43, 44, 49, 51, 52];

/// Fraction of training utterances held out for early stopping when a
/// protocol defines no validation set.
pub const DEFAULT_HOLDOUT: f64 = 0.1;

/// Mouth ROI size `(height, width)` for a named corpus.
pub fn roi_preset(name: &str) -> Option<(usize, usize)> {
    match name {
        "oulu" => Some((26, 44)),
        "cuave" => Some((30, 50)),
        "avletters" => Some((30, 40)),
        "avletters2" => Some((30, 45)),
        _ => None,
    }
}

/// Explicit subject lists for the `custom` protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// 12 designated test speakers; the other 40 split 35/5 at random.
    Oulu,
    /// Odd-numbered subjects test; even-numbered split 12 train / 6 validation.
    Cuave,
    /// Per subject and class, the first two repetitions train and the third tests.
    AvLetters,
    /// Five-fold rotation over five speakers (3 train / 1 validation / 1 test).
    AvLetters2 { fold: usize },
    /// Explicit subject lists; empty lists mean "last subject tests, the one
    /// before validates, the rest train".
    Custom(SubjectSplit),
}

impl Protocol {
    pub fn name(&self) -> String {
        match self {
            Protocol::Oulu => "oulu".into(),
            Protocol::Cuave => "cuave".into(),
            Protocol::AvLetters => "avletters".into(),
            Protocol::AvLetters2 { fold } => format!("avletters2-fold-{fold}"),
            Protocol::Custom(_) => "custom".into(),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oulu" => Ok(Protocol::Oulu),
            "cuave" => Ok(Protocol::Cuave),
            "avletters" => Ok(Protocol::AvLetters),
            "custom" => Ok(Protocol::Custom(SubjectSplit::default())),
            _ => {
                let fold = s
                    .strip_prefix("avletters2-fold-")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| (1..=5).contains(k))
                    .ok_or_else(|| {
                        invalid(format!(
                            "unknown protocol `{s}` (expected oulu, cuave, avletters, avletters2-fold-1..5 or custom)"
                        ))
                    })?;
                Ok(Protocol::AvLetters2 { fold })
            }
        }
    }
}

/// Record indices of each partition, in manifest order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSplit {
    pub protocol: String,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl ProtocolSplit {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    /// Moves a seeded `fraction` of the training utterances (at least one)
    /// into validation if the split has no validation set.
    pub fn with_holdout(mut self, fraction: f64, rng: &mut Rng) -> Self {
        if !self.validation.is_empty() || self.train.len() < 2 {
            return self;
        }
        let mut pool = self.train.clone();
        rng.shuffle(&mut pool);
        let n = ((fraction * pool.len() as f64).ceil() as usize).clamp(1, pool.len() - 1);
        let mut validation = pool[..n].to_vec();
        let mut train = pool[n..].to_vec();
        validation.sort_unstable();
        train.sort_unstable();
        self.train = train;
        self.validation = validation;
        self
    }

    /// True if no subject appears in more than one partition.
    pub fn subject_disjoint(&self, manifest: &Manifest) -> bool {
        let subjects = |idx: &[usize]| idx.iter().map(|&i| manifest.records[i].subject.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (subjects(&self.train), subjects(&self.validation), subjects(&self.test));
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

fn mismatch(protocol: &Protocol, reason: impl Into<String>) -> Error {
    Error::Protocol { protocol: protocol.name(), reason: reason.into() }
}

fn by_subjects(manifest: &Manifest, protocol: &Protocol, train: &[String], validation: &[String], test: &[String]) -> ProtocolSplit {
    let pick = |set: &[String]| {
        let set: HashSet<&str> = set.iter().map(String::as_str).collect();
        manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| set.contains(r.subject.as_str()))
            .map(|(i, _)| i)
            .collect()
    };
    ProtocolSplit { protocol: protocol.name(), train: pick(train), validation: pick(validation), test: pick(test) }
}

fn numbered_subjects(manifest: &Manifest, protocol: &Protocol) -> Result<Vec<(u32, String)>> {
    manifest
        .subjects()
        .into_iter()
        .map(|s| match subject_number(&s) {
            Some(n) => Ok((n, s)),
            None => Err(mismatch(protocol, format!("subject `{s}` has no number"))),
        })
        .collect()
}

/// Splits `manifest` according to `protocol`. Only the Oulu protocol
/// consumes randomness.
pub fn make_split(manifest: &Manifest, protocol: &Protocol, rng: &mut Rng) -> Result<ProtocolSplit> {
    let subjects = manifest.subjects();
    match protocol {
        Protocol::Oulu => {
            let numbered = numbered_subjects(manifest, protocol)?;
            if numbered.len() != 52 {
                return Err(mismatch(protocol, format!("expected 52 subjects, found {}", numbered.len())));
            }
            let (test, mut rest): (Vec<_>, Vec<_>) = numbered.into_iter().partition(|(n, _)| OULU_TEST_SUBJECTS.contains(n));
            if test.len() != OULU_TEST_SUBJECTS.len() {
                return Err(mismatch(protocol, format!("only {} of the 12 designated test subjects present", test.len())));
            }
            rng.shuffle(&mut rest);
            let names = |v: &[(u32, String)]| v.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>();
            Ok(by_subjects(manifest, protocol, &names(&rest[..35]), &names(&rest[35..]), &names(&test)))
        }
        Protocol::Cuave => {
            let numbered = numbered_subjects(manifest, protocol)?;
            if numbered.len() != 36 {
                return Err(mismatch(protocol, format!("expected 36 subjects, found {}", numbered.len())));
            }
            let (odd, even): (Vec<_>, Vec<_>) = numbered.into_iter().partition(|(n, _)| n % 2 == 1);
            if odd.len() != 18 {
                return Err(mismatch(protocol, format!("expected 18 odd-numbered subjects, found {}", odd.len())));
            }
            let names = |v: &[(u32, String)]| v.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>();
            Ok(by_subjects(manifest, protocol, &names(&even[..12]), &names(&even[12..]), &names(&odd)))
        }
        Protocol::AvLetters => {
            let mut groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
            for (i, r) in manifest.records.iter().enumerate() {
                groups.entry((r.subject.as_str(), r.label)).or_default().push(i);
            }
            let mut split = ProtocolSplit { protocol: protocol.name(), train: vec![], validation: vec![], test: vec![] };
            for ((subject, label), idx) in groups {
                if idx.len() != 3 {
                    return Err(mismatch(
                        protocol,
                        format!("subject {subject}, class {label} has {} repetitions, expected 3", idx.len()),
                    ));
                }
                split.train.extend_from_slice(&idx[..2]);
                split.test.push(idx[2]);
            }
            split.train.sort_unstable();
            split.test.sort_unstable();
            Ok(split)
        }
        Protocol::AvLetters2 { fold } => {
            if subjects.len() != 5 {
                return Err(mismatch(protocol, format!("expected 5 subjects, found {}", subjects.len())));
            }
            if !(1..=5).contains(fold) {
                return Err(mismatch(protocol, format!("fold {fold} outside 1..=5")));
            }
            let test = fold - 1;
            let val = fold % 5;
            let train: Vec<String> =
                (0..5).filter(|&i| i != test && i != val).map(|i| subjects[i].clone()).collect();
            Ok(by_subjects(manifest, protocol, &train, &subjects[val..=val], &subjects[test..=test]))
        }
        Protocol::Custom(lists) => {
            if lists.train.is_empty() && lists.validation.is_empty() && lists.test.is_empty() {
                let n = subjects.len();
                if n < 3 {
                    return Err(mismatch(protocol, format!("default split needs at least 3 subjects, found {n}")));
                }
                return Ok(by_subjects(manifest, protocol, &subjects[..n - 2], &subjects[n - 2..n - 1], &subjects[n - 1..]));
            }
            let known: HashSet<&str> = subjects.iter().map(String::as_str).collect();
            let mut seen = HashSet::new();
            for s in lists.train.iter().chain(&lists.validation).chain(&lists.test) {
                if !known.contains(s.as_str()) {
                    return Err(mismatch(protocol, format!("unknown subject `{s}`")));
                }
                if !seen.insert(s.as_str()) {
                    return Err(mismatch(protocol, format!("subject `{s}` listed twice")));
                }
            }
            if lists.train.is_empty() || lists.test.is_empty() {
                return Err(mismatch(protocol, "train and test subject lists must be non-empty"));
            }
            Ok(by_subjects(manifest, protocol, &lists.train, &lists.validation, &lists.test))
        }
    }
}

/// A file-less manifest with the subject/class/repetition structure the
/// named protocol expects. The CUAVE variant lacks the last repetition of
/// every digit for subject 2, giving 590 training utterances.
pub fn conforming_manifest(protocol: &Protocol) -> Manifest {
    let (subjects, classes, reps, roi): (Vec<u32>, usize, usize, &str) = match protocol {
        Protocol::Oulu => ((1..=52).collect(), 10, 3, "oulu"),
        Protocol::Cuave => ((1..=36).collect(), 10, 5, "cuave"),
        Protocol::AvLetters => ((1..=10).collect(), 26, 3, "avletters"),
        Protocol::AvLetters2 { .. } => ((1..=5).collect(), 26, 7, "avletters2"),
        Protocol::Custom(_) => ((1..=6).collect(), 4, 5, "oulu"),
    };
    let (height, width) = roi_preset(roi).expect("known preset");
    let mut records = Vec::new();
    for &s in &subjects {
        for label in 0..classes {
            for r in 0..reps {
                if matches!(protocol, Protocol::Cuave) && s == 2 && r == reps - 1 {
                    continue;
                }
                records.push(UtteranceRecord {
                    path: format!("s{s:02}/c{label:02}_r{:02}.vsru", r + 1),
                    subject: format!("s{s:02}"),
                    label,
                });
            }
        }
    }
    Manifest {
        classes: (0..classes).map(|k| format!("c{k:02}")).collect(),
        height,
        width,
        protocol: Some(protocol.name()),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(p: &str, seed: u64) -> (Manifest, ProtocolSplit) {
        let protocol: Protocol = p.parse().unwrap();
        let m = conforming_manifest(&protocol);
        let s = make_split(&m, &protocol, &mut Rng::new(seed)).unwrap();
        (m, s)
    }

    #[test]
    fn conforming_counts() {
        assert_eq!(split("oulu", 0).1.counts(), (1050, 150, 360));
        assert_eq!(split("cuave", 0).1.counts(), (590, 300, 900));
        assert_eq!(split("avletters", 0).1.counts(), (520, 0, 260));
        for k in 1..=5 {
            assert_eq!(split(&format!("avletters2-fold-{k}"), 0).1.counts(), (546, 182, 182));
        }
    }

    #[test]
    fn subject_independent_protocols_are_disjoint() {
        for p in ["oulu", "cuave", "avletters2-fold-3", "custom"] {
            let (m, s) = split(p, 3);
            assert!(s.subject_disjoint(&m), "{p}");
        }
        let (m, s) = split("avletters", 0);
        assert!(!s.subject_disjoint(&m));
    }

    #[test]
    fn oulu_validation_depends_on_seed_only() {
        assert_eq!(split("oulu", 5).1, split("oulu", 5).1);
        assert_ne!(split("oulu", 5).1.validation, split("oulu", 6).1.validation);
        assert_eq!(split("oulu", 5).1.test, split("oulu", 6).1.test);
    }

    #[test]
    fn avletters2_folds_rotate_test_subject() {
        let tests: HashSet<String> = (1..=5)
            .map(|k| {
                let (m, s) = split(&format!("avletters2-fold-{k}"), 0);
                m.records[s.test[0]].subject.clone()
            })
            .collect();
        assert_eq!(tests.len(), 5);
    }

    #[test]
    fn holdout_fills_empty_validation() {
        let (_, s) = split("avletters", 0);
        let s = s.with_holdout(DEFAULT_HOLDOUT, &mut Rng::new(1));
        assert_eq!(s.counts(), (468, 52, 260));
        let all: HashSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        assert_eq!(all.len(), 780);
    }

    #[test]
    fn custom_default_and_errors() {
        assert_eq!(split("custom", 0).1.counts(), (80, 20, 20));
        let m = conforming_manifest(&Protocol::Oulu);
        assert!(matches!(make_split(&m, &Protocol::Cuave, &mut Rng::new(0)), Err(Error::Protocol { .. })));
        let lists = SubjectSplit { train: vec!["s01".into()], validation: vec![], test: vec!["s99".into()] };
        assert!(make_split(&m, &Protocol::Custom(lists), &mut Rng::new(0)).is_err());
        assert!("avletters2-fold-6".parse::<Protocol>().is_err());
    }
}
