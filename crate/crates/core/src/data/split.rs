use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    IntraSession,
    InterSession,
    InterSubject,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::IntraSession, Scenario::InterSession, Scenario::InterSubject];
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IntraSession" | "intra-session" => Ok(Scenario::IntraSession),
            "InterSession" | "inter-session" => Ok(Scenario::InterSession),
            "InterSubject" | "inter-subject" => Ok(Scenario::InterSubject),
            other => Err(Error::InvalidArgument(format!("unknown scenario {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub scenario: Scenario,
    pub ratio: f64,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Builds train/test folds for one test scenario.
///
/// * `IntraSession`: every session is shuffled (seeded per session) and cut
///   into `ceil(ratio * n)` train and the rest test; all sessions are pooled
///   into a single fold.
/// * `InterSession`: for each subject with several sessions, one fold per
///   held-out session, training on that subject's remaining sessions.
/// * `InterSubject`: leave-one-subject-out, one fold per subject.
pub fn make_splits(manifest: &DatasetManifest, scenario: Scenario, ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    // (subject, session) -> sorted segment ids
    let mut by_session: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for seg in &manifest.segments {
        let rec = manifest
            .recording_entry(&seg.recording_id)
            .ok_or_else(|| Error::MalformedManifest(format!("unknown recording {}", seg.recording_id)))?;
        by_session
            .entry((rec.subject_id.clone(), rec.session_id.clone()))
            .or_default()
            .push(seg.id.clone());
    }
    for ids in by_session.values_mut() {
        ids.sort();
    }

    let folds = match scenario {
        Scenario::IntraSession => {
            if by_session.is_empty() {
                return Err(Error::InsufficientData("no segments".into()));
            }
            let mut fold = Fold { name: "intra".into(), train: BTreeSet::new(), test: BTreeSet::new() };
            for ((subject, session), ids) in &by_session {
                if ids.len() < 10 {
                    return Err(Error::InsufficientData(format!(
                        "session {subject}/{session} has {} segments, need 10",
                        ids.len()
                    )));
                }
                let n_train = train_count(ids.len(), ratio);
                if n_train == 0 || n_train >= ids.len() {
                    return Err(Error::InsufficientData(format!(
                        "session {subject}/{session}: empty side at ratio {ratio}"
                    )));
                }
                let mut shuffled = ids.clone();
                shuffled.shuffle(&mut rng_for(seed, &format!("intra/{subject}/{session}")));
                fold.train.extend(shuffled[..n_train].iter().cloned());
                fold.test.extend(shuffled[n_train..].iter().cloned());
            }
            vec![fold]
        }
        Scenario::InterSession => {
            let mut sessions_of: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            for (subject, session) in by_session.keys() {
                sessions_of.entry(subject).or_default().push(session);
            }
            let mut folds = Vec::new();
            for (subject, sessions) in sessions_of.iter().filter(|(_, s)| s.len() >= 2) {
                for held in sessions {
                    let mut fold = Fold {
                        name: format!("{subject}/test-{held}"),
                        train: BTreeSet::new(),
                        test: BTreeSet::new(),
                    };
                    for s in sessions {
                        let ids = &by_session[&(subject.to_string(), s.to_string())];
                        let side = if s == held { &mut fold.test } else { &mut fold.train };
                        side.extend(ids.iter().cloned());
                    }
                    folds.push(fold);
                }
            }
            if folds.is_empty() {
                return Err(Error::InsufficientData("no subject has two or more sessions".into()));
            }
            folds
        }
        Scenario::InterSubject => {
            let subjects: BTreeSet<&str> = by_session.keys().map(|(s, _)| s.as_str()).collect();
            if subjects.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "leave-one-subject-out needs 2 subjects, found {}",
                    subjects.len()
                )));
            }
            subjects
                .iter()
                .map(|held| {
                    let mut fold = Fold {
                        name: format!("test-{held}"),
                        train: BTreeSet::new(),
                        test: BTreeSet::new(),
                    };
                    for ((subject, _), ids) in &by_session {
                        let side = if subject == held { &mut fold.test } else { &mut fold.train };
                        side.extend(ids.iter().cloned());
                    }
                    fold
                })
                .collect()
        }
    };
    Ok(SplitSpec { scenario, ratio, seed, folds })
}

/// `ceil(ratio * n)`, guarded against representation error in `ratio`.
fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) - 1e-9).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Condition, Device, RecordingEntry, Segment, MUSE_CHANNELS};

    pub(crate) fn manifest_with(layout: &[(&str, &str, usize)]) -> DatasetManifest {
        let mut recordings = Vec::new();
        let mut segments = Vec::new();
        for (subject, session, n) in layout {
            let rid = format!("{subject}-{session}");
            recordings.push(RecordingEntry {
                id: rid.clone(),
                subject_id: subject.to_string(),
                session_id: session.to_string(),
                device: Device::Muse,
                sampling_rate_hz: 1000.0,
                channel_names: MUSE_CHANNELS.iter().map(|s| s.to_string()).collect(),
                n_samples: 100_000,
                path: format!("{rid}.eegr"),
                markers: vec![],
            });
            for k in 0..*n {
                segments.push(Segment {
                    id: format!("{rid}-h{k:03}"),
                    recording_id: rid.clone(),
                    start_sample: k * 100,
                    end_sample: k * 100 + 50,
                    condition: Condition::Heard,
                    phrase_id: "p".into(),
                    audio: None,
                    paired_heard: None,
                    truth: None,
                });
            }
        }
        DatasetManifest {
            recordings,
            segments,
            phrase_inventory: [("p".to_string(), vec!["u".to_string()])].into(),
            root: Default::default(),
        }
    }

    #[test]
    fn ten_segments_split_seven_three() {
        let m = manifest_with(&[("a", "1", 10)]);
        let spec = make_splits(&m, Scenario::IntraSession, 0.7, 3).unwrap();
        assert_eq!(spec.folds.len(), 1);
        assert_eq!(spec.folds[0].train.len(), 7);
        assert_eq!(spec.folds[0].test.len(), 3);
        assert!(spec.folds[0].train.is_disjoint(&spec.folds[0].test));
    }

    #[test]
    fn ceiling_rounding() {
        assert_eq!(train_count(10, 0.7), 7);
        assert_eq!(train_count(11, 0.7), 8);
        assert_eq!(train_count(20, 0.7), 14);
        assert_eq!(train_count(13, 0.7), 10);
    }

    #[test]
    fn intra_session_needs_ten_segments() {
        let m = manifest_with(&[("a", "1", 9)]);
        assert!(matches!(make_splits(&m, Scenario::IntraSession, 0.7, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn inter_session_holds_out_each_session() {
        let m = manifest_with(&[("a", "1", 4), ("a", "2", 5), ("b", "1", 3)]);
        let spec = make_splits(&m, Scenario::InterSession, 0.7, 0).unwrap();
        assert_eq!(spec.folds.len(), 2);
        let f0 = &spec.folds[0];
        assert!(f0.train.iter().all(|id| id.starts_with("a-2")));
        assert!(f0.test.iter().all(|id| id.starts_with("a-1")));
        assert_eq!(f0.test.len(), 4);
        let f1 = &spec.folds[1];
        assert!(f1.train.iter().all(|id| id.starts_with("a-1")));
        assert!(f1.test.iter().all(|id| id.starts_with("a-2")));
    }

    #[test]
    fn inter_session_requires_multi_session_subject() {
        let m = manifest_with(&[("a", "1", 4), ("b", "1", 3)]);
        assert!(matches!(make_splits(&m, Scenario::InterSession, 0.7, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn leave_one_subject_out() {
        let layout: Vec<(String, usize)> = (0..8).map(|i| (format!("s{i}"), 3)).collect();
        let layout: Vec<(&str, &str, usize)> = layout.iter().map(|(s, n)| (s.as_str(), "1", *n)).collect();
        let m = manifest_with(&layout);
        let spec = make_splits(&m, Scenario::InterSubject, 0.7, 0).unwrap();
        assert_eq!(spec.folds.len(), 8);
        for (i, f) in spec.folds.iter().enumerate() {
            assert!(f.test.iter().all(|id| id.starts_with(&format!("s{i}-"))));
            assert!(f.train.iter().all(|id| !id.starts_with(&format!("s{i}-"))));
            assert_eq!(f.train.len(), 21);
        }
        let single = manifest_with(&[("a", "1", 12)]);
        assert!(matches!(make_splits(&single, Scenario::InterSubject, 0.7, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn splits_are_deterministic() {
        let m = manifest_with(&[("a", "1", 12), ("b", "1", 15)]);
        let x = serde_json::to_string(&make_splits(&m, Scenario::IntraSession, 0.7, 42).unwrap()).unwrap();
        let y = serde_json::to_string(&make_splits(&m, Scenario::IntraSession, 0.7, 42).unwrap()).unwrap();
        assert_eq!(x, y);
        let z = serde_json::to_string(&make_splits(&m, Scenario::IntraSession, 0.7, 43).unwrap()).unwrap();
        assert_ne!(x, z);
    }
}
