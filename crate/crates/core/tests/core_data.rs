use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use nsdecode::data::{
    derive_egi_reduced, extract_segments, load_manifest, make_splits, read_container, save_manifest,
    write_container, Condition, DatasetManifest, Device, Marker, MarkerKind, Recording, RecordingEntry, Scenario,
    Segment, MUSE_CHANNELS,
};
use nsdecode::Error;
use proptest::prelude::*;

fn muse_names() -> Vec<String> {
    MUSE_CHANNELS.iter().map(|s| s.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn container_round_trip(values in prop::collection::vec(-1e4f32..1e4, 4..400), rate in 100.0f64..2000.0) {
        let n = values.len() / 4;
        let samples = Array2::from_shape_fn((4, n), |(c, t)| values[c * n + t] as f64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.eegr");
        write_container(&path, rate, &muse_names(), &samples).unwrap();
        let (h, back) = read_container(&path).unwrap();
        prop_assert_eq!(h.sampling_rate_hz, rate);
        prop_assert_eq!(h.channel_names, muse_names());
        prop_assert_eq!(h.n_samples, n);
        prop_assert_eq!(back, samples);
    }
}

#[test]
fn truncated_container_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.eegr");
    write_container(&path, 250.0, &muse_names(), &Array2::zeros((4, 100))).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(read_container(&path), Err(Error::MalformedRecording(_))));
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(read_container(&path), Err(Error::MalformedRecording(_))));
}

fn entry(id: &str, subject: &str, session: &str) -> RecordingEntry {
    RecordingEntry {
        id: id.into(),
        subject_id: subject.into(),
        session_id: session.into(),
        device: Device::Muse,
        sampling_rate_hz: 1000.0,
        channel_names: muse_names(),
        n_samples: 100_000,
        path: format!("{id}.eegr"),
        markers: vec![],
    }
}

fn segment(id: String, rec: &str, k: usize) -> Segment {
    Segment {
        id,
        recording_id: rec.into(),
        start_sample: k * 100,
        end_sample: k * 100 + 80,
        condition: Condition::Heard,
        phrase_id: "p1".into(),
        audio: None,
        paired_heard: None,
        truth: None,
    }
}

/// `layout` lists (subject, session, n_segments).
fn manifest(layout: &[(String, String, usize)]) -> DatasetManifest {
    let mut recordings = Vec::new();
    let mut segments = Vec::new();
    for (subject, session, n) in layout {
        let rid = format!("{subject}-{session}");
        recordings.push(entry(&rid, subject, session));
        segments.extend((0..*n).map(|k| segment(format!("{rid}-h{k:03}"), &rid, k)));
    }
    DatasetManifest {
        recordings,
        segments,
        phrase_inventory: BTreeMap::from([("p1".to_string(), vec!["hello".to_string()])]),
        root: Default::default(),
    }
}

#[test]
fn intra_session_ten_segments_split_seven_three() {
    let m = manifest(&[("s1".into(), "1".into(), 10)]);
    let split = make_splits(&m, Scenario::IntraSession, 0.7, 3).unwrap();
    assert_eq!(split.folds.len(), 1);
    assert_eq!((split.folds[0].train.len(), split.folds[0].test.len()), (7, 3));
    assert!(split.folds[0].train.is_disjoint(&split.folds[0].test));
}

#[test]
fn inter_subject_eight_subjects() {
    let layout: Vec<_> = (1..=8).map(|s| (format!("s{s}"), "1".to_string(), 10)).collect();
    let m = manifest(&layout);
    let split = make_splits(&m, Scenario::InterSubject, 0.7, 0).unwrap();
    assert_eq!(split.folds.len(), 8);
    let subject_of = |id: &str| id.split('-').next().unwrap().to_string();
    for f in &split.folds {
        let train: BTreeSet<String> = f.train.iter().map(|i| subject_of(i)).collect();
        let test: BTreeSet<String> = f.test.iter().map(|i| subject_of(i)).collect();
        assert_eq!(test.len(), 1);
        assert!(train.is_disjoint(&test));
        assert_eq!(f.train.len() + f.test.len(), 80);
    }
}

#[test]
fn missing_preconditions_are_insufficient_data() {
    let m = manifest(&[("s1".into(), "1".into(), 9)]);
    assert!(matches!(make_splits(&m, Scenario::IntraSession, 0.7, 0), Err(Error::InsufficientData(_))));
    let m = manifest(&[("s1".into(), "1".into(), 10)]);
    assert!(matches!(make_splits(&m, Scenario::InterSession, 0.7, 0), Err(Error::InsufficientData(_))));
    assert!(matches!(make_splits(&m, Scenario::InterSubject, 0.7, 0), Err(Error::InsufficientData(_))));
    assert!(matches!(make_splits(&m, Scenario::IntraSession, 1.0, 0), Err(Error::InvalidArgument(_))));
}

proptest! {
    #[test]
    fn folds_partition_their_segments(
        sessions in prop::collection::vec((0usize..4, 0usize..3, 10usize..30), 1..6),
        seed in any::<u64>(),
        ratio in 0.2f64..0.9,
    ) {
        let mut layout: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (s, k, n) in sessions {
            layout.insert((format!("s{s}"), format!("{k}")), n);
        }
        let layout: Vec<_> = layout.into_iter().map(|((a, b), n)| (a, b, n)).collect();
        let m = manifest(&layout);
        let all: BTreeSet<String> = m.segments.iter().map(|s| s.id.clone()).collect();
        for scenario in Scenario::ALL {
            let Ok(split) = make_splits(&m, scenario, ratio, seed) else { continue };
            prop_assert_eq!(&split, &make_splits(&m, scenario, ratio, seed).unwrap());
            for f in &split.folds {
                prop_assert!(f.train.is_disjoint(&f.test));
                prop_assert!(!f.train.is_empty() && !f.test.is_empty());
                prop_assert!(f.train.is_subset(&all) && f.test.is_subset(&all));
            }
            if scenario == Scenario::IntraSession {
                let f = &split.folds[0];
                prop_assert_eq!(f.train.len() + f.test.len(), all.len());
                for (subject, session, n) in &layout {
                    let prefix = format!("{subject}-{session}-");
                    let k = f.train.iter().filter(|i| i.starts_with(&prefix)).count();
                    prop_assert_eq!(k, ((ratio * *n as f64) - 1e-9).ceil() as usize);
                }
            }
        }
    }
}

#[test]
fn manifest_load_checks_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(&[("s1".into(), "1".into(), 2)]);
    m.recordings[0].n_samples = 300;
    m.segments.truncate(2);
    let path = dir.path().join("manifest.json");
    save_manifest(&m, &path).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::MissingRecordingFile(_))));

    write_container(&dir.path().join("s1-1.eegr"), 1000.0, &muse_names()[..3], &Array2::zeros((3, 300))).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::ChannelCountMismatch { expected: 4, found: 3, .. })));

    write_container(&dir.path().join("s1-1.eegr"), 1000.0, &muse_names(), &Array2::zeros((4, 300))).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.segments, m.segments);
    assert_eq!(loaded.load_recording("s1-1").unwrap().n_samples(), 300);

    let mut bad = m.clone();
    bad.segments[1].id = bad.segments[0].id.clone();
    assert!(matches!(bad.validate(), Err(Error::MalformedManifest(_))));
    let mut bad = m.clone();
    bad.segments[0].end_sample = 10_000;
    assert!(matches!(bad.validate(), Err(Error::MalformedManifest(_))));
}

fn marked(markers: &[(MarkerKind, &str, usize)]) -> Recording {
    Recording {
        id: "r".into(),
        subject_id: "s".into(),
        session_id: "1".into(),
        device: Device::Muse,
        sampling_rate_hz: 1000.0,
        channel_names: muse_names(),
        samples: Array2::zeros((4, 5000)),
        markers: markers
            .iter()
            .map(|&(kind, p, i)| Marker { kind, phrase_id: p.into(), sample_index: i })
            .collect(),
    }
}

#[test]
fn markers_pair_into_segments() {
    use MarkerKind::*;
    let rec = marked(&[
        (StimulusOnset, "p1", 100),
        (StimulusEnd, "p1", 900),
        (ImagineStart, "p1", 1200),
        (ImagineEnd, "p1", 2000),
        (StimulusOnset, "p2", 2500),
        (StimulusEnd, "p2", 3000),
    ]);
    let segs = extract_segments(&rec).unwrap();
    assert_eq!(segs.len(), 3);
    assert_eq!((segs[0].id.as_str(), segs[0].start_sample, segs[0].end_sample), ("r-h000", 100, 900));
    assert_eq!(segs[1].condition, Condition::Imagined);
    assert_eq!(segs[1].paired_heard.as_deref(), Some("r-h000"));
    assert_eq!(segs[2].id, "r-h001");

    let broken = marked(&[(StimulusOnset, "p1", 100), (StimulusOnset, "p2", 200)]);
    assert!(matches!(extract_segments(&broken), Err(Error::UnpairedMarker { .. })));
    let dangling = marked(&[(StimulusOnset, "p1", 100)]);
    assert!(matches!(extract_segments(&dangling), Err(Error::UnpairedMarker { .. })));
}

#[test]
fn reduced_view_is_referenced_to_fpz() {
    let names: Vec<String> = ["Fp1", "Fp2", "TP9", "TP10", "Fpz", "Cz"].iter().map(|s| s.to_string()).collect();
    let samples = Array2::from_shape_fn((6, 10), |(c, t)| (c * 100 + t) as f64);
    let rec = Recording {
        id: "e".into(),
        subject_id: "s".into(),
        session_id: "1".into(),
        device: Device::Egi,
        sampling_rate_hz: 250.0,
        channel_names: names,
        samples,
        markers: vec![],
    };
    let r = derive_egi_reduced(&rec).unwrap();
    assert_eq!(r.device, Device::EgiReduced);
    assert_eq!(r.channel_names, muse_names());
    for c in 0..4 {
        for t in 0..10 {
            assert_eq!(r.samples[[c, t]], c as f64 * 100.0 - 400.0);
        }
    }
}
