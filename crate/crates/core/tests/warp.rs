use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use ndarray::Array2;
use nsdecode::corpus::{build_corpus, Corpus, CorpusOptions, CorpusItem};
use nsdecode::data::Condition;
use nsdecode::hierarchy::{train_bundle, ClassifierBundle, HyperParams, Scheme};
use nsdecode::synth::{generate_dataset, ArtifactConfig, SynthConfig};
use nsdecode::warp::{
    ced_equalize, class_profiles, class_runs, dtw_path, export_chunks, profiles_from_runs, topo_map_data, ClassRun,
    TargetLength,
};
use nsdecode::{Error, StateLabel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum over every monotone path from (i, j) to the far corner, by plain recursion.
fn enumerate_min(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let here = (a[i] - b[j]).abs();
    if i + 1 == a.len() && j + 1 == b.len() {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < a.len() {
        best = best.min(enumerate_min(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        best = best.min(enumerate_min(a, b, i, j + 1));
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        best = best.min(enumerate_min(a, b, i + 1, j + 1));
    }
    here + best
}

fn check_path(a: &[f64], b: &[f64], pairs: &[(usize, usize)]) -> f64 {
    assert_eq!(pairs[0], (0, 0));
    assert_eq!(*pairs.last().unwrap(), (a.len() - 1, b.len() - 1));
    for w in pairs.windows(2) {
        let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)), "{step:?}");
    }
    pairs.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum()
}

#[test]
fn dtw_cost_matches_enumeration_up_to_six() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in 1..=6 {
        for m in 1..=6 {
            for _ in 0..20 {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                // integer values create ties
                let b: Vec<f64> = (0..m).map(|_| rng.random_range(-2..=2) as f64).collect();
                let p = dtw_path(&a, &b);
                let oracle = enumerate_min(&a, &b, 0, 0);
                assert!((p.cost - oracle).abs() <= 1e-12, "{a:?} {b:?}");
                assert!((check_path(&a, &b, &p.pairs) - p.cost).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn dtw_examples() {
    let a = [1.0, 4.0, 2.0, 2.0];
    let p = dtw_path(&a, &a);
    assert_eq!(p.cost, 0.0);
    assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);

    let p = dtw_path(&[0.0, 1.0], &[0.0, 0.0, 1.0]);
    assert_eq!(p.cost, 0.0);
    assert_eq!(p.pairs, vec![(0, 0), (0, 1), (1, 2)]);

    let p = dtw_path(&[2.0; 3], &[5.0; 5]);
    assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (2, 3), (2, 4)]);
    assert_eq!(p.cost, 3.0 * p.pairs.len() as f64);
}

#[test]
fn equal_lengths_pass_through() {
    let s = vec![vec![1.0, 5.0, 2.0], vec![0.0, 0.0, 9.0]];
    assert_eq!(ced_equalize(&s, TargetLength::Auto).unwrap(), s);
    assert_eq!(ced_equalize(&s, TargetLength::Fixed(3)).unwrap(), s);
}

#[test]
fn auto_length_is_rounded_mean() {
    let s = vec![(0..50).map(|i| (i as f64 * 0.3).sin()).collect(), (0..100).map(|i| (i as f64 * 0.1).cos()).collect()];
    let out = ced_equalize(&s, TargetLength::Auto).unwrap();
    assert!(out.iter().all(|o| o.len() == 75));
    assert!(matches!(ced_equalize(&[], TargetLength::Auto), Err(Error::InvalidArgument(_))));
    assert!(matches!(ced_equalize(&[vec![]], TargetLength::Auto), Err(Error::InvalidArgument(_))));
}

fn batch() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 1..30), 1..6)
}

proptest! {
    #[test]
    fn equalized_series_keep_length_range_and_endpoints(series in batch(), target in 1usize..40) {
        let out = ced_equalize(&series, TargetLength::Fixed(target)).unwrap();
        prop_assert_eq!(out.len(), series.len());
        for (s, o) in series.iter().zip(&out) {
            prop_assert_eq!(o.len(), target);
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(o.iter().all(|v| *v >= lo && *v <= hi));
            if !series.iter().all(|x| x.len() == target) {
                prop_assert_eq!(o[0], s[0]);
                if target > 1 {
                    prop_assert_eq!(o[target - 1], s[s.len() - 1]);
                }
            }
        }
    }

    #[test]
    fn ramps_stay_monotone(lens in prop::collection::vec(2usize..40, 2..6), target in 2usize..50) {
        let ramps: Vec<Vec<f64>> = lens.iter().map(|&n| (0..n).map(|i| 3.0 * i as f64 / (n - 1) as f64 - 1.0).collect()).collect();
        for o in ced_equalize(&ramps, TargetLength::Fixed(target)).unwrap() {
            prop_assert!(o.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(o[0], -1.0);
            prop_assert_eq!(o[target - 1], 2.0);
        }
    }

    #[test]
    fn dtw_path_is_valid(a in prop::collection::vec(-5.0f64..5.0, 1..20), b in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let p = dtw_path(&a, &b);
        prop_assert!((check_path(&a, &b, &p.pairs) - p.cost).abs() <= 1e-9);
        prop_assert!((dtw_path(&b, &a).cost - p.cost).abs() <= 1e-9);
    }
}

fn run(class: StateLabel, seg: &str, series: Vec<f64>) -> ClassRun {
    ClassRun { class_id: class, segment_id: seg.into(), start_frame: 0, n_frames: series.len(), series }
}

#[test]
fn single_run_has_zero_variance_and_missing_classes_are_noted() {
    let runs = vec![
        run(StateLabel::NsB, "a", vec![1.0, 2.0, 3.0]),
        run(StateLabel::S, "a", vec![4.0, 4.0]),
        run(StateLabel::S, "b", vec![6.0, 6.0, 6.0, 6.0]),
    ];
    let p = profiles_from_runs(&runs, TargetLength::Fixed(4)).unwrap();
    let ns_b = p.profiles.iter().find(|c| c.class_id == StateLabel::NsB).unwrap();
    assert_eq!(ns_b.n_segments, 1);
    assert!(ns_b.variance.iter().all(|&v| v == 0.0));
    let s = p.profiles.iter().find(|c| c.class_id == StateLabel::S).unwrap();
    assert!(s.mean.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    assert!(s.variance.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert_eq!(p.profiles.len(), 2);
    assert_eq!(p.notes.len(), 2);
    assert!(p.notes.iter().any(|n| n.contains("NS_i")) && p.notes.iter().any(|n| n.contains("NS_e")));
    assert_eq!(p.warped.len(), 3);
}

struct Fixture {
    corpus: Corpus,
    heard: BTreeSet<String>,
    bundle: ClassifierBundle,
    channels: Vec<String>,
}

fn build(cfg: SynthConfig, opts: &CorpusOptions) -> Fixture {
    let d = generate_dataset(&cfg, 2, 1, 3).unwrap();
    let corpus = build_corpus(&d.manifest, &d.recordings, &d.audio, &d.truth, opts).unwrap();
    let heard: BTreeSet<String> =
        d.manifest.segments.iter().filter(|s| s.condition == Condition::Heard).map(|s| s.id.clone()).collect();
    let bundle = train_bundle(&corpus, &heard, Scheme::Hc, &HyperParams::default()).unwrap();
    Fixture { corpus, heard, bundle, channels: cfg.channel_names() }
}

fn shaped() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(SynthConfig { seed: 12, snr: 5.0, artifacts: ArtifactConfig::none(), ..SynthConfig::default() }, &CorpusOptions::default()))
}

fn items(f: &Fixture) -> Vec<&CorpusItem> {
    f.corpus.select(&f.heard)
}

#[test]
fn onset_and_offset_profiles_differ() {
    let f = shaped();
    let p = class_profiles(&items(f), &f.bundle, TargetLength::Fixed(9)).unwrap();
    let get = |c: StateLabel| p.profiles.iter().find(|x| x.class_id == c).unwrap();
    let (b, e) = (get(StateLabel::NsB), get(StateLabel::NsE));
    let mid = 4;
    let se = (b.variance[mid] / b.n_segments as f64 + e.variance[mid] / e.n_segments as f64).sqrt();
    let gap = (b.mean[mid] - e.mean[mid]).abs();
    assert!(gap >= 3.0 * se, "gap {gap}, se {se}");
    assert_eq!(class_profiles(&items(f), &f.bundle, TargetLength::Fixed(9)).unwrap(), p);
}

#[test]
fn onset_map_is_frontal() {
    let f = shaped();
    let m = topo_map_data(&items(f), &f.bundle, &StateLabel::NsB, &f.channels).unwrap();
    let v: BTreeMap<&str, f64> = m.channels.iter().map(String::as_str).zip(m.values.iter().copied()).collect();
    for front in ["Fp1", "Fp2"] {
        for back in ["TP9", "TP10"] {
            assert!(v[front] > v[back], "{v:?}");
        }
    }
    assert!(m.n_frames > 0);
    assert!(matches!(
        topo_map_data(&items(f), &f.bundle, &StateLabel::unit("hello"), &f.channels),
        Err(Error::EmptyClass(_))
    ));
    assert!(matches!(
        topo_map_data(&items(f), &f.bundle, &StateLabel::NsB, &f.channels[..3]),
        Err(Error::DimMismatch { .. })
    ));
}

#[test]
fn uniform_generator_gives_flat_map() {
    let mut cfg = SynthConfig {
        seed: 13,
        snr: 5.0,
        subject_scale: 0.0,
        session_scale: 0.0,
        artifacts: ArtifactConfig::none(),
        ..SynthConfig::default()
    };
    let mut spec = cfg.emission_spec();
    for e in [&mut spec.ns_b, &mut spec.ns_i, &mut spec.ns_e, &mut spec.rest] {
        for c in &mut e.components {
            c.amp_uv = vec![10.0; 4];
        }
    }
    for parts in spec.units.values_mut() {
        for e in parts {
            for c in &mut e.components {
                c.amp_uv = vec![16.0; 4];
            }
        }
    }
    cfg.emissions = Some(spec);
    // a source common to every channel is what ICA removes first, so decomposition is off here
    let mut opts = CorpusOptions::default();
    opts.preprocess.ica = None;
    let f = build(cfg, &opts);
    for class in [StateLabel::NsB, StateLabel::S] {
        let m = topo_map_data(&items(&f), &f.bundle, &class, &f.channels).unwrap();
        let mean = m.values.iter().sum::<f64>() / 4.0;
        let sd = (m.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(sd / mean < 0.1, "{class}: {:?}", m.values);
    }
}

#[test]
fn chunks_cover_runs() {
    let f = shaped();
    let its = items(f);
    let runs = class_runs(&its[..2], &f.bundle).unwrap();
    let spec = f.corpus.frame_spec;
    let signals: BTreeMap<String, Array2<f64>> = its[..2]
        .iter()
        .map(|i| {
            let n = (i.features.n_frames() - 1) * spec.hop + spec.window_len;
            (i.segment.id.clone(), Array2::from_shape_fn((4, n), |(c, t)| (c + t) as f64))
        })
        .collect();
    let text = export_chunks(&runs, &signals, spec.hop, spec.window_len, 20).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split('\t').count(), 4 + 20);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        // channel mean of c + t is t + 1.5, so consecutive chunk values step by one
        let v: Vec<f64> = r[4..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-9));
    }
    assert!(matches!(export_chunks(&runs, &signals, spec.hop, spec.window_len, 0), Err(Error::InvalidArgument(_))));
}
