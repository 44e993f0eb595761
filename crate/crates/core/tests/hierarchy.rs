use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use ndarray::Array2;
use nsdecode::corpus::{build_corpus, Corpus, CorpusOptions};
use nsdecode::data::{Condition, Device, Recording};
use nsdecode::features::short_term_energy;
use nsdecode::hierarchy::{
    phrase_graph, restrict_search_space, train_bundle, Classification, ClassifierBundle, HyperParams, Scheme, UnitInventory,
};
use nsdecode::hmm::{rescore_path, DecodeHypothesis};
use nsdecode::label::label_runs;
use nsdecode::preprocess::{preprocess_pipeline, PreprocessConfig};
use nsdecode::synth::SynthConfig;
use nsdecode::synth::generate_dataset;
use nsdecode::{Error, StateLabel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Fixture {
    corpus: Corpus,
    train: BTreeSet<String>,
    test: BTreeSet<String>,
    bundles: BTreeMap<Scheme, ClassifierBundle>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = SynthConfig { seed: 17, ..SynthConfig::default() };
        let d = generate_dataset(&cfg, 1, 1, 4).unwrap();
        let corpus = build_corpus(&d.manifest, &d.recordings, &d.audio, &d.truth, &CorpusOptions::default()).unwrap();
        let heard: Vec<String> = d
            .manifest
            .segments
            .iter()
            .filter(|s| s.condition == Condition::Heard)
            .map(|s| s.id.clone())
            .collect();
        let (train, test) = heard.split_at(14);
        let train: BTreeSet<String> = train.iter().cloned().collect();
        let bundles = Scheme::ALL
            .iter()
            .map(|&s| (s, train_bundle(&corpus, &train, s, &HyperParams::default()).unwrap()))
            .collect();
        Fixture { corpus, train, test: test.iter().cloned().collect(), bundles }
    })
}

/// Classifies `ids`; the only tolerated failure is an over-pruned beam.
fn classify_all<'a>(b: &ClassifierBundle, ids: impl IntoIterator<Item = &'a String>) -> Vec<(String, Classification)> {
    let f = fixture();
    let mut out = Vec::new();
    let mut n = 0;
    for id in ids {
        n += 1;
        match b.classify(&f.corpus.get(id).unwrap().features) {
            Ok(c) => out.push((id.clone(), c)),
            Err(Error::NoSurvivingPath) => {}
            Err(e) => panic!("{id}: {e}"),
        }
    }
    assert!(2 * out.len() >= n, "{} of {n} decoded", out.len());
    out
}

fn exact(b: &ClassifierBundle) -> ClassifierBundle {
    let mut b = b.clone();
    b.hyper.beam = f64::INFINITY;
    b
}

#[test]
fn bundles_hold_the_scheme_models() {
    let f = fixture();
    let ns = |s| f.bundles[&s].n_ns_models();
    assert_eq!(ns(Scheme::Bl), 0);
    assert_eq!(ns(Scheme::Dns), 1);
    assert_eq!(ns(Scheme::Dns3), 3);
    let hc = &f.bundles[&Scheme::Hc];
    let ad = hc.ad.as_ref().unwrap();
    let classes: BTreeSet<StateLabel> = ad.models.keys().cloned().collect();
    assert_eq!(classes, BTreeSet::from([StateLabel::S, StateLabel::NsB, StateLabel::NsI, StateLabel::NsE]));
    for u in hc.inventory.units() {
        assert!(hc.models.contains_key(&StateLabel::unit(u)));
    }
    assert!(f.bundles.values().filter(|b| b.scheme != Scheme::Hc).all(|b| b.ad.is_none()));
}

#[test]
fn non_hc_bundles_cannot_run_activity_detection() {
    let f = fixture();
    let x = &f.corpus.get(f.test.first().unwrap()).unwrap().features;
    for s in [Scheme::Bl, Scheme::Dns, Scheme::Dns3] {
        assert!(matches!(f.bundles[&s].ad_decode(x), Err(Error::SchemeMismatch { .. })));
    }
}

#[test]
fn winner_score_matches_rescoring_and_restriction() {
    let f = fixture();
    for scheme in Scheme::ALL {
        for b in [f.bundles[&scheme].clone(), exact(&f.bundles[&scheme])] {
            let results = classify_all(&b, f.test.iter().chain(f.train.iter().take(3)));
            if b.hyper.beam.is_infinite() {
                assert_eq!(results.len(), f.test.len() + 3);
            }
            for (id, c) in results {
                let x = &f.corpus.get(&id).unwrap().features;
                let h = &c.hypothesis;
                let states: Vec<usize> = h.state_path.iter().map(|p| p.1).collect();
                let graph = &b.graphs[&c.phrase_id];
                let again =
                    rescore_path(&b.models, graph, &b.prepare(x), &h.node_path, &states, b.hyper.phrase_ns_boost).unwrap();
                assert!((again - h.log_likelihood).abs() <= 1e-6 * h.log_likelihood.abs().max(1.0), "{scheme} {id}");
                assert_eq!(c.scores[&c.phrase_id], h.log_likelihood);
                assert_eq!(c.units, b.inventory.phrases[&c.phrase_id].units);
                if scheme == Scheme::Hc {
                    let allowed = restrict_search_space(&b.inventory, c.ad.as_ref().unwrap());
                    assert_eq!(allowed, c.candidates);
                    assert!(allowed.contains(&c.phrase_id));
                } else {
                    assert_eq!(c.candidates.len(), b.inventory.phrases.len());
                }
                assert!(c.scores.values().all(|&s| s <= h.log_likelihood));
            }
        }
    }
}

#[test]
fn classification_is_deterministic() {
    let f = fixture();
    let retrained = train_bundle(&f.corpus, &f.train, Scheme::Hc, &HyperParams::default()).unwrap();
    assert_eq!(retrained, f.bundles[&Scheme::Hc]);
    for id in &f.test {
        let x = &f.corpus.get(id).unwrap().features;
        assert_eq!(retrained.classify(x).ok(), f.bundles[&Scheme::Hc].classify(x).ok());
    }
}

#[test]
fn saved_bundles_load_back_unchanged() {
    let f = fixture();
    for (scheme, b) in &f.bundles {
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = ClassifierBundle::load(dir.path()).unwrap();
        assert_eq!(&back, b, "{scheme}");
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(ClassifierBundle::load(dir.path()).is_err());
}

#[test]
fn duplicated_phrase_resolves_to_smaller_id() {
    let f = fixture();
    let mut b = exact(&f.bundles[&Scheme::Dns3]);
    let p3 = b.inventory.phrases["p3"].clone();
    b.graphs.insert("p0".into(), phrase_graph(&p3.units, Scheme::Dns3));
    b.inventory.phrases.insert("p0".into(), p3);
    let mut saw = 0;
    for (_, c) in classify_all(&b, f.test.iter().chain(&f.train)) {
        assert_ne!(c.phrase_id, "p3");
        if c.phrase_id == "p0" {
            assert_eq!(c.scores["p0"], c.scores["p3"]);
            saw += 1;
        }
    }
    assert!(saw > 0);
}

fn hyp(labels: &[StateLabel]) -> DecodeHypothesis {
    DecodeHypothesis {
        state_path: labels.iter().map(|l| (l.clone(), 0)).collect(),
        node_path: vec![0; labels.len()],
        log_likelihood: 0.0,
        label_runs: label_runs(labels),
    }
}

#[test]
fn restriction_examples() {
    use StateLabel::*;
    let inv = |counts: &[(&str, usize)]| {
        let m: BTreeMap<String, Vec<String>> =
            counts.iter().map(|(id, n)| (id.to_string(), (0..*n).map(|k| format!("{id}{k}")).collect())).collect();
        UnitInventory::new(&m).unwrap()
    };
    let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let three = inv(&[("P1", 2), ("P2", 3), ("P3", 2)]);
    let one_gap = hyp(&[NsB, S, NsI, S, NsE]);
    assert_eq!(restrict_search_space(&three, &one_gap), ids(&["P1", "P3"]));
    let two_gaps = hyp(&[NsB, S, NsI, S, NsI, S, NsE]);
    assert_eq!(restrict_search_space(&three, &two_gaps), ids(&["P2"]));
    // four gaps matches nothing; nearest count is the 3-unit phrase
    let four = hyp(&[S, NsI, S, NsI, S, NsI, S, NsI, S]);
    assert_eq!(restrict_search_space(&three, &four), ids(&["P2"]));
    let flat = inv(&[("A", 2), ("B", 2)]);
    for h in [hyp(&[S]), one_gap, two_gaps] {
        assert_eq!(restrict_search_space(&flat, &h), ids(&["A", "B"]));
    }
}

#[test]
fn singleton_search_space_forces_the_answer() {
    let f = fixture();
    for (_, c) in classify_all(&f.bundles[&Scheme::Hc], f.test.iter().chain(&f.train)) {
        if c.candidates.len() == 1 {
            assert_eq!(c.candidates.iter().next().unwrap(), &c.phrase_id);
            assert_eq!(c.scores.len(), 1);
        }
    }
}

#[test]
fn pure_non_speech_has_no_long_speech_run() {
    // at the calibrated noise level a quarter of frames are misdetected by design,
    // so this runs on a clean dataset
    let cfg = SynthConfig { seed: 17, snr: 5.0, ..SynthConfig::default() };
    let d = generate_dataset(&cfg, 1, 1, 3).unwrap();
    let corpus = build_corpus(&d.manifest, &d.recordings, &d.audio, &d.truth, &CorpusOptions::default()).unwrap();
    let heard: BTreeSet<String> =
        d.manifest.segments.iter().filter(|s| s.condition == Condition::Heard).map(|s| s.id.clone()).collect();
    let b = train_bundle(&corpus, &heard, Scheme::Hc, &HyperParams::default()).unwrap();

    let spec = cfg.emission_spec();
    let fs = cfg.sampling_rate_hz();
    let noise = Normal::new(0.0, cfg.noise_sd()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // long recording so filter start-up stays outside the analysed slice
    let n = 20_000;
    let rec = Recording {
        id: "quiet".into(),
        subject_id: "s01".into(),
        session_id: "1".into(),
        device: Device::Muse,
        sampling_rate_hz: fs,
        channel_names: cfg.channel_names(),
        samples: Array2::from_shape_fn((4, n), |(c, t)| spec.ns_i.value(c, t, fs) + noise.sample(&mut rng)),
        markers: vec![],
    };
    let (clean, _) = preprocess_pipeline(&rec, &PreprocessConfig::default()).unwrap();
    let mid = clean.samples.slice(ndarray::s![.., 8000..12000]).to_owned();
    let x = short_term_energy(&mid, &corpus.frame_spec, "quiet").unwrap();
    let min = b.ad.as_ref().unwrap().models[&StateLabel::S].topology.min_duration();
    // the pruned search may find no admissible path at all, since every path needs an S run
    if let Err(e) = b.ad_decode(&x) {
        assert!(matches!(e, Error::NoSurvivingPath));
    }
    // the grammar needs one S run; it must sit at an edge and stay near the minimum
    let ad = exact(&b).ad_decode(&x).unwrap();
    let s_runs: Vec<_> = ad.label_runs.iter().filter(|r| r.0 == StateLabel::S).collect();
    assert_eq!(s_runs.len(), 1, "{:?}", ad.label_runs);
    let (_, start, len) = s_runs[0];
    assert!(*start == 0 || start + len == x.n_frames(), "{:?}", ad.label_runs);
    assert!(*len <= 2 * min, "S run of {len} frames, min duration {min}");
}
