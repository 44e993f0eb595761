use std::collections::BTreeMap;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_fold, FoldReport};
use crate::corpus::{build_corpus, CorpusOptions};
use crate::data::{make_splits, Condition, Scenario};
use crate::error::{Error, Result};
use crate::hierarchy::{train_bundle, HyperParams, Scheme};
use crate::synth::{generate_dataset, SynthConfig};

/// End-to-end synthetic run: generate, clean, label, split, train, score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub synth: SynthConfig,
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub n_trials: usize,
    pub condition: Condition,
    pub scenario: Scenario,
    pub ratio: f64,
    pub schemes: Vec<Scheme>,
    pub corpus: CorpusOptions,
    pub hyper: HyperParams,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            n_subjects: 4,
            n_sessions: 1,
            n_trials: 10,
            condition: Condition::Heard,
            scenario: Scenario::IntraSession,
            ratio: 0.7,
            schemes: Scheme::ALL.to_vec(),
            corpus: CorpusOptions::default(),
            hyper: HyperParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub seed: u64,
    /// Pooled unit accuracy per scheme.
    pub accuracy: BTreeMap<Scheme, f64>,
    /// HC activity-detection frame accuracy against generator truth.
    pub ad_frame_accuracy: Option<f64>,
    pub folds: Vec<FoldReport>,
}

/// Runs the benchmark with `seed` driving the generator, the split and training.
pub fn run_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkResult> {
    let synth = SynthConfig { seed, ..cfg.synth.clone() };
    let data = generate_dataset(&synth, cfg.n_subjects, cfg.n_sessions, cfg.n_trials)?;
    let manifest = data.manifest.with_condition(cfg.condition);
    let corpus = build_corpus(&data.manifest, &data.recordings, &data.audio, &data.truth, &cfg.corpus)?;
    let split = make_splits(&manifest, cfg.scenario, cfg.ratio, seed)?;
    let hyper = HyperParams { seed, ..cfg.hyper.clone() };

    let jobs: Vec<(Scheme, usize)> =
        cfg.schemes.iter().flat_map(|&s| (0..split.folds.len()).map(move |f| (s, f))).collect();
    let folds: Vec<FoldReport> = jobs
        .par_iter()
        .map(|&(scheme, f)| {
            let fold = &split.folds[f];
            let bundle = train_bundle(&corpus, &fold.train, scheme, &hyper)?;
            score_fold(&bundle, &fold.name, &fold.test, &corpus)
        })
        .collect::<Result<_>>()?;

    let mut accuracy = BTreeMap::new();
    for &scheme in &cfg.schemes {
        let counts: super::UerCounts = folds.iter().filter(|f| f.scheme == scheme).map(|f| f.counts).sum();
        accuracy.insert(scheme, counts.accuracy());
    }
    let ad: Vec<&FoldReport> = folds.iter().filter(|f| f.ad_frame_accuracy.is_some()).collect();
    let ad_frame_accuracy = if ad.is_empty() {
        None
    } else {
        let (mut correct, mut total) = (0usize, 0usize);
        for f in &ad {
            for s in &f.segments {
                if let Some(c) = s.ad_frames_correct {
                    correct += c;
                    total += s.n_frames;
                }
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    };
    info!("benchmark seed {seed}: {accuracy:?}, AD {ad_frame_accuracy:?}");
    Ok(BenchmarkResult { seed, accuracy, ad_frame_accuracy, folds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// (snr, mean AD frame accuracy over seeds) for every grid point.
    pub points: Vec<(f64, f64)>,
    /// Grid point whose accuracy is closest to the target.
    pub snr: f64,
    pub accuracy: f64,
}

/// Sweeps `snrs` and picks the one whose HC activity-detection frame
/// accuracy, averaged over `seeds`, is closest to `target`.
pub fn calibrate_snr(cfg: &BenchmarkConfig, target: f64, snrs: &[f64], seeds: &[u64]) -> Result<Calibration> {
    if snrs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one snr and one seed".into()));
    }
    let mut points = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        let c = BenchmarkConfig {
            synth: SynthConfig { snr, ..cfg.synth.clone() },
            schemes: vec![Scheme::Hc],
            ..cfg.clone()
        };
        let mut sum = 0.0;
        for &seed in seeds {
            let r = run_benchmark(&c, seed)?;
            sum += r.ad_frame_accuracy.ok_or_else(|| Error::InsufficientData("no activity decode was scored".into()))?;
        }
        let acc = sum / seeds.len() as f64;
        info!("calibration snr {snr}: AD {acc:.4}");
        points.push((snr, acc));
    }
    let &(snr, accuracy) = points
        .iter()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .expect("non-empty grid");
    Ok(Calibration { points, snr, accuracy })
}
