//! Unit error rate scoring and scenario reports.
//!
//! UER pools insertions, deletions and substitutions over all segments of a
//! fold and divides by the pooled reference length; accuracy is `1 - UER`
//! and may go negative.

mod align;
mod benchmark;
mod report;

pub use align::{edit_align, AlignOp, Alignment, OpKind};
pub use benchmark::{calibrate_snr, run_benchmark, BenchmarkConfig, BenchmarkResult, Calibration};
pub use report::{published_reference, scenario_report, CellStatus, ReportCell, ReportOptions, ScenarioReport};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::LabelScheme;
use crate::hierarchy::{ClassifierBundle, Scheme};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UerCounts {
    pub n_ins: usize,
    pub n_del: usize,
    pub n_sub: usize,
    pub n_ref: usize,
}

impl UerCounts {
    pub fn from_alignment(a: &Alignment) -> Self {
        Self { n_ins: a.n_ins, n_del: a.n_del, n_sub: a.n_sub, n_ref: a.n_match + a.n_sub + a.n_del }
    }

    pub fn add(&mut self, other: &UerCounts) {
        self.n_ins += other.n_ins;
        self.n_del += other.n_del;
        self.n_sub += other.n_sub;
        self.n_ref += other.n_ref;
    }

    pub fn errors(&self) -> usize {
        self.n_ins + self.n_del + self.n_sub
    }

    /// `NaN` when there are no reference units.
    pub fn uer(&self) -> f64 {
        self.errors() as f64 / self.n_ref as f64
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.uer()
    }
}

impl std::iter::Sum<UerCounts> for UerCounts {
    fn sum<I: Iterator<Item = UerCounts>>(iter: I) -> Self {
        let mut out = UerCounts::default();
        for c in iter {
            out.add(&c);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub segment_id: String,
    pub reference_phrase: String,
    pub predicted_phrase: Option<String>,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    pub counts: UerCounts,
    /// Why no hypothesis was produced.
    pub failure: Option<String>,
    /// Frames where the activity decode agrees with the reference (HC only).
    pub ad_frames_correct: Option<usize>,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: String,
    pub scheme: Scheme,
    pub counts: UerCounts,
    pub segments: Vec<SegmentResult>,
    /// Pooled activity-detection frame accuracy (HC only).
    pub ad_frame_accuracy: Option<f64>,
    /// Whether the activity reference was generator truth or VAD labels.
    pub ad_reference: Option<String>,
}

impl FoldReport {
    pub fn accuracy(&self) -> f64 {
        self.counts.accuracy()
    }
}

/// Classifies every test segment and pools edit counts against the
/// reference unit sequences. A segment with no surviving decode path counts
/// all its reference units as deletions.
pub fn score_fold(
    bundle: &ClassifierBundle,
    fold_name: &str,
    test_ids: &BTreeSet<String>,
    corpus: &Corpus,
) -> Result<FoldReport> {
    let items = corpus.select(test_ids);
    if items.is_empty() {
        return Err(Error::InsufficientData(format!("fold {fold_name} has no test segments in the corpus")));
    }
    let use_truth = items.iter().all(|i| i.truth.is_some());
    let segments: Vec<SegmentResult> = items
        .par_iter()
        .map(|item| {
            let reference = item.units.clone();
            let n_frames = item.features.n_frames();
            match bundle.classify(&item.features) {
                Ok(c) => {
                    let counts = UerCounts::from_alignment(&edit_align(&reference, &c.units));
                    let ad_ref = if use_truth {
                        item.truth.as_ref()
                    } else {
                        item.labels.as_ref()
                    }
                    .map(|l| l.convert(LabelScheme::Activity));
                    let ad_frames_correct = match (&c.ad, ad_ref) {
                        (Some(h), Some(r)) => {
                            Some(h.frame_labels().iter().zip(&r.labels).filter(|(a, b)| a == b).count())
                        }
                        _ => None,
                    };
                    Ok(SegmentResult {
                        segment_id: item.segment.id.clone(),
                        reference_phrase: item.segment.phrase_id.clone(),
                        predicted_phrase: Some(c.phrase_id),
                        hypothesis: c.units,
                        reference,
                        counts,
                        failure: None,
                        ad_frames_correct,
                        n_frames,
                    })
                }
                Err(Error::NoSurvivingPath) => Ok(SegmentResult {
                    segment_id: item.segment.id.clone(),
                    reference_phrase: item.segment.phrase_id.clone(),
                    predicted_phrase: None,
                    counts: UerCounts { n_del: reference.len(), n_ref: reference.len(), ..Default::default() },
                    reference,
                    hypothesis: Vec::new(),
                    failure: Some(Error::NoSurvivingPath.to_string()),
                    ad_frames_correct: if bundle.scheme == Scheme::Hc { Some(0) } else { None },
                    n_frames,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let counts = segments.iter().map(|s| s.counts).sum();
    let (ad_frame_accuracy, ad_reference) = if bundle.scheme == Scheme::Hc {
        let scored: Vec<&SegmentResult> = segments.iter().filter(|s| s.ad_frames_correct.is_some()).collect();
        let frames: usize = scored.iter().map(|s| s.n_frames).sum();
        let correct: usize = scored.iter().filter_map(|s| s.ad_frames_correct).sum();
        if frames > 0 {
            (Some(correct as f64 / frames as f64), Some(if use_truth { "truth" } else { "vad" }.to_string()))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    Ok(FoldReport { fold: fold_name.to_string(), scheme: bundle.scheme, counts, segments, ad_frame_accuracy, ad_reference })
}
