use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FrameSpec, VadIntervals};
use crate::data::Segment;
use crate::error::{Error, Result};
use crate::label::{label_runs, StateLabel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelScheme {
    /// Unit labels only.
    #[serde(rename = "BL")]
    Bl,
    /// Units plus one merged non-speech label.
    #[serde(rename = "DNS")]
    Dns,
    /// Units plus NS_b / NS_i / NS_e.
    #[serde(rename = "DNS3")]
    Dns3,
    /// S plus NS_b / NS_i / NS_e, for activity detection.
    #[serde(rename = "AD")]
    Activity,
}

impl LabelScheme {
    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::Bl => "BL",
            LabelScheme::Dns => "DNS",
            LabelScheme::Dns3 => "DNS3",
            LabelScheme::Activity => "AD",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabelSequence {
    pub labels: Vec<StateLabel>,
    pub scheme: LabelScheme,
}

impl FrameLabelSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn runs(&self) -> Vec<(StateLabel, usize, usize)> {
        label_runs(&self.labels)
    }

    /// Unit ids in order of appearance, one per unit run.
    pub fn unit_sequence(&self) -> Vec<String> {
        self.runs().into_iter().filter_map(|(l, _, _)| l.unit_id().map(str::to_string)).collect()
    }

    /// Relabels a DNS3 sequence into another scheme.
    pub fn convert(&self, scheme: LabelScheme) -> FrameLabelSequence {
        let labels = match scheme {
            LabelScheme::Dns3 | LabelScheme::Bl => self.labels.clone(),
            LabelScheme::Dns => self.labels.iter().map(StateLabel::to_merged_ns).collect(),
            LabelScheme::Activity => self.labels.iter().map(StateLabel::to_activity).collect(),
        };
        FrameLabelSequence { labels, scheme }
    }

    pub fn to_columnar(&self) -> String {
        let mut out = String::from("frame\tlabel\n");
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(out, "{i}\t{l}").unwrap();
        }
        out
    }

    pub fn write_columnar(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_columnar())?;
        Ok(())
    }
}

/// Labels frames from a piecewise timeline of `(label, start, end)` spans in
/// segment samples, each frame taking the span holding its window centre.
/// Spans too short to hold any centre still claim the nearest non-speech frame.
pub fn labels_from_timeline(
    spans: &[(StateLabel, f64, f64)],
    n_samples: usize,
    spec: &FrameSpec,
    scheme: LabelScheme,
) -> Result<FrameLabelSequence> {
    let n_frames = spec.n_frames(n_samples)?;
    let fallback = spans.last().map(|s| s.0.clone()).unwrap_or(StateLabel::Ns);
    let mut labels: Vec<StateLabel> = (0..n_frames)
        .map(|i| {
            let c = spec.center(i);
            spans
                .iter()
                .find(|(_, s, e)| *s <= c && c < *e)
                .map(|(l, _, _)| l.clone())
                .unwrap_or_else(|| fallback.clone())
        })
        .collect();
    for (label, s, e) in spans.iter().filter(|(l, _, _)| !l.is_ns()) {
        if labels.iter().any(|l| l == label) && (0..n_frames).any(|i| (*s..*e).contains(&spec.center(i))) {
            continue;
        }
        let mid = 0.5 * (s + e);
        let nearest = (0..n_frames)
            .filter(|&i| labels[i].is_ns())
            .min_by(|&a, &b| (spec.center(a) - mid).abs().total_cmp(&(spec.center(b) - mid).abs()));
        if let Some(i) = nearest {
            labels[i] = label.clone();
        }
    }
    Ok(FrameLabelSequence { labels, scheme })
}

/// Builds frame labels for one segment from audio VAD intervals.
///
/// Interval boundaries are mapped from the audio timeline onto the segment by
/// proportional scaling.
pub fn build_frame_labels(
    vad: &VadIntervals,
    units: &[String],
    segment: &Segment,
    spec: &FrameSpec,
    scheme: LabelScheme,
) -> Result<FrameLabelSequence> {
    if vad.len() != units.len() || units.is_empty() {
        return Err(Error::UnitIntervalMismatch { units: units.len(), intervals: vad.len() });
    }
    let n = segment.len();
    let scale = n as f64 / vad.n_samples.max(1) as f64;
    let iv: Vec<(f64, f64)> = vad.intervals.iter().map(|&(s, e)| (s as f64 * scale, e as f64 * scale)).collect();
    let unit = |k: usize| StateLabel::Unit(units[k].clone());
    let mut spans = Vec::new();
    match scheme {
        LabelScheme::Bl => {
            let mut start = 0.0;
            for k in 0..units.len() {
                let end = if k + 1 < units.len() { 0.5 * (iv[k].1 + iv[k + 1].0) } else { n as f64 };
                spans.push((unit(k), start, end));
                start = end;
            }
        }
        LabelScheme::Dns | LabelScheme::Dns3 | LabelScheme::Activity => {
            let gap = |k: usize| -> StateLabel {
                if scheme == LabelScheme::Dns {
                    StateLabel::Ns
                } else if k == 0 {
                    StateLabel::NsB
                } else if k == units.len() {
                    StateLabel::NsE
                } else {
                    StateLabel::NsI
                }
            };
            let mut cursor = 0.0;
            for (k, &(s, e)) in iv.iter().enumerate() {
                spans.push((gap(k), cursor, s));
                let l = if scheme == LabelScheme::Activity { StateLabel::S } else { unit(k) };
                spans.push((l, s, e));
                cursor = e;
            }
            spans.push((gap(units.len()), cursor, f64::INFINITY));
            spans.retain(|(_, s, e)| e > s);
        }
    }
    labels_from_timeline(&spans, n, spec, scheme)
}

/// Rescales each label run of a heard sequence onto `n_frames` frames, keeping
/// run order. Every run keeps at least one frame; the rounding residue goes to
/// the final run.
pub fn project_labels_to_imagined(heard: &FrameLabelSequence, n_frames: usize) -> Result<FrameLabelSequence> {
    let runs = heard.runs();
    if runs.is_empty() || n_frames < runs.len() {
        return Err(Error::TooFewFrames { runs: runs.len(), frames: n_frames });
    }
    let scale = n_frames as f64 / heard.len() as f64;
    let last = runs.len() - 1;
    let mut lens: Vec<usize> = runs[..last].iter().map(|r| ((r.2 as f64 * scale).round() as usize).max(1)).collect();
    while lens.iter().sum::<usize>() + 1 > n_frames {
        let (i, _) = lens.iter().enumerate().max_by_key(|(i, l)| (**l, usize::MAX - i)).unwrap();
        lens[i] -= 1;
    }
    lens.push(n_frames - lens.iter().sum::<usize>());
    let labels = runs.iter().zip(&lens).flat_map(|(r, &n)| std::iter::repeat_n(r.0.clone(), n)).collect();
    Ok(FrameLabelSequence { labels, scheme: heard.scheme })
}
