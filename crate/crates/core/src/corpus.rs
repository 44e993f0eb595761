//! Per-segment training material: cleaned-signal features, VAD-derived
//! labels and reference unit sequences, keyed by segment id.

use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AudioTrack, Condition, DatasetManifest, Device, Recording, Segment};
use crate::error::{Error, Result};
use crate::features::{
    build_frame_labels, project_labels_to_imagined, short_term_energy, vad_energy, FeatureMatrix,
    FrameLabelSequence, FrameSpec, LabelScheme, VadParams,
};
use crate::preprocess::{preprocess_pipeline, reject_trials, PreprocessConfig, StageLog};
use crate::synth::{truth_labels, SegmentTruth};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusOptions {
    pub preprocess: PreprocessConfig,
    pub frame_spec: FrameSpec,
    pub vad: VadParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusItem {
    pub segment: Segment,
    pub subject_id: String,
    pub session_id: String,
    pub device: Device,
    /// Raw per-channel short-term energies.
    pub features: FeatureMatrix,
    /// DNS3 labels from audio VAD (heard) or projected from the paired heard
    /// segment (imagined). `None` when VAD disagreed with the unit count.
    pub labels: Option<FrameLabelSequence>,
    /// Unit-only labels with boundaries at gap midpoints.
    pub bl_labels: Option<FrameLabelSequence>,
    /// Reference unit sequence from the phrase inventory.
    pub units: Vec<String>,
    /// Generator truth (DNS3), when a sidecar exists.
    pub truth: Option<FrameLabelSequence>,
}

impl CorpusItem {
    /// Training labels for a scheme, if available.
    pub fn labels_for(&self, scheme: LabelScheme) -> Option<FrameLabelSequence> {
        match scheme {
            LabelScheme::Bl => self.bl_labels.clone(),
            s => self.labels.as_ref().map(|l| l.convert(s)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub frame_spec: FrameSpec,
    pub inventory: BTreeMap<String, Vec<String>>,
    pub items: BTreeMap<String, CorpusItem>,
    pub stage_logs: Vec<StageLog>,
    /// Segments dropped by amplitude rejection.
    pub rejected: Vec<String>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Result<&CorpusItem> {
        self.items.get(id).ok_or_else(|| Error::UnknownSegment(id.to_string()))
    }

    /// Items of the given ids that exist in the corpus, in id order.
    pub fn select<'a, I: IntoIterator<Item = &'a String>>(&self, ids: I) -> Vec<&CorpusItem> {
        ids.into_iter().filter_map(|id| self.items.get(id)).collect()
    }
}

fn heard_labels(
    audio: &AudioTrack,
    units: &[String],
    seg: &Segment,
    opts: &CorpusOptions,
) -> Result<(FrameLabelSequence, FrameLabelSequence)> {
    let vad = vad_energy(&audio.samples, audio.fs, &opts.vad)?;
    let dns3 = build_frame_labels(&vad, units, seg, &opts.frame_spec, LabelScheme::Dns3)?;
    let bl = build_frame_labels(&vad, units, seg, &opts.frame_spec, LabelScheme::Bl)?;
    Ok((dns3, bl))
}

/// Builds the corpus from raw recordings held in memory.
///
/// Recordings are cleaned in parallel, segments failing amplitude rejection
/// are dropped, and labels come from the audio of each heard segment.
pub fn build_corpus(
    manifest: &DatasetManifest,
    recordings: &[Recording],
    audio: &BTreeMap<String, AudioTrack>,
    truth: &BTreeMap<String, SegmentTruth>,
    opts: &CorpusOptions,
) -> Result<Corpus> {
    let cleaned: Vec<(Recording, StageLog)> = manifest
        .recordings
        .par_iter()
        .map(|entry| {
            let raw = recordings
                .iter()
                .find(|r| r.id == entry.id)
                .ok_or_else(|| Error::MalformedManifest(format!("recording {} not supplied", entry.id)))?;
            preprocess_pipeline(raw, &opts.preprocess)
        })
        .collect::<Result<_>>()?;

    let mut corpus = Corpus {
        frame_spec: opts.frame_spec,
        inventory: manifest.phrase_inventory.clone(),
        ..Default::default()
    };
    for (rec, log) in cleaned {
        let segs: Vec<Segment> = manifest.segments.iter().filter(|s| s.recording_id == rec.id).cloned().collect();
        let kept = match opts.preprocess.reject_above_uv {
            Some(t) => {
                let (kept, rejected) = reject_trials(&rec, &segs, t);
                corpus.rejected.extend(rejected.into_iter().map(|s| s.id));
                kept
            }
            None => segs,
        };
        let items: Vec<CorpusItem> = kept
            .par_iter()
            .map(|seg| {
                let features = short_term_energy(&rec.slice(seg), &opts.frame_spec, &seg.id)?;
                let units = manifest.phrase_inventory[&seg.phrase_id].clone();
                let truth = match truth.get(&seg.id) {
                    Some(t) => Some(truth_labels(t, seg.len(), &opts.frame_spec)?),
                    None => None,
                };
                Ok(CorpusItem {
                    segment: seg.clone(),
                    subject_id: rec.subject_id.clone(),
                    session_id: rec.session_id.clone(),
                    device: rec.device,
                    features,
                    labels: None,
                    bl_labels: None,
                    units,
                    truth,
                })
            })
            .collect::<Result<_>>()?;
        corpus.items.extend(items.into_iter().map(|i| (i.segment.id.clone(), i)));
        corpus.stage_logs.push(log);
    }

    // heard labels first, imagined ones are projected from them
    let heard_ids: Vec<String> =
        corpus.items.values().filter(|i| i.segment.condition == Condition::Heard).map(|i| i.segment.id.clone()).collect();
    for id in heard_ids {
        let item = corpus.items.get_mut(&id).expect("id taken from the map");
        let Some(track) = audio.get(&id) else { continue };
        match heard_labels(track, &item.units, &item.segment, opts) {
            Ok((dns3, bl)) => {
                item.labels = Some(dns3);
                item.bl_labels = Some(bl);
            }
            Err(Error::UnitIntervalMismatch { units, intervals }) => {
                warn!("{id}: VAD found {intervals} intervals for {units} units; segment left unlabelled");
            }
            Err(e) => return Err(e),
        }
    }
    let imagined_ids: Vec<String> = corpus
        .items
        .values()
        .filter(|i| i.segment.condition == Condition::Imagined)
        .map(|i| i.segment.id.clone())
        .collect();
    for id in imagined_ids {
        let item = &corpus.items[&id];
        let Some(paired) = item.segment.paired_heard.as_ref().and_then(|h| corpus.items.get(h)) else { continue };
        let n = item.features.n_frames();
        let project = |l: &Option<FrameLabelSequence>| -> Result<Option<FrameLabelSequence>> {
            match l {
                Some(l) => match project_labels_to_imagined(l, n) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::TooFewFrames { .. }) => Ok(None),
                    Err(e) => Err(e),
                },
                None => Ok(None),
            }
        };
        let (labels, bl) = (project(&paired.labels)?, project(&paired.bl_labels)?);
        let item = corpus.items.get_mut(&id).expect("id taken from the map");
        item.labels = labels;
        item.bl_labels = bl;
    }
    let unlabelled = corpus.items.values().filter(|i| i.labels.is_none()).count();
    debug!("corpus: {} segments, {unlabelled} without labels", corpus.items.len());
    Ok(corpus)
}

/// Loads every recording, audio track and truth sidecar named by the
/// manifest, then builds the corpus.
pub fn load_corpus(manifest: &DatasetManifest, opts: &CorpusOptions) -> Result<Corpus> {
    let recordings: Vec<Recording> =
        manifest.recordings.par_iter().map(|r| manifest.load_recording(&r.id)).collect::<Result<_>>()?;
    let mut audio = BTreeMap::new();
    let mut truth = BTreeMap::new();
    for seg in &manifest.segments {
        if let Some(track) = manifest.load_audio(seg)? {
            audio.insert(seg.id.clone(), track);
        }
        if let Some(rel) = &seg.truth {
            let t: SegmentTruth = serde_json::from_str(&std::fs::read_to_string(manifest.resolve(rel))?)?;
            truth.insert(seg.id.clone(), t);
        }
    }
    build_corpus(manifest, &recordings, &audio, &truth, opts)
}
