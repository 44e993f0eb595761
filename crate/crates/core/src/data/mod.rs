//! Recordings, markers, segments, dataset manifests and train/test splits.

mod container;
mod manifest;
mod split;

pub use container::{read_container, read_container_header, write_container, ContainerHeader};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, RecordingEntry};
pub use split::{make_splits, Fold, Scenario, SplitSpec};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MUSE_CHANNELS: [&str; 4] = ["Fp1", "Fp2", "TP9", "TP10"];
pub const EGI_CHANNEL_COUNT: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    Muse,
    #[serde(rename = "EGI")]
    Egi,
    #[serde(rename = "EGIReduced")]
    EgiReduced,
}

impl Device {
    pub fn expected_channels(self) -> usize {
        match self {
            Device::Muse | Device::EgiReduced => 4,
            Device::Egi => EGI_CHANNEL_COUNT,
        }
    }

    pub fn nominal_rate_hz(self) -> f64 {
        match self {
            Device::Muse => 1000.0,
            Device::Egi | Device::EgiReduced => 250.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Device::Muse => "Muse",
            Device::Egi => "EGI",
            Device::EgiReduced => "EGIReduced",
        }
    }
}

impl std::fmt::Display for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Device {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Muse" | "muse" => Ok(Device::Muse),
            "EGI" | "egi" => Ok(Device::Egi),
            "EGIReduced" | "egi-reduced" => Ok(Device::EgiReduced),
            other => Err(Error::InvalidArgument(format!("unknown device {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarkerKind {
    StimulusOnset,
    StimulusEnd,
    ImagineStart,
    /// Mouse click closing the imagination step.
    ImagineEnd,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub kind: MarkerKind,
    pub phrase_id: String,
    pub sample_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Heard,
    Imagined,
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Heard" | "heard" => Ok(Condition::Heard),
            "Imagined" | "imagined" => Ok(Condition::Imagined),
            other => Err(Error::InvalidArgument(format!("unknown condition {other}"))),
        }
    }
}

/// A marker-delimited slice of a recording used as one train/test instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub recording_id: String,
    pub start_sample: usize,
    pub end_sample: usize,
    pub condition: Condition,
    pub phrase_id: String,
    /// Paired stimulus audio (heard segments), relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    /// Heard segment whose labels stand in as ground truth (imagined segments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_heard: Option<String>,
    /// Generator truth sidecar, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

/// Mono audio paired with a heard segment.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioTrack {
    pub fs: u32,
    pub samples: Vec<f64>,
}

/// Multichannel recording held in memory, samples in microvolts.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: String,
    pub subject_id: String,
    pub session_id: String,
    pub device: Device,
    pub sampling_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// `[n_channels, n_samples]`
    pub samples: Array2<f64>,
    pub markers: Vec<Marker>,
}

impl Recording {
    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_names.len() != self.samples.nrows() {
            return Err(Error::ChannelCountMismatch {
                id: self.id.clone(),
                expected: self.channel_names.len(),
                found: self.samples.nrows(),
            });
        }
        check_device_channels(&self.id, self.device, &self.channel_names)?;
        check_rate(&self.id, self.sampling_rate_hz)?;
        check_markers(&self.id, &self.markers, self.n_samples())
    }

    /// Segment samples `[n_channels, len]`.
    pub fn slice(&self, seg: &Segment) -> Array2<f64> {
        self.samples
            .slice(ndarray::s![.., seg.start_sample..seg.end_sample])
            .to_owned()
    }
}

pub(crate) fn check_device_channels(id: &str, device: Device, names: &[String]) -> Result<()> {
    let expected = device.expected_channels();
    if names.len() != expected {
        return Err(Error::ChannelCountMismatch { id: id.to_string(), expected, found: names.len() });
    }
    if device == Device::Muse {
        for want in MUSE_CHANNELS {
            if !names.iter().any(|n| n == want) {
                return Err(Error::MalformedManifest(format!(
                    "Muse recording {id} lacks channel {want}"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_rate(id: &str, fs: f64) -> Result<()> {
    if !(fs.is_finite() && fs > 120.0) {
        return Err(Error::MalformedManifest(format!(
            "recording {id}: sampling rate {fs} Hz does not leave 60 Hz below Nyquist"
        )));
    }
    Ok(())
}

pub(crate) fn check_markers(id: &str, markers: &[Marker], n_samples: usize) -> Result<()> {
    for w in markers.windows(2) {
        if w[1].sample_index < w[0].sample_index {
            return Err(Error::MalformedManifest(format!("recording {id}: markers not sorted")));
        }
    }
    if let Some(m) = markers.iter().find(|m| m.sample_index >= n_samples) {
        return Err(Error::MalformedManifest(format!(
            "recording {id}: marker at {} beyond {n_samples} samples",
            m.sample_index
        )));
    }
    Ok(())
}

/// Pairs stimulus and imagination markers into segments.
///
/// Heard segments come from `StimulusOnset`/`StimulusEnd`, imagined ones from
/// `ImagineStart`/`ImagineEnd`. Each imagined segment is linked to the most
/// recent heard segment of the same phrase.
pub fn extract_segments(recording: &Recording) -> Result<Vec<Segment>> {
    let mut open_heard: Option<&Marker> = None;
    let mut open_imagined: Option<&Marker> = None;
    let mut segments = Vec::new();
    let mut last_heard: std::collections::HashMap<&str, String> = Default::default();
    let (mut n_heard, mut n_imag) = (0usize, 0usize);

    let unpaired = |m: &Marker| Error::UnpairedMarker {
        kind: format!("{:?}", m.kind),
        phrase_id: m.phrase_id.clone(),
        sample_index: m.sample_index,
    };

    for m in &recording.markers {
        match m.kind {
            MarkerKind::StimulusOnset | MarkerKind::ImagineStart => {
                let slot = if m.kind == MarkerKind::StimulusOnset {
                    &mut open_heard
                } else {
                    &mut open_imagined
                };
                if let Some(prev) = slot {
                    return Err(unpaired(prev));
                }
                *slot = Some(m);
            }
            MarkerKind::StimulusEnd | MarkerKind::ImagineEnd => {
                let heard = m.kind == MarkerKind::StimulusEnd;
                let slot = if heard { &mut open_heard } else { &mut open_imagined };
                let start = match slot.take() {
                    Some(s) if s.phrase_id == m.phrase_id && s.sample_index < m.sample_index => s,
                    Some(s) => return Err(unpaired(s)),
                    None => return Err(unpaired(m)),
                };
                let (condition, id) = if heard {
                    n_heard += 1;
                    (Condition::Heard, format!("{}-h{:03}", recording.id, n_heard - 1))
                } else {
                    n_imag += 1;
                    (Condition::Imagined, format!("{}-i{:03}", recording.id, n_imag - 1))
                };
                let paired_heard = if heard {
                    last_heard.insert(m.phrase_id.as_str(), id.clone());
                    None
                } else {
                    last_heard.get(m.phrase_id.as_str()).cloned()
                };
                segments.push(Segment {
                    id,
                    recording_id: recording.id.clone(),
                    start_sample: start.sample_index,
                    end_sample: m.sample_index,
                    condition,
                    phrase_id: m.phrase_id.clone(),
                    audio: None,
                    paired_heard,
                    truth: None,
                });
            }
        }
    }
    if let Some(m) = open_heard.or(open_imagined) {
        return Err(unpaired(m));
    }
    Ok(segments)
}

/// Builds the reduced four-channel EGI view: Fp1, Fp2, TP9 and TP10, each
/// re-referenced to Fpz.
pub fn derive_egi_reduced(recording: &Recording) -> Result<Recording> {
    let fpz = recording
        .channel_index("Fpz")
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no Fpz channel", recording.id)))?;
    let mut rows = Vec::with_capacity(4);
    for name in MUSE_CHANNELS {
        let idx = recording
            .channel_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no {name} channel", recording.id)))?;
        rows.push(&recording.samples.row(idx) - &recording.samples.row(fpz));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let samples = ndarray::stack(Axis(0), &views).expect("equal-length rows");
    Ok(Recording {
        id: format!("{}-reduced", recording.id),
        subject_id: recording.subject_id.clone(),
        session_id: recording.session_id.clone(),
        device: Device::EgiReduced,
        sampling_rate_hz: recording.sampling_rate_hz,
        channel_names: MUSE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        samples,
        markers: recording.markers.clone(),
    })
}
