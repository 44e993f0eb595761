//! Deterministic synthetic speech-EEG datasets with known state timelines.
//!
//! Each trial presents every phrase twice: once heard (with a tone-per-unit
//! audio track) and once imagined (same timeline, rescaled in time). EEG
//! samples are per-state sinusoids with channel-dependent amplitudes plus
//! white noise, so the classifier never sees data drawn from its own model
//! family.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    extract_segments, save_manifest, AudioTrack, write_container, Condition, DatasetManifest, Device, Marker, MarkerKind,
    Recording, RecordingEntry, Segment, EGI_CHANNEL_COUNT, MUSE_CHANNELS,
};
use crate::error::{Error, Result};
use crate::features::{labels_from_timeline, FrameLabelSequence, FrameSpec, LabelScheme};
use crate::label::StateLabel;
use crate::preprocess::electrode_position;
use crate::util::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationSpec {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl DurationSpec {
    pub const fn new(min_ms: f64, max_ms: f64) -> Self {
        Self { min_ms, max_ms }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.max_ms > self.min_ms {
            rng.random_range(self.min_ms..=self.max_ms)
        } else {
            self.min_ms
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Durations {
    pub ns_b: DurationSpec,
    pub ns_i: DurationSpec,
    pub ns_e: DurationSpec,
    pub unit: DurationSpec,
    /// Rest between segments.
    pub rest: DurationSpec,
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            ns_b: DurationSpec::new(350.0, 650.0),
            ns_i: DurationSpec::new(250.0, 450.0),
            ns_e: DurationSpec::new(350.0, 650.0),
            unit: DurationSpec::new(450.0, 750.0),
            rest: DurationSpec::new(600.0, 1200.0),
        }
    }
}

impl Durations {
    fn scaled(&self, k: f64) -> Self {
        let s = |d: DurationSpec| DurationSpec::new(d.min_ms * k, d.max_ms * k);
        Self { ns_b: s(self.ns_b), ns_i: s(self.ns_i), ns_e: s(self.ns_e), unit: s(self.unit), rest: s(self.rest) }
    }
}

/// Sinusoid with one amplitude per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub freq_hz: f64,
    pub amp_uv: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEmission {
    pub components: Vec<Component>,
}

impl StateEmission {
    /// Noise-free value on channel `c` at absolute sample `n`.
    pub fn value(&self, c: usize, n: usize, fs: f64) -> f64 {
        self.components.iter().map(|k| k.amp_uv[c] * (2.0 * PI * k.freq_hz * n as f64 / fs).sin()).sum()
    }

    fn scaled(&self, gains: &[f64]) -> Self {
        StateEmission {
            components: self
                .components
                .iter()
                .map(|k| Component {
                    freq_hz: k.freq_hz,
                    amp_uv: k.amp_uv.iter().zip(gains).map(|(a, g)| a * g).collect(),
                })
                .collect(),
        }
    }
}

/// Emission for every generator state. Units are split into equal-length
/// parts, each with its own emission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpec {
    pub ns_b: StateEmission,
    pub ns_i: StateEmission,
    pub ns_e: StateEmission,
    pub rest: StateEmission,
    pub units: BTreeMap<String, Vec<StateEmission>>,
}

impl EmissionSpec {
    fn map(&self, f: impl Fn(&str, &StateEmission) -> StateEmission) -> Self {
        EmissionSpec {
            ns_b: f("NS_b", &self.ns_b),
            ns_i: f("NS_i", &self.ns_i),
            ns_e: f("NS_e", &self.ns_e),
            rest: f("rest", &self.rest),
            units: self
                .units
                .iter()
                .map(|(u, parts)| {
                    let parts = parts.iter().enumerate().map(|(p, e)| f(&format!("{u}/{p}"), e)).collect();
                    (u.clone(), parts)
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactConfig {
    /// Mean rate of frontal amplitude spikes (per second).
    pub spike_rate_hz: f64,
    pub spike_uv: f64,
    pub spike_ms: f64,
    pub line_noise_uv: f64,
    pub line_hz: f64,
    /// Per-channel DC offsets are drawn from `±dc_offset_uv`.
    pub dc_offset_uv: f64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self { spike_rate_hz: 0.1, spike_uv: 150.0, spike_ms: 300.0, line_noise_uv: 5.0, line_hz: 50.0, dc_offset_uv: 20.0 }
    }
}

impl ArtifactConfig {
    pub fn none() -> Self {
        Self { spike_rate_hz: 0.0, spike_uv: 0.0, spike_ms: 300.0, line_noise_uv: 0.0, line_hz: 50.0, dc_offset_uv: 0.0 }
    }
}

/// Default inventory: five phrases over nine words, unit counts {1, 2, 2, 3, 3}.
pub fn default_phrases() -> BTreeMap<String, Vec<String>> {
    let p = |id: &str, units: &[&str]| (id.to_string(), units.iter().map(|u| u.to_string()).collect());
    BTreeMap::from([
        p("p1", &["hello"]),
        p("p2", &["good", "morning"]),
        p("p3", &["thank", "you"]),
        p("p4", &["how", "are", "you"]),
        p("p5", &["i", "am", "good"]),
    ])
}

/// Noise level at which activity-detection frame accuracy lands near 0.76 on
/// the default Muse configuration (found with [`calibrate_snr`]).
pub const CALIBRATED_SNR: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub device: Device,
    pub phrases: BTreeMap<String, Vec<String>>,
    /// Amplitude of the non-speech oscillation before spatial shaping (µV).
    pub base_uv: f64,
    /// Extra relative amplitude of speech states over non-speech.
    pub separation: f64,
    /// Spread of the per-unit spatial amplitude patterns around the common
    /// speech level; small values make units hard to tell apart.
    pub unit_contrast: f64,
    /// Reference noise level; the standard deviation used is `noise_uv / snr`.
    pub noise_uv: f64,
    pub snr: f64,
    pub unit_parts: usize,
    pub durations: Durations,
    /// Imagined segments stretch the heard timeline by a factor drawn from this range.
    pub imagined_scale: (f64, f64),
    /// Log-normal spread of per-subject and per-session channel gains.
    pub subject_scale: f64,
    pub session_scale: f64,
    pub artifacts: ArtifactConfig,
    pub audio_rate_hz: u32,
    /// Explicit emissions; derived from the seed when absent.
    pub emissions: Option<EmissionSpec>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            device: Device::Muse,
            phrases: default_phrases(),
            base_uv: 10.0,
            separation: 0.6,
            unit_contrast: 0.1,
            noise_uv: 10.0,
            snr: CALIBRATED_SNR,
            unit_parts: 3,
            durations: Durations::default(),
            imagined_scale: (0.8, 1.3),
            subject_scale: 0.1,
            session_scale: 0.05,
            artifacts: ArtifactConfig::default(),
            audio_rate_hz: 8000,
            emissions: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Defaults for a device. At 250 Hz the default frame spans 500 ms, so EGI
    /// timelines are stretched fourfold to keep several frames per state.
    pub fn for_device(device: Device) -> Self {
        let mut c = Self { device, ..Self::default() };
        if device != Device::Muse {
            c.durations = c.durations.scaled(4.0);
        }
        c
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.device.nominal_rate_hz()
    }

    pub fn channel_names(&self) -> Vec<String> {
        match self.device {
            Device::Egi => (1..=EGI_CHANNEL_COUNT).map(|k| format!("E{k}")).collect(),
            _ => MUSE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn noise_sd(&self) -> f64 {
        if self.snr.is_infinite() {
            0.0
        } else {
            self.noise_uv / self.snr
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let d = &self.durations;
        for (name, s) in [("ns_b", d.ns_b), ("ns_i", d.ns_i), ("ns_e", d.ns_e), ("unit", d.unit), ("rest", d.rest)] {
            if !(s.min_ms > 0.0 && s.max_ms >= s.min_ms) {
                return bad(format!("duration {name} must satisfy 0 < min <= max"));
            }
        }
        if self.phrases.len() < 2 {
            return bad("need at least 2 phrases".into());
        }
        let counts: BTreeSet<usize> = self.phrases.values().map(Vec::len).collect();
        if counts.len() < 2 {
            return bad("phrases must not all have the same unit count".into());
        }
        if self.phrases.values().any(Vec::is_empty) {
            return bad("phrase with no units".into());
        }
        if !(self.snr > 0.0) || !(self.noise_uv >= 0.0) || !(self.base_uv > 0.0) {
            return bad("snr and base amplitude must be positive, noise non-negative".into());
        }
        if !(self.unit_contrast >= 0.0) || !(self.separation >= 0.0) {
            return bad("separation and unit_contrast must be non-negative".into());
        }
        if self.unit_parts == 0 {
            return bad("unit_parts must be at least 1".into());
        }
        let (lo, hi) = self.imagined_scale;
        if !(lo > 0.0 && hi >= lo) {
            return bad("imagined_scale must satisfy 0 < lo <= hi".into());
        }
        if self.audio_rate_hz == 0 {
            return bad("audio rate must be positive".into());
        }
        Ok(())
    }

    /// Same as [`validate`](Self::validate) minus the differing-count rule,
    /// for degenerate inventories built on purpose.
    fn validate_relaxed(&self) -> Result<()> {
        match self.validate() {
            Err(Error::InvalidConfig(m)) if m.contains("same unit count") => Ok(()),
            other => other,
        }
    }

    fn units(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.phrases.values().flatten().collect();
        set.into_iter().cloned().collect()
    }

    /// Emissions in effect: the explicit spec or the seeded default.
    pub fn emission_spec(&self) -> EmissionSpec {
        if let Some(e) = &self.emissions {
            return e.clone();
        }
        let names = self.channel_names();
        let n = names.len();
        let pos: Vec<[f64; 3]> =
            names.iter().map(|c| electrode_position(c, n).expect("generated channels have positions")).collect();
        let ns = |shape: &dyn Fn(&[f64; 3]) -> f64| StateEmission {
            components: vec![Component { freq_hz: 10.0, amp_uv: pos.iter().map(|p| self.base_uv * shape(p)).collect() }],
        };
        let mut rng = rng_for(self.seed, "emissions");
        let speech = self.base_uv * (1.0 + self.separation);
        let units = self
            .units()
            .into_iter()
            .map(|u| {
                let parts = (0..self.unit_parts)
                    .map(|_| {
                        let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                        let freq = rng.random_range(12.0..30.0);
                        let amp = pos
                            .iter()
                            .map(|p| speech * (1.0 + self.unit_contrast * (w[0] * p[0] + w[1] * p[1] + w[2] * p[2])).max(0.2))
                            .collect();
                        StateEmission { components: vec![Component { freq_hz: freq, amp_uv: amp }] }
                    })
                    .collect();
                (u, parts)
            })
            .collect();
        EmissionSpec {
            ns_b: ns(&|p| 1.0 + 0.6 * p[1]),
            ns_i: ns(&|_| 1.0),
            ns_e: ns(&|p| 1.0 - 0.3 * p[1]),
            rest: ns(&|_| 1.0),
            units,
        }
    }
}

/// One state span of a segment, in samples relative to the segment start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSpan {
    pub label: StateLabel,
    pub start: usize,
    pub end: usize,
}

/// Generator truth for one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_id: String,
    pub phrase_id: String,
    pub condition: Condition,
    pub timeline: Vec<TruthSpan>,
}

/// In-memory synthetic dataset.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub recordings: Vec<Recording>,
    pub truth: BTreeMap<String, SegmentTruth>,
    /// Audio per heard segment id.
    pub audio: BTreeMap<String, AudioTrack>,
    pub config: SynthConfig,
}

impl SynthDataset {
    pub fn recording(&self, id: &str) -> Option<&Recording> {
        self.recordings.iter().find(|r| r.id == id)
    }
}

/// Phrase timeline: NS_b, units separated by NS_i, NS_e; lengths in samples.
fn draw_timeline<R: Rng>(cfg: &SynthConfig, units: &[String], rng: &mut R) -> Vec<(StateLabel, usize)> {
    let fs = cfg.sampling_rate_hz();
    let samples = |d: &DurationSpec, rng: &mut R| ((d.draw(rng) * fs / 1000.0).round() as usize).max(1);
    let d = &cfg.durations;
    let mut out = vec![(StateLabel::NsB, samples(&d.ns_b, rng))];
    for (k, u) in units.iter().enumerate() {
        if k > 0 {
            out.push((StateLabel::NsI, samples(&d.ns_i, rng)));
        }
        out.push((StateLabel::unit(u.clone()), samples(&d.unit, rng)));
    }
    out.push((StateLabel::NsE, samples(&d.ns_e, rng)));
    out
}

/// Stretches a timeline by `k`, keeping every span at least one sample.
fn scale_timeline(timeline: &[(StateLabel, usize)], k: f64) -> Vec<(StateLabel, usize)> {
    let mut acc = 0.0;
    let mut prev = 0usize;
    timeline
        .iter()
        .map(|(l, n)| {
            acc += *n as f64 * k;
            let end = (acc.round() as usize).max(prev + 1);
            let len = end - prev;
            prev = end;
            (l.clone(), len)
        })
        .collect()
}

fn to_spans(timeline: &[(StateLabel, usize)]) -> Vec<TruthSpan> {
    let mut cursor = 0;
    timeline
        .iter()
        .map(|(l, n)| {
            let s = TruthSpan { label: l.clone(), start: cursor, end: cursor + n };
            cursor += n;
            s
        })
        .collect()
}

struct Layout {
    spans: Vec<(usize, usize, StateLabel)>,
    markers: Vec<Marker>,
    /// (start sample, heard timeline) per heard segment, in order.
    heard: Vec<(usize, Vec<(StateLabel, usize)>)>,
    imagined: Vec<(usize, Vec<(StateLabel, usize)>)>,
    n_samples: usize,
    rest: Vec<(usize, usize)>,
}

fn layout_session(cfg: &SynthConfig, n_trials: usize, seed: u64, key: &str) -> Layout {
    let mut rng = rng_for(seed, &format!("{key}/layout"));
    let fs = cfg.sampling_rate_hz();
    let rest = |rng: &mut rand_chacha::ChaCha8Rng| ((cfg.durations.rest.draw(rng) * fs / 1000.0).round() as usize).max(1);
    let mut l = Layout { spans: vec![], markers: vec![], heard: vec![], imagined: vec![], n_samples: 0, rest: vec![] };
    let mut cursor = 0usize;
    let add_rest = |cursor: &mut usize, rng: &mut rand_chacha::ChaCha8Rng, l: &mut Layout| {
        let n = rest(rng);
        l.rest.push((*cursor, *cursor + n));
        *cursor += n;
    };
    add_rest(&mut cursor, &mut rng, &mut l);
    let phrase_ids: Vec<&String> = cfg.phrases.keys().collect();
    for _ in 0..n_trials {
        let mut order = phrase_ids.clone();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for pid in order {
            let timeline = draw_timeline(cfg, &cfg.phrases[pid], &mut rng);
            let (lo, hi) = cfg.imagined_scale;
            let k = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let imagined = scale_timeline(&timeline, k);
            for (cond, tl) in [(Condition::Heard, timeline), (Condition::Imagined, imagined)] {
                let len: usize = tl.iter().map(|t| t.1).sum();
                let (open, close) = match cond {
                    Condition::Heard => (MarkerKind::StimulusOnset, MarkerKind::StimulusEnd),
                    Condition::Imagined => (MarkerKind::ImagineStart, MarkerKind::ImagineEnd),
                };
                l.markers.push(Marker { kind: open, phrase_id: pid.clone(), sample_index: cursor });
                l.markers.push(Marker { kind: close, phrase_id: pid.clone(), sample_index: cursor + len });
                let mut c = cursor;
                for (lab, n) in &tl {
                    l.spans.push((c, c + n, lab.clone()));
                    c += n;
                }
                match cond {
                    Condition::Heard => l.heard.push((cursor, tl)),
                    Condition::Imagined => l.imagined.push((cursor, tl)),
                }
                cursor += len;
                add_rest(&mut cursor, &mut rng, &mut l);
            }
        }
    }
    l.n_samples = cursor;
    l
}

fn log_normal_gains<R: Rng>(rng: &mut R, n: usize, sd: f64) -> Vec<f64> {
    if sd <= 0.0 {
        return vec![1.0; n];
    }
    let normal = Normal::new(0.0, sd).expect("positive sd");
    (0..n).map(|_| normal.sample(rng).exp()).collect()
}

fn render_session(
    cfg: &SynthConfig,
    spec: &EmissionSpec,
    layout: &Layout,
    seed: u64,
    key: &str,
) -> Array2<f64> {
    let fs = cfg.sampling_rate_hz();
    let n_ch = cfg.channel_names().len();
    let mut x = Array2::<f64>::zeros((n_ch, layout.n_samples));
    let parts = cfg.unit_parts;
    let emission_at = |label: &StateLabel, offset: usize, len: usize| -> &StateEmission {
        match label {
            StateLabel::NsB => &spec.ns_b,
            StateLabel::NsI | StateLabel::Ns => &spec.ns_i,
            StateLabel::NsE => &spec.ns_e,
            StateLabel::Unit(u) => {
                let p = (offset * parts / len.max(1)).min(parts - 1);
                &spec.units[u][p]
            }
            StateLabel::S => &spec.rest,
        }
    };
    for &(s, e) in &layout.rest {
        for c in 0..n_ch {
            for n in s..e {
                x[[c, n]] = spec.rest.value(c, n, fs);
            }
        }
    }
    for (s, e, label) in &layout.spans {
        for n in *s..*e {
            let em = emission_at(label, n - s, e - s);
            for c in 0..n_ch {
                x[[c, n]] = em.value(c, n, fs);
            }
        }
    }

    let mut rng = rng_for(seed, &format!("{key}/noise"));
    let sd = cfg.noise_sd();
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).expect("positive sd");
        x.mapv_inplace(|v| v + normal.sample(&mut rng));
    }

    let a = &cfg.artifacts;
    let names = cfg.channel_names();
    let frontal: Vec<f64> = names
        .iter()
        .map(|c| electrode_position(c, n_ch).map_or(0.0, |p| ((p[1] - 0.3) / 0.7).clamp(0.0, 1.0)))
        .collect();
    if a.spike_rate_hz > 0.0 && a.spike_uv > 0.0 {
        let len = ((a.spike_ms * fs / 1000.0).round() as usize).max(2);
        let mut t = 0.0f64;
        let rate = a.spike_rate_hz / fs;
        loop {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            t += -u.ln() / rate;
            let start = t as usize;
            if start + len >= layout.n_samples {
                break;
            }
            for k in 0..len {
                let shape = 0.5 - 0.5 * (2.0 * PI * k as f64 / (len - 1) as f64).cos();
                for c in 0..n_ch {
                    x[[c, start + k]] += a.spike_uv * frontal[c] * shape;
                }
            }
        }
    }
    if a.line_noise_uv > 0.0 {
        for c in 0..n_ch {
            let phase = rng.random_range(0.0..2.0 * PI);
            for n in 0..layout.n_samples {
                x[[c, n]] += a.line_noise_uv * (2.0 * PI * a.line_hz * n as f64 / fs + phase).sin();
            }
        }
    }
    if a.dc_offset_uv > 0.0 {
        for c in 0..n_ch {
            let off = rng.random_range(-a.dc_offset_uv..=a.dc_offset_uv);
            x.row_mut(c).mapv_inplace(|v| v + off);
        }
    }
    // stored as f32 on disk; round here so in-memory and on-disk data agree
    x.mapv_inplace(|v| v as f32 as f64);
    x
}

fn render_audio(cfg: &SynthConfig, timeline: &[(StateLabel, usize)], unit_index: &BTreeMap<String, usize>, eeg_fs: f64, seed: u64, key: &str) -> AudioTrack {
    let fs = cfg.audio_rate_hz as f64;
    let to_audio = |n: usize| (n as f64 * fs / eeg_fs).round() as usize;
    let total: usize = timeline.iter().map(|t| t.1).sum();
    let n = to_audio(total);
    let mut rng = rng_for(seed, &format!("{key}/audio"));
    let noise = Normal::new(0.0, 1e-3).expect("positive sd");
    let mut y: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
    let ramp = (0.01 * fs) as usize;
    let mut cursor = 0usize;
    for (label, len) in timeline {
        let (s, e) = (to_audio(cursor), to_audio(cursor + len).min(n));
        cursor += len;
        if let StateLabel::Unit(u) = label {
            let freq = 180.0 + 35.0 * unit_index[u] as f64;
            for i in s..e {
                let edge = (i - s).min(e - 1 - i);
                let g = if edge < ramp { edge as f64 / ramp as f64 } else { 1.0 };
                y[i] += 0.3 * g * (2.0 * PI * freq * (i - s) as f64 / fs).sin();
            }
        }
    }
    AudioTrack { fs: cfg.audio_rate_hz, samples: y.into_iter().map(|v| v as f32 as f64).collect() }
}

struct SessionOut {
    recording: Recording,
    segments: Vec<Segment>,
    truth: Vec<SegmentTruth>,
    audio: Vec<(String, AudioTrack)>,
}

fn generate_session(
    cfg: &SynthConfig,
    base_spec: &EmissionSpec,
    subject: usize,
    session: usize,
    n_trials: usize,
) -> Result<SessionOut> {
    let subject_id = format!("s{:02}", subject + 1);
    let session_id = format!("{}", session + 1);
    let key = format!("{subject_id}/{session_id}");
    let n_ch = cfg.channel_names().len();

    // perturbation gains: per subject, then per session
    let subj_seed = crate::util::derive_seed(cfg.seed, &subject_id);
    let spec = base_spec.map(|state, e| {
        let mut rs = rng_for(subj_seed, &format!("gain/{state}"));
        let mut rr = rng_for(subj_seed, &format!("gain/{state}/{session_id}"));
        let g1 = log_normal_gains(&mut rs, n_ch, cfg.subject_scale);
        let g2 = log_normal_gains(&mut rr, n_ch, cfg.session_scale);
        let g: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a * b).collect();
        e.scaled(&g)
    });

    let layout = layout_session(cfg, n_trials, subj_seed, &session_id);
    let samples = render_session(cfg, &spec, &layout, subj_seed, &session_id);
    let prefix = match cfg.device {
        Device::Muse => "muse",
        Device::Egi => "egi",
        Device::EgiReduced => "egir",
    };
    let recording = Recording {
        id: format!("{prefix}-{subject_id}-{session_id}"),
        subject_id,
        session_id,
        device: cfg.device,
        sampling_rate_hz: cfg.sampling_rate_hz(),
        channel_names: cfg.channel_names(),
        samples,
        markers: layout.markers.clone(),
    };
    recording.validate()?;
    let mut segments = extract_segments(&recording)?;
    let unit_index: BTreeMap<String, usize> = cfg.units().into_iter().enumerate().map(|(i, u)| (u, i)).collect();

    let mut truth = Vec::new();
    let mut audio = Vec::new();
    let (mut hi, mut ii) = (layout.heard.iter(), layout.imagined.iter());
    for seg in segments.iter_mut() {
        let (start, tl) = match seg.condition {
            Condition::Heard => hi.next(),
            Condition::Imagined => ii.next(),
        }
        .expect("one layout entry per segment");
        debug_assert_eq!(*start, seg.start_sample);
        seg.truth = Some(format!("truth/{}.json", seg.id));
        if seg.condition == Condition::Heard {
            seg.audio = Some(format!("audio/{}.eegr", seg.id));
            audio.push((seg.id.clone(), render_audio(cfg, tl, &unit_index, cfg.sampling_rate_hz(), subj_seed, &format!("{key}/{}", seg.id))));
        }
        truth.push(SegmentTruth {
            segment_id: seg.id.clone(),
            phrase_id: seg.phrase_id.clone(),
            condition: seg.condition,
            timeline: to_spans(tl),
        });
    }
    Ok(SessionOut { recording, segments, truth, audio })
}

/// Generates a full dataset in memory. Output depends only on the arguments.
pub fn generate_dataset(
    config: &SynthConfig,
    n_subjects: usize,
    n_sessions: usize,
    n_trials: usize,
) -> Result<SynthDataset> {
    config.validate_relaxed()?;
    if n_subjects == 0 || n_sessions == 0 || n_trials == 0 {
        return Err(Error::InvalidConfig("subject, session and trial counts must be at least 1".into()));
    }
    let spec = config.emission_spec();
    let jobs: Vec<(usize, usize)> = (0..n_subjects).flat_map(|s| (0..n_sessions).map(move |k| (s, k))).collect();
    let outs: Vec<SessionOut> = jobs
        .par_iter()
        .map(|&(s, k)| generate_session(config, &spec, s, k, n_trials))
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest {
        recordings: Vec::new(),
        segments: Vec::new(),
        phrase_inventory: config.phrases.clone(),
        root: Default::default(),
    };
    let mut recordings = Vec::new();
    let mut truth = BTreeMap::new();
    let mut audio = BTreeMap::new();
    for out in outs {
        let r = &out.recording;
        manifest.recordings.push(RecordingEntry {
            id: r.id.clone(),
            subject_id: r.subject_id.clone(),
            session_id: r.session_id.clone(),
            device: r.device,
            sampling_rate_hz: r.sampling_rate_hz,
            channel_names: r.channel_names.clone(),
            n_samples: r.n_samples(),
            path: format!("recordings/{}.eegr", r.id),
            markers: r.markers.clone(),
        });
        manifest.segments.extend(out.segments);
        truth.extend(out.truth.into_iter().map(|t| (t.segment_id.clone(), t)));
        audio.extend(out.audio);
        recordings.push(out.recording);
    }
    manifest.validate()?;
    Ok(SynthDataset { manifest, recordings, truth, audio, config: config.clone() })
}

/// Writes manifest, recordings, audio, truth sidecars and the config under
/// `dir` (created if missing). Returns the manifest rooted at `dir`.
pub fn write_dataset(dataset: &SynthDataset, dir: &Path) -> Result<DatasetManifest> {
    for sub in ["recordings", "audio", "truth"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    for r in &dataset.recordings {
        write_container(&dir.join(format!("recordings/{}.eegr", r.id)), r.sampling_rate_hz, &r.channel_names, &r.samples)?;
    }
    for (id, a) in &dataset.audio {
        let samples = Array2::from_shape_vec((1, a.samples.len()), a.samples.clone()).expect("one row");
        write_container(&dir.join(format!("audio/{id}.eegr")), a.fs as f64, &["audio".to_string()], &samples)?;
    }
    for (id, t) in &dataset.truth {
        std::fs::write(dir.join(format!("truth/{id}.json")), serde_json::to_string_pretty(t)? + "\n")?;
    }
    std::fs::write(dir.join("synth_config.json"), serde_json::to_string_pretty(&dataset.config)? + "\n")?;
    let mut manifest = dataset.manifest.clone();
    manifest.root = dir.to_path_buf();
    save_manifest(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads the truth sidecar of one segment.
pub fn load_truth(manifest: &DatasetManifest, segment_id: &str) -> Result<SegmentTruth> {
    let seg = manifest.segment(segment_id).ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
    let rel = seg.truth.as_ref().ok_or_else(|| Error::UnknownSegment(format!("{segment_id} has no truth sidecar")))?;
    Ok(serde_json::from_str(&std::fs::read_to_string(manifest.resolve(rel))?)?)
}

/// True DNS3 frame labels of a segment from its generator timeline.
pub fn truth_labels(truth: &SegmentTruth, n_samples: usize, spec: &FrameSpec) -> Result<FrameLabelSequence> {
    let spans: Vec<(StateLabel, f64, f64)> =
        truth.timeline.iter().map(|s| (s.label.clone(), s.start as f64, s.end as f64)).collect();
    labels_from_timeline(&spans, n_samples, spec, LabelScheme::Dns3)
}

/// True frame labels of a generated segment, bypassing VAD.
pub fn oracle_labels(dataset: &SynthDataset, segment_id: &str, spec: &FrameSpec) -> Result<FrameLabelSequence> {
    let truth = dataset.truth.get(segment_id).ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
    let seg = dataset.manifest.segment(segment_id).ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
    truth_labels(truth, seg.len(), spec)
}
