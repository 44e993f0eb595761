use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_device_channels, check_markers, check_rate, read_container, read_container_header};
use super::{AudioTrack, Condition, Device, Marker, Recording, Segment};
use crate::error::{Error, Result};
use crate::label::RESERVED_LABELS;

/// Manifest entry describing one recording file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    pub subject_id: String,
    pub session_id: String,
    pub device: Device,
    pub sampling_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub n_samples: usize,
    /// Container path relative to the manifest directory.
    pub path: String,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub recordings: Vec<RecordingEntry>,
    pub segments: Vec<Segment>,
    pub phrase_inventory: BTreeMap<String, Vec<String>>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn recording_entry(&self, id: &str) -> Option<&RecordingEntry> {
        self.recordings.iter().find(|r| r.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn segment_map(&self) -> BTreeMap<&str, &Segment> {
        self.segments.iter().map(|s| (s.id.as_str(), s)).collect()
    }

    pub fn subjects(&self) -> BTreeSet<String> {
        self.recordings.iter().map(|r| r.subject_id.clone()).collect()
    }

    pub fn devices(&self) -> BTreeSet<Device> {
        self.recordings.iter().map(|r| r.device).collect()
    }

    /// Reads the samples of one recording from disk.
    pub fn load_recording(&self, id: &str) -> Result<Recording> {
        let entry = self
            .recording_entry(id)
            .ok_or_else(|| Error::MalformedManifest(format!("unknown recording {id}")))?;
        let path = self.resolve(&entry.path);
        if !path.exists() {
            return Err(Error::MissingRecordingFile(path));
        }
        let (header, samples) = read_container(&path)?;
        if header.channel_names.len() != entry.channel_names.len() {
            return Err(Error::ChannelCountMismatch {
                id: id.to_string(),
                expected: entry.channel_names.len(),
                found: header.channel_names.len(),
            });
        }
        let rec = Recording {
            id: entry.id.clone(),
            subject_id: entry.subject_id.clone(),
            session_id: entry.session_id.clone(),
            device: entry.device,
            sampling_rate_hz: entry.sampling_rate_hz,
            channel_names: entry.channel_names.clone(),
            samples,
            markers: entry.markers.clone(),
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Reads the audio track of a segment, if it has one.
    pub fn load_audio(&self, segment: &Segment) -> Result<Option<AudioTrack>> {
        let Some(rel) = &segment.audio else { return Ok(None) };
        let path = self.resolve(rel);
        if !path.exists() {
            return Err(Error::MissingRecordingFile(path));
        }
        let (header, samples) = read_container(&path)?;
        if samples.nrows() != 1 {
            return Err(Error::MalformedRecording(format!("{}: audio must be mono", path.display())));
        }
        let fs = header.sampling_rate_hz;
        if !(fs >= 1.0 && fs.fract() == 0.0) {
            return Err(Error::MalformedRecording(format!("{}: audio rate {fs}", path.display())));
        }
        Ok(Some(AudioTrack { fs: fs as u32, samples: samples.row(0).to_vec() }))
    }

    /// Copy restricted to segments of one condition.
    pub fn with_condition(&self, condition: Condition) -> DatasetManifest {
        let mut m = self.clone();
        m.segments.retain(|s| s.condition == condition);
        m
    }

    /// Copy restricted to recordings of one device (and their segments).
    pub fn with_device(&self, device: Device) -> DatasetManifest {
        let mut m = self.clone();
        m.recordings.retain(|r| r.device == device);
        let ids: BTreeSet<String> = m.recordings.iter().map(|r| r.id.clone()).collect();
        m.segments.retain(|s| ids.contains(&s.recording_id));
        m
    }

    /// Checks every structural invariant that does not need file access.
    pub fn validate(&self) -> Result<()> {
        let mut rec_ids = BTreeMap::new();
        for r in &self.recordings {
            if rec_ids.insert(r.id.as_str(), r).is_some() {
                return Err(Error::MalformedManifest(format!("duplicate recording id {}", r.id)));
            }
            check_device_channels(&r.id, r.device, &r.channel_names)?;
            check_rate(&r.id, r.sampling_rate_hz)?;
            check_markers(&r.id, &r.markers, r.n_samples)?;
        }
        for (phrase, units) in &self.phrase_inventory {
            if units.is_empty() {
                return Err(Error::MalformedManifest(format!("phrase {phrase} has no units")));
            }
            if let Some(u) = units.iter().find(|u| RESERVED_LABELS.contains(&u.as_str())) {
                return Err(Error::MalformedManifest(format!("unit id {u} is reserved")));
            }
        }
        let mut seg_ids = BTreeSet::new();
        for s in &self.segments {
            if !seg_ids.insert(s.id.as_str()) {
                return Err(Error::MalformedManifest(format!("duplicate segment id {}", s.id)));
            }
            let rec = rec_ids.get(s.recording_id.as_str()).ok_or_else(|| {
                Error::MalformedManifest(format!("segment {} references unknown recording", s.id))
            })?;
            if !(s.start_sample < s.end_sample && s.end_sample <= rec.n_samples) {
                return Err(Error::MalformedManifest(format!("segment {} out of bounds", s.id)));
            }
            if !self.phrase_inventory.contains_key(&s.phrase_id) {
                return Err(Error::MalformedManifest(format!(
                    "segment {} uses unknown phrase {}",
                    s.id, s.phrase_id
                )));
            }
        }
        Ok(())
    }
}

/// Parses and validates a manifest, checking each recording file's header.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MalformedManifest(format!("{}: not found", path.display())),
        _ => Error::Io(e),
    })?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    for r in &manifest.recordings {
        let file = manifest.resolve(&r.path);
        if !file.exists() {
            return Err(Error::MissingRecordingFile(file));
        }
        let header = read_container_header(&file)?;
        if header.channel_names.len() != r.channel_names.len() {
            return Err(Error::ChannelCountMismatch {
                id: r.id.clone(),
                expected: r.channel_names.len(),
                found: header.channel_names.len(),
            });
        }
        if header.n_samples != r.n_samples {
            return Err(Error::MalformedManifest(format!(
                "recording {}: manifest says {} samples, file has {}",
                r.id, r.n_samples, header.n_samples
            )));
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_container, MUSE_CHANNELS};
    use ndarray::Array2;

    fn muse_names() -> Vec<String> {
        MUSE_CHANNELS.iter().map(|s| s.to_string()).collect()
    }

    fn write_fixture(dir: &Path, names: Vec<String>) -> DatasetManifest {
        let samples = Array2::zeros((4, 500));
        write_container(&dir.join("r1.eegr"), 1000.0, &muse_names(), &samples).unwrap();
        let m = DatasetManifest {
            recordings: vec![RecordingEntry {
                id: "r1".into(),
                subject_id: "s1".into(),
                session_id: "1".into(),
                device: Device::Muse,
                sampling_rate_hz: 1000.0,
                channel_names: names,
                n_samples: 500,
                path: "r1.eegr".into(),
                markers: vec![],
            }],
            segments: vec![],
            phrase_inventory: [("p1".to_string(), vec!["hello".to_string()])].into(),
            root: dir.to_path_buf(),
        };
        save_manifest(&m, &dir.join("manifest.json")).unwrap();
        m
    }

    #[test]
    fn round_trip_preserves_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_fixture(dir.path(), muse_names());
        let loaded = load_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded, m);
        let rec = loaded.load_recording("r1").unwrap();
        assert_eq!(rec.samples.dim(), (4, 500));
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), muse_names());
        std::fs::remove_file(dir.path().join("r1.eegr")).unwrap();
        let err = load_manifest(&dir.path().join("manifest.json")).unwrap_err();
        assert!(matches!(err, Error::MissingRecordingFile(_)));
    }

    #[test]
    fn five_channel_muse_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut names = muse_names();
        names.push("AUX".into());
        write_fixture(dir.path(), names);
        let err = load_manifest(&dir.path().join("manifest.json")).unwrap_err();
        assert!(matches!(err, Error::ChannelCountMismatch { expected: 4, found: 5, .. }));
    }

    #[test]
    fn garbage_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, "{\"recordings\": 3}").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::MalformedManifest(_))));
    }
}
