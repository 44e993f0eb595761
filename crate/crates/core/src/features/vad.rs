use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Median smoothing span over frame energies.
    pub smooth_frames: usize,
    /// Percentile of frame energies taken as the noise floor.
    pub noise_percentile: f64,
    pub ratio: f64,
    pub min_gap_ms: f64,
    pub min_speech_ms: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            smooth_frames: 3,
            noise_percentile: 10.0,
            ratio: 3.0,
            min_gap_ms: 150.0,
            min_speech_ms: 100.0,
        }
    }
}

/// Activity intervals `[start, end)` on the audio timeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadIntervals {
    pub intervals: Vec<(usize, usize)>,
    pub fs: u32,
    /// Length of the analysed audio in samples.
    pub n_samples: usize,
}

impl VadIntervals {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0 * (v.len() - 1) as f64).clamp(0.0, (v.len() - 1) as f64);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn median_smooth(e: &[f64], span: usize) -> Vec<f64> {
    if span <= 1 {
        return e.to_vec();
    }
    let half = span / 2;
    (0..e.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(e.len());
            let mut w = e[lo..hi].to_vec();
            w.sort_by(|a, b| a.total_cmp(b));
            w[w.len() / 2]
        })
        .collect()
}

/// Energy-threshold voice activity detection.
///
/// Frame energies are median-smoothed and compared against
/// `ratio × percentile(noise_percentile)`. Interval edges sit where the first
/// and last active windows just reach into the activity, which keeps them
/// unbiased when the activity is well above the floor.
pub fn vad_energy(audio: &[f64], fs: u32, params: &VadParams) -> Result<VadIntervals> {
    let to_samples = |ms: f64| ((ms * fs as f64 / 1000.0).round() as usize).max(1);
    let flen = to_samples(params.frame_ms);
    let hop = to_samples(params.hop_ms);
    if audio.len() < flen {
        return Err(Error::TooShort { len: audio.len(), min: flen });
    }
    let n_frames = (audio.len() - flen) / hop + 1;
    let energy: Vec<f64> = (0..n_frames)
        .map(|k| audio[k * hop..k * hop + flen].iter().map(|v| v * v).sum::<f64>() / flen as f64)
        .collect();
    let smooth = median_smooth(&energy, params.smooth_frames);
    let threshold = params.ratio * percentile(&smooth, params.noise_percentile);
    let active: Vec<bool> = smooth.iter().map(|e| *e > threshold).collect();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    while k < n_frames {
        if active[k] {
            let first = k;
            while k + 1 < n_frames && active[k + 1] {
                k += 1;
            }
            let start = (first * hop + flen).saturating_sub(hop / 2).min(audio.len());
            let end = (k * hop + hop / 2).min(audio.len());
            if start < end {
                runs.push((start, end));
            }
        }
        k += 1;
    }

    let min_gap = to_samples(params.min_gap_ms);
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in runs {
        match merged.last_mut() {
            Some(last) if s < last.1 + min_gap => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let min_speech = to_samples(params.min_speech_ms);
    merged.retain(|(s, e)| e - s >= min_speech);
    Ok(VadIntervals { intervals: merged, fs, n_samples: audio.len() })
}
