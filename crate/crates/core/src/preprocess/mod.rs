//! Cleaning chain applied to every recording before feature extraction:
//! bandpass, notch, baseline correction, bad-channel interpolation and ICA
//! component removal, always in that order.

mod channels;
mod filter;
mod ica;

pub use channels::{
    baseline_correct, detect_bad_channels, electrode_position, interpolate_bad_channels, neighbor_order,
    INTERPOLATION_NEIGHBORS,
};
pub use filter::{
    design_butterworth_bandpass, design_notch, filter_zero_phase, Biquad, FilterCoefficients, FilterKind,
};
pub use ica::{fast_ica, fast_ica_remove, IcaDecomposition, IcaParams};

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Device, Recording, Segment};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandpassConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BandpassConfig {
    fn default() -> Self {
        Self { low_hz: 0.1, high_hz: 60.0, order: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotchConfig {
    pub center_hz: f64,
    pub q: f64,
}

impl Default for NotchConfig {
    fn default() -> Self {
        Self { center_hz: 50.0, q: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolateConfig {
    pub z_threshold: f64,
}

impl Default for InterpolateConfig {
    fn default() -> Self {
        Self { z_threshold: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub n_remove_muse: usize,
    pub n_remove_egi: usize,
    pub n_remove_egi_reduced: usize,
    pub seed: u64,
    /// Treat a non-converged decomposition as an error.
    pub require_convergence: bool,
    /// Fit on at most this many strided samples.
    pub max_fit_samples: Option<usize>,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self { n_remove_muse: 1, n_remove_egi: 3, n_remove_egi_reduced: 1, seed: 0, require_convergence: false, max_fit_samples: Some(50_000) }
    }
}

impl IcaConfig {
    pub fn n_remove(&self, device: Device) -> usize {
        match device {
            Device::Muse => self.n_remove_muse,
            Device::Egi => self.n_remove_egi,
            Device::EgiReduced => self.n_remove_egi_reduced,
        }
    }
}

/// Stage switches and parameters; `None` disables a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub bandpass: Option<BandpassConfig>,
    pub notch: Option<NotchConfig>,
    pub baseline: bool,
    pub interpolate: Option<InterpolateConfig>,
    pub ica: Option<IcaConfig>,
    /// Reject segments with any post-filter sample beyond this magnitude (µV).
    pub reject_above_uv: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass: Some(BandpassConfig::default()),
            notch: Some(NotchConfig::default()),
            baseline: true,
            interpolate: Some(InterpolateConfig::default()),
            ica: Some(IcaConfig::default()),
            reject_above_uv: None,
        }
    }
}

impl PreprocessConfig {
    pub fn disabled() -> Self {
        Self { bandpass: None, notch: None, baseline: false, interpolate: None, ica: None, reject_above_uv: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub params: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub recording_id: String,
    pub stages: Vec<StageRecord>,
}

impl StageLog {
    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.stage.as_str()).collect()
    }

    fn push(&mut self, stage: &str, params: &[(&str, String)]) {
        debug!("{}: {stage} {params:?}", self.recording_id);
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        });
    }
}

fn filter_rows(samples: &Array2<f64>, coeffs: &FilterCoefficients) -> Result<Array2<f64>> {
    let mut out = samples.clone();
    for mut row in out.rows_mut() {
        let y = filter_zero_phase(&row.to_vec(), coeffs)?;
        row.assign(&ndarray::Array1::from(y));
    }
    Ok(out)
}

/// Runs the enabled stages in fixed order and logs each one.
pub fn preprocess_pipeline(recording: &Recording, config: &PreprocessConfig) -> Result<(Recording, StageLog)> {
    let mut rec = recording.clone();
    let mut log = StageLog { recording_id: recording.id.clone(), stages: Vec::new() };
    let fs = rec.sampling_rate_hz;

    if let Some(bp) = &config.bandpass {
        let coeffs = design_butterworth_bandpass(bp.low_hz, bp.high_hz, bp.order, fs)?;
        rec.samples = filter_rows(&rec.samples, &coeffs)?;
        log.push(
            "bandpass",
            &[("low_hz", bp.low_hz.to_string()), ("high_hz", bp.high_hz.to_string()), ("order", bp.order.to_string())],
        );
    }
    if let Some(notch) = &config.notch {
        let coeffs = design_notch(notch.center_hz, notch.q, fs)?;
        rec.samples = filter_rows(&rec.samples, &coeffs)?;
        log.push("notch", &[("center_hz", notch.center_hz.to_string()), ("q", notch.q.to_string())]);
    }
    if config.baseline {
        rec.samples = baseline_correct(&rec.samples);
        log.push("baseline", &[]);
    }
    let mut bad = BTreeSet::new();
    if let Some(interp) = &config.interpolate {
        bad = detect_bad_channels(&rec, interp.z_threshold)?;
        let names: Vec<String> = bad.iter().map(|&i| rec.channel_names[i].clone()).collect();
        rec = interpolate_bad_channels(&rec, &bad)?;
        log.push(
            "interpolate",
            &[("z_threshold", interp.z_threshold.to_string()), ("bad_channels", names.join(","))],
        );
    }
    if let Some(ica_cfg) = &config.ica {
        let n_remove = ica_cfg.n_remove(rec.device);
        let params = IcaParams {
            seed: ica_cfg.seed,
            strict: ica_cfg.require_convergence,
            max_fit_samples: ica_cfg.max_fit_samples,
            ..IcaParams::default()
        };
        // interpolated channels are combinations of good ones, so decompose the good subspace only
        let good: Vec<usize> = (0..rec.n_channels()).filter(|i| !bad.contains(i)).collect();
        let mut subset = rec.clone();
        subset.samples = rec.samples.select(Axis(0), &good);
        let (cleaned, ica) = fast_ica_remove(&subset, n_remove, &params)?;
        for (k, &i) in good.iter().enumerate() {
            rec.samples.row_mut(i).assign(&cleaned.samples.row(k));
        }
        rec = interpolate_bad_channels(&rec, &bad)?;
        log.push(
            "ica",
            &[
                ("n_remove", n_remove.to_string()),
                ("seed", ica_cfg.seed.to_string()),
                ("iterations", ica.iterations.to_string()),
                ("converged", ica.converged.to_string()),
            ],
        );
    }
    Ok((rec, log))
}

/// Splits segments into kept and rejected by peak absolute amplitude.
pub fn reject_trials(recording: &Recording, segments: &[Segment], threshold_uv: f64) -> (Vec<Segment>, Vec<Segment>) {
    segments.iter().cloned().partition(|seg| {
        recording
            .samples
            .slice(ndarray::s![.., seg.start_sample..seg.end_sample])
            .iter()
            .all(|v| v.abs() <= threshold_uv)
    })
}
