use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    #[default]
    Hamming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameSpec {
    pub window_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self { window_len: 125, hop: 62, window_kind: WindowKind::Hamming }
    }
}

impl FrameSpec {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        let spec = Self { window_len, hop, window_kind: WindowKind::Hamming };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "frame hop {} must be in 1..={}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    /// Number of complete frames in a series of `len` samples.
    pub fn n_frames(&self, len: usize) -> Result<usize> {
        self.validate()?;
        if len < self.window_len {
            return Err(Error::TooShort { len, min: self.window_len });
        }
        Ok((len - self.window_len) / self.hop + 1)
    }

    /// Sample position of the centre of frame `i`.
    pub fn center(&self, i: usize) -> f64 {
        (i * self.hop) as f64 + (self.window_len as f64 - 1.0) / 2.0
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window_kind {
            WindowKind::Hamming => hamming(self.window_len),
        }
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos()).collect()
}

/// Frame `i` covers `[i*hop, i*hop + window_len)`; the trailing remainder is dropped.
pub fn frame_signal<'a>(x: &'a [f64], spec: &FrameSpec) -> Result<Vec<&'a [f64]>> {
    let n = spec.n_frames(x.len())?;
    Ok((0..n).map(|i| &x[i * spec.hop..i * spec.hop + spec.window_len]).collect())
}

/// Per-channel short-term energies of one segment, `[n_frames, n_dims]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub frame_spec: FrameSpec,
    pub segment_id: String,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let row = self.values.row(i);
        row.to_slice().expect("feature rows are contiguous")
    }

    /// Copy with `ln(v + floor)` applied elementwise.
    pub fn log_compressed(&self, floor: f64) -> FeatureMatrix {
        FeatureMatrix { values: self.values.mapv(|v| (v + floor).ln()), ..self.clone() }
    }

    /// Tab-separated text: a header, then one row per frame.
    pub fn to_columnar(&self) -> String {
        let mut out = String::from("frame");
        for d in 0..self.n_dims() {
            write!(out, "\tdim{d}").unwrap();
        }
        out.push('\n');
        for (i, row) in self.values.rows().into_iter().enumerate() {
            write!(out, "{i}").unwrap();
            for v in row {
                write!(out, "\t{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_columnar(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_columnar())?;
        Ok(())
    }
}

/// `U[i][c] = Σ_k (x_c[i*hop + k] · w[k])²` for every frame `i` and channel `c`
/// of a `[n_channels, n_samples]` segment.
pub fn short_term_energy(samples: &Array2<f64>, spec: &FrameSpec, segment_id: &str) -> Result<FeatureMatrix> {
    let (n_ch, len) = samples.dim();
    let n_frames = spec.n_frames(len)?;
    let w = spec.window();
    let mut values = Array2::zeros((n_frames, n_ch));
    for (c, row) in samples.rows().into_iter().enumerate() {
        let x = row.to_vec();
        for (i, frame) in frame_signal(&x, spec)?.into_iter().enumerate() {
            values[[i, c]] = frame.iter().zip(&w).map(|(e, wk)| (e * wk) * (e * wk)).sum();
        }
    }
    Ok(FeatureMatrix { values, frame_spec: *spec, segment_id: segment_id.to_string() })
}
