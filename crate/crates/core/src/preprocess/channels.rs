use std::collections::BTreeSet;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::Recording;
use crate::error::{Error, Result};

/// Subtracts each channel's mean.
pub fn baseline_correct(samples: &Array2<f64>) -> Array2<f64> {
    let mut out = samples.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / row.len().max(1) as f64;
        row.mapv_inplace(|v| v - mean);
    }
    out
}

/// Approximate unit-sphere positions for the named 10-20 sites we use.
fn named_position(name: &str) -> Option<[f64; 3]> {
    let p = match name {
        "Fpz" => [0.0, 1.0, 0.0],
        "Fp1" => [-0.309, 0.951, 0.0],
        "Fp2" => [0.309, 0.951, 0.0],
        "TP9" => [-0.856, -0.332, -0.397],
        "TP10" => [0.856, -0.332, -0.397],
        "Cz" => [0.0, 0.0, 1.0],
        "Oz" => [0.0, -1.0, 0.0],
        _ => return None,
    };
    Some(p)
}

/// Fibonacci-lattice point `k` of `n` on the upper hemisphere.
fn lattice_position(k: usize, n: usize) -> [f64; 3] {
    let golden = PI * (3.0 - 5f64.sqrt());
    let z = 1.0 - (k as f64 + 0.5) / n as f64;
    let r = (1.0 - z * z).sqrt();
    let theta = golden * k as f64;
    [r * theta.cos(), r * theta.sin(), z]
}

/// Static electrode position: named sites first, `E<k>` net sensors on a lattice.
pub fn electrode_position(name: &str, n_channels: usize) -> Option<[f64; 3]> {
    if let Some(p) = named_position(name) {
        return Some(p);
    }
    let k: usize = name.strip_prefix('E')?.parse().ok()?;
    (k >= 1).then(|| lattice_position(k - 1, n_channels.max(k)))
}

/// Channel indices ordered by proximity to `idx` (excluding `idx`). Channels
/// without a known position fall back to index distance.
pub fn neighbor_order(channel_names: &[String], idx: usize) -> Vec<usize> {
    let n = channel_names.len();
    let positions: Vec<Option<[f64; 3]>> = channel_names.iter().map(|c| electrode_position(c, n)).collect();
    let mut others: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != idx)
        .map(|j| {
            let d = match (positions[idx], positions[j]) {
                (Some(a), Some(b)) => (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt(),
                _ => 10.0 + (idx as f64 - j as f64).abs(),
            };
            (d, j)
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().map(|(_, j)| j).collect()
}

/// Mean natural-log power over 1–45 Hz from a Hann-windowed Welch estimate
/// with one-second segments and 50% overlap.
fn band_log_power(x: &[f64], fs: f64, planner: &mut FftPlanner<f64>) -> f64 {
    let seg = fs.round() as usize;
    let fft = planner.plan_fft_forward(seg);
    let window: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let mut psd = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        let mut buf: Vec<Complex64> =
            chunk.iter().zip(&window).map(|(v, w)| Complex64::new((v - mean) * w, 0.0)).collect();
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        count += 1;
        start += seg / 2;
    }
    let df = fs / seg as f64;
    let bins: Vec<f64> = psd
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            (1.0..=45.0).contains(&f)
        })
        .map(|(_, p)| (p / count as f64 + 1e-30).ln())
        .collect();
    bins.iter().sum::<f64>() / bins.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags channels whose mean 1–45 Hz log power is more than `z_threshold`
/// robust z-scores (median / scaled MAD) from the cross-channel median.
pub fn detect_bad_channels(recording: &Recording, z_threshold: f64) -> Result<BTreeSet<usize>> {
    let fs = recording.sampling_rate_hz;
    let min = (2.0 * fs).ceil() as usize;
    if recording.n_samples() < min {
        return Err(Error::TooShortForSpectrum { len: recording.n_samples(), min });
    }
    let mut planner = FftPlanner::new();
    let powers: Vec<f64> = recording
        .samples
        .rows()
        .into_iter()
        .map(|row| band_log_power(&row.to_vec(), fs, &mut planner))
        .collect();
    let med = median(&powers);
    let deviations: Vec<f64> = powers.iter().map(|p| (p - med).abs()).collect();
    let mad = 1.4826 * median(&deviations);
    Ok(deviations
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            let z = if mad > 0.0 {
                **d / mad
            } else if **d > 1e-9 {
                f64::INFINITY
            } else {
                0.0
            };
            z > z_threshold
        })
        .map(|(i, _)| i)
        .collect())
}

pub const INTERPOLATION_NEIGHBORS: usize = 4;

/// Replaces each bad channel with the mean of its nearest good neighbours.
pub fn interpolate_bad_channels(recording: &Recording, bad: &BTreeSet<usize>) -> Result<Recording> {
    let n = recording.n_channels();
    if bad.is_empty() {
        return Ok(recording.clone());
    }
    if 2 * bad.len() >= n {
        return Err(Error::TooManyBadChannels { bad: bad.len(), total: n });
    }
    if let Some(&i) = bad.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("channel index {i} out of range")));
    }
    let mut out = recording.clone();
    for &ch in bad {
        let neighbors: Vec<usize> = neighbor_order(&recording.channel_names, ch)
            .into_iter()
            .filter(|j| !bad.contains(j))
            .take(INTERPOLATION_NEIGHBORS)
            .collect();
        let mut acc = Array1::<f64>::zeros(recording.n_samples());
        for &j in &neighbors {
            acc += &recording.samples.row(j);
        }
        acc /= neighbors.len() as f64;
        out.samples.row_mut(ch).assign(&acc);
    }
    Ok(out)
}
