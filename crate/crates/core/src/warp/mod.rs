//! Length equalization of decoded state runs, per-class temporal profiles,
//! channel maps and chunk export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusItem;
use crate::error::{Error, Result};
use crate::hierarchy::ClassifierBundle;
use crate::label::StateLabel;

/// Monotone alignment path and its summed absolute difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost monotone path between `a` and `b` under `Σ|a_i - b_j|`.
///
/// Ties go to the diagonal step, then to advancing `a`, then `b`, choosing
/// from the start of the path. Panics on empty input.
pub fn dtw_path(a: &[f64], b: &[f64]) -> WarpPath {
    assert!(!a.is_empty() && !b.is_empty(), "dtw_path needs non-empty series");
    let (n, m) = (a.len(), b.len());
    // suffix costs, so the path can be traced forward from (0, 0)
    let mut d = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let local = (a[i] - b[j]).abs();
            let rest = if i == n - 1 && j == m - 1 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i + 1 < n && j + 1 < m {
                    best = best.min(d[at(i + 1, j + 1)]);
                }
                if i + 1 < n {
                    best = best.min(d[at(i + 1, j)]);
                }
                if j + 1 < m {
                    best = best.min(d[at(i, j + 1)]);
                }
                best
            };
            d[at(i, j)] = local + rest;
        }
    }
    let mut pairs = vec![(0, 0)];
    let (mut i, mut j) = (0, 0);
    while i + 1 < n || j + 1 < m {
        let mut next = None;
        let mut best = f64::INFINITY;
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < n && nj < m && d[at(ni, nj)] < best {
                best = d[at(ni, nj)];
                next = Some((ni, nj));
            }
        }
        (i, j) = next.expect("an in-range step always exists");
        pairs.push((i, j));
    }
    WarpPath { pairs, cost: d[0] }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetLength {
    /// Rounded mean input length.
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpedSegment {
    pub class_id: StateLabel,
    pub source_id: String,
    pub original_len: usize,
    pub values: Vec<f64>,
}

/// Index of the series with the smallest summed DTW cost to the others.
pub fn medoid(series: &[Vec<f64>]) -> usize {
    let totals: Vec<f64> = (0..series.len())
        .into_par_iter()
        .map(|i| series.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| dtw_path(&series[i], s).cost).sum())
        .collect();
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t < totals[best] {
            best = i;
        }
    }
    best
}

/// Linear interpolation of `x` onto `len` evenly spaced points.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    if len == 0 || x.is_empty() {
        return Vec::new();
    }
    if len == 1 {
        return vec![x[0]];
    }
    if x.len() == 1 {
        return vec![x[0]; len];
    }
    let scale = (x.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|k| {
            if k == len - 1 {
                return x[x.len() - 1];
            }
            let t = k as f64 * scale;
            let i = t.floor() as usize;
            let f = t - i as f64;
            if f == 0.0 {
                return x[i];
            }
            let (a, b) = (x[i], x[i + 1]);
            (a + (b - a) * f).clamp(a.min(b), a.max(b))
        })
        .collect()
}

/// Warps every series onto the batch medoid and resamples the path-expanded
/// series to the target length. A batch whose series all already have the
/// target length is returned unchanged.
pub fn ced_equalize(series: &[Vec<f64>], target: TargetLength) -> Result<Vec<Vec<f64>>> {
    if series.is_empty() || series.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("equalization needs at least one non-empty series".into()));
    }
    let len = match target {
        TargetLength::Auto => (series.iter().map(Vec::len).sum::<usize>() as f64 / series.len() as f64).round() as usize,
        TargetLength::Fixed(l) => l,
    };
    if len == 0 {
        return Err(Error::InvalidArgument("target length must be at least 1".into()));
    }
    if series.iter().all(|s| s.len() == len) {
        return Ok(series.to_vec());
    }
    let reference = &series[medoid(series)];
    Ok(series
        .par_iter()
        .map(|s| {
            let path = dtw_path(s, reference);
            let expanded: Vec<f64> = path.pairs.iter().map(|&(i, _)| s[i]).collect();
            resample_linear(&expanded, len)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub class_id: StateLabel,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub n_segments: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub profiles: Vec<ClassProfile>,
    pub warped: Vec<WarpedSegment>,
    /// Classes that were never decoded.
    pub notes: Vec<String>,
}

/// One decoded run: channel-mean STE over its frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRun {
    pub class_id: StateLabel,
    pub segment_id: String,
    pub start_frame: usize,
    pub n_frames: usize,
    pub series: Vec<f64>,
}

/// Activity-decodes every item and cuts its channel-mean STE at run boundaries.
/// Segments whose decode loses every path are skipped.
pub fn class_runs(items: &[&CorpusItem], bundle: &ClassifierBundle) -> Result<Vec<ClassRun>> {
    let per_item: Vec<Vec<ClassRun>> = items
        .par_iter()
        .map(|item| {
            let hyp = match bundle.ad_decode(&item.features) {
                Err(Error::NoSurvivingPath) => {
                    log::warn!("{}: no surviving activity path, skipped", item.segment.id);
                    return Ok(Vec::new());
                }
                r => r?,
            };
            let v = &item.features.values;
            Ok(hyp
                .label_runs
                .iter()
                .map(|(label, start, len)| ClassRun {
                    class_id: label.clone(),
                    segment_id: item.segment.id.clone(),
                    start_frame: *start,
                    n_frames: *len,
                    series: (*start..start + len).map(|t| v.row(t).mean().unwrap_or(0.0)).collect(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

pub const PROFILE_CLASSES: [StateLabel; 4] = [StateLabel::NsB, StateLabel::S, StateLabel::NsI, StateLabel::NsE];

/// Mean and variance curves of each activity class after equalization.
pub fn class_profiles(items: &[&CorpusItem], bundle: &ClassifierBundle, target: TargetLength) -> Result<ProfileSet> {
    let runs = class_runs(items, bundle)?;
    profiles_from_runs(&runs, target)
}

pub fn profiles_from_runs(runs: &[ClassRun], target: TargetLength) -> Result<ProfileSet> {
    let mut out = ProfileSet { profiles: Vec::new(), warped: Vec::new(), notes: Vec::new() };
    for class in PROFILE_CLASSES {
        let batch: Vec<&ClassRun> = runs.iter().filter(|r| r.class_id == class).collect();
        if batch.is_empty() {
            out.notes.push(Error::EmptyClass(class.to_string()).to_string());
            continue;
        }
        let series: Vec<Vec<f64>> = batch.iter().map(|r| r.series.clone()).collect();
        let warped = ced_equalize(&series, target)?;
        let (mean, variance) = mean_variance(&warped);
        out.profiles.push(ClassProfile { class_id: class.clone(), mean, variance, n_segments: warped.len() });
        out.warped.extend(batch.iter().zip(warped).map(|(r, values)| WarpedSegment {
            class_id: class.clone(),
            source_id: r.segment_id.clone(),
            original_len: r.series.len(),
            values,
        }));
    }
    Ok(out)
}

/// Pointwise two-pass mean and population variance.
fn mean_variance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n).collect();
    let var = (0..len).map(|t| rows.iter().map(|r| (r[t] - mean[t]).powi(2)).sum::<f64>() / n).collect();
    (mean, var)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoMapData {
    pub class_id: StateLabel,
    pub channels: Vec<String>,
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub normalization: String,
}

/// Per-channel mean STE over every frame decoded as `class`.
pub fn topo_map_data(
    items: &[&CorpusItem],
    bundle: &ClassifierBundle,
    class: &StateLabel,
    channels: &[String],
) -> Result<TopoMapData> {
    let decoded: Vec<(Vec<f64>, usize)> = items
        .par_iter()
        .map(|item| {
            if item.features.n_dims() != channels.len() {
                return Err(Error::DimMismatch { model: channels.len(), features: item.features.n_dims() });
            }
            let hyp = match bundle.ad_decode(&item.features) {
                Err(Error::NoSurvivingPath) => {
                    log::warn!("{}: no surviving activity path, skipped", item.segment.id);
                    return Ok((vec![0.0; channels.len()], 0));
                }
                r => r?,
            };
            let mut sum = vec![0.0; channels.len()];
            let mut n = 0;
            for (t, l) in hyp.frame_labels().iter().enumerate() {
                if l == class {
                    for (s, v) in sum.iter_mut().zip(item.features.frame(t)) {
                        *s += v;
                    }
                    n += 1;
                }
            }
            Ok((sum, n))
        })
        .collect::<Result<_>>()?;
    let n_frames: usize = decoded.iter().map(|d| d.1).sum();
    if n_frames == 0 {
        return Err(Error::EmptyClass(class.to_string()));
    }
    let mut values = vec![0.0; channels.len()];
    for (s, _) in &decoded {
        for (v, x) in values.iter_mut().zip(s) {
            *v += x;
        }
    }
    values.iter_mut().for_each(|v| *v /= n_frames as f64);
    Ok(TopoMapData {
        class_id: class.clone(),
        channels: channels.to_vec(),
        values,
        n_frames,
        normalization: "mean raw short-term energy per frame (µV²), no scaling".into(),
    })
}

/// Splits each run's sample span of a cleaned signal into fixed-length
/// chunks of the channel mean. `signals` maps segment id to its
/// `channels × samples` slice.
pub fn export_chunks(
    runs: &[ClassRun],
    signals: &BTreeMap<String, Array2<f64>>,
    hop: usize,
    window: usize,
    chunk_len: usize,
) -> Result<String> {
    if chunk_len == 0 {
        return Err(Error::InvalidArgument("chunk length must be at least 1".into()));
    }
    let mut out = String::from("class\tsegment_id\trun_start_frame\tchunk");
    for k in 0..chunk_len {
        write!(out, "\tv{k}").unwrap();
    }
    out.push('\n');
    for r in runs {
        let Some(x) = signals.get(&r.segment_id) else { continue };
        let start = r.start_frame * hop;
        let end = ((r.start_frame + r.n_frames).saturating_sub(1) * hop + window).min(x.ncols());
        if end <= start {
            continue;
        }
        let mean: Vec<f64> = (start..end).map(|t| x.column(t).mean().unwrap_or(0.0)).collect();
        for (c, chunk) in mean.chunks_exact(chunk_len).enumerate() {
            write!(out, "{}\t{}\t{}\t{c}", r.class_id, r.segment_id, r.start_frame).unwrap();
            for v in chunk {
                write!(out, "\t{v}").unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

impl ProfileSet {
    /// `class\tt\tmean\tvariance` rows.
    pub fn to_columnar(&self) -> String {
        let mut out = String::from("class\tt\tmean\tvariance\tn_segments\n");
        for p in &self.profiles {
            for (t, (m, v)) in p.mean.iter().zip(&p.variance).enumerate() {
                writeln!(out, "{}\t{t}\t{m}\t{v}\t{}", p.class_id, p.n_segments).unwrap();
            }
        }
        out
    }

    /// Line plot of each class mean with a ±variance band.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const PAD: f64 = 40.0;
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.profiles {
            for (m, v) in p.mean.iter().zip(&p.variance) {
                lo = lo.min(m - v);
                hi = hi.max(m + v);
            }
        }
        if !lo.is_finite() || hi <= lo {
            (lo, hi) = (lo.min(0.0), lo.max(0.0) + 1.0);
        }
        let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        for (k, p) in self.profiles.iter().enumerate() {
            let c = colors[k % colors.len()];
            let n = p.mean.len();
            let x = |t: usize| PAD + if n > 1 { t as f64 / (n - 1) as f64 } else { 0.5 } * (W - 2.0 * PAD);
            let upper: Vec<String> =
                (0..n).map(|t| format!("{:.2},{:.2}", x(t), y(p.mean[t] + p.variance[t]))).collect();
            let lower: Vec<String> =
                (0..n).rev().map(|t| format!("{:.2},{:.2}", x(t), y(p.mean[t] - p.variance[t]))).collect();
            writeln!(
                out,
                "<polygon points=\"{} {}\" fill=\"{c}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                upper.join(" "),
                lower.join(" ")
            )
            .unwrap();
            let line: Vec<String> = (0..n).map(|t| format!("{:.2},{:.2}", x(t), y(p.mean[t]))).collect();
            writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>", line.join(" "))
                .unwrap();
            writeln!(
                out,
                "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" fill=\"{c}\">{} (n={})</text>",
                W - PAD - 90.0,
                PAD + 14.0 * k as f64,
                p.class_id,
                p.n_segments
            )
            .unwrap();
        }
        out.push_str("</svg>\n");
        out
    }
}

impl TopoMapData {
    pub fn to_columnar(&self) -> String {
        let mut out = format!("# {}\nclass\tchannel\tvalue\n", self.normalization);
        for (c, v) in self.channels.iter().zip(&self.values) {
            writeln!(out, "{}\t{c}\t{v}", self.class_id).unwrap();
        }
        out
    }
}
