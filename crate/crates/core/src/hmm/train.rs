use log::debug;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{floored_simplex, gmm_from_assignments, kmeans, WEIGHT_FLOOR};
use super::model::emission_table;
use super::{Gmm, GmmHmmModel, HmmTopology, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FrameLabelSequence};
use crate::label::{label_runs, StateLabel};
use crate::util::{log_sum_exp, rng_for};

/// Smallest probability kept on an allowed transition arc after an update.
pub const TRANSITION_FLOOR: f64 = 1e-5;

/// Mix-up schedule: split the heaviest component of each state every
/// `split_every` iterations until `target_mixtures` is reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixupSchedule {
    pub target_mixtures: usize,
    pub split_every: usize,
}

impl Default for MixupSchedule {
    fn default() -> Self {
        Self { target_mixtures: 3, split_every: 8 }
    }
}

impl MixupSchedule {
    /// No splitting.
    pub fn fixed() -> Self {
        Self { target_mixtures: 0, split_every: 0 }
    }
}

/// Per-dimension variance floor: `scale × global variance`, at least `1e-6`.
pub fn variance_floor(features: &[FeatureMatrix], scale: f64) -> Vec<f64> {
    let d = features.first().map_or(0, |f| f.n_dims());
    let n: usize = features.iter().map(|f| f.n_frames()).sum();
    let mut mean = vec![0.0; d];
    for f in features {
        for row in f.values.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
    }
    let mut var = vec![0.0; d];
    for f in features {
        for row in f.values.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
    }
    var.into_iter().map(|v| (scale * v).max(1e-6)).collect()
}

/// Contiguous frame blocks labelled `class_id`, in corpus order.
pub fn class_runs<'a>(
    features: &'a [FeatureMatrix],
    labels: &[FrameLabelSequence],
    class_id: &StateLabel,
) -> Result<Vec<ArrayView2<'a, f64>>> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature matrices but {} label sequences",
            features.len(),
            labels.len()
        )));
    }
    let mut runs = Vec::new();
    for (f, l) in features.iter().zip(labels) {
        if f.n_frames() != l.len() {
            return Err(Error::InvalidArgument(format!(
                "segment {}: {} frames but {} labels",
                f.segment_id,
                f.n_frames(),
                l.len()
            )));
        }
        for (label, start, len) in label_runs(&l.labels) {
            if &label == class_id {
                runs.push(f.values.slice(ndarray::s![start..start + len, ..]));
            }
        }
    }
    Ok(runs)
}

/// Initialises a left-to-right model from labelled data: each run is split
/// evenly across the states and each state's mixture is seeded by k-means.
/// Runs shorter than `n_states` are skipped.
pub fn flat_start(
    features: &[FeatureMatrix],
    labels: &[FrameLabelSequence],
    class_id: &StateLabel,
    n_states: usize,
    n_mixtures: usize,
    floor_scale: f64,
    seed: u64,
) -> Result<GmmHmmModel> {
    if n_states == 0 || n_mixtures == 0 {
        return Err(Error::InvalidArgument("need at least one state and one mixture".into()));
    }
    let runs: Vec<_> = class_runs(features, labels, class_id)?.into_iter().filter(|r| r.nrows() >= n_states).collect();
    if runs.is_empty() {
        return Err(Error::NoDataForClass(class_id.to_string()));
    }
    let floor = variance_floor(features, floor_scale);
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
    for run in &runs {
        let len = run.nrows();
        for (t, row) in run.rows().into_iter().enumerate() {
            per_state[t * n_states / len].push(row.to_slice().expect("feature rows are contiguous"));
        }
    }
    let mut rng = rng_for(seed, &format!("flat-start/{class_id}"));
    let emissions = per_state
        .iter()
        .map(|pts| {
            let k = n_mixtures.min(pts.len());
            let assign = if k > 1 { kmeans(pts, k, &mut rng, 50) } else { vec![0; pts.len()] };
            let mut g = gmm_from_assignments(pts, &assign, k, &floor);
            while g.n_mixtures() < n_mixtures {
                g = g.split_heaviest();
            }
            g
        })
        .collect();
    Ok(GmmHmmModel {
        class_id: class_id.clone(),
        topology: HmmTopology::left_to_right(n_states),
        emissions,
        variance_floor: floor,
        meta: TrainingMeta {
            iterations: 0,
            log_likelihoods: Vec::new(),
            n_runs: runs.len(),
            n_frames: runs.iter().map(|r| r.nrows()).sum(),
            seed,
        },
    })
}

/// Sufficient statistics gathered by one E-step.
#[derive(Clone, Debug)]
struct Stats {
    /// `[state][mixture]` occupancy.
    occ: Vec<Vec<f64>>,
    /// `[state]` -> `[mixture, dim]` first moments.
    sum: Vec<Array2<f64>>,
    /// `[state]` -> `[mixture, dim]` second moments.
    sum_sq: Vec<Array2<f64>>,
    /// Expected transition counts including entry row and exit column.
    trans: Array2<f64>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(model: &GmmHmmModel) -> Self {
        let n = model.n_states();
        let d = model.n_dims();
        Stats {
            occ: model.emissions.iter().map(|g| vec![0.0; g.n_mixtures()]).collect(),
            sum: model.emissions.iter().map(|g| Array2::zeros((g.n_mixtures(), d))).collect(),
            sum_sq: model.emissions.iter().map(|g| Array2::zeros((g.n_mixtures(), d))).collect(),
            trans: Array2::zeros((n + 1, n + 1)),
            log_likelihood: 0.0,
        }
    }

    fn merge(&mut self, other: &Stats) {
        for (a, b) in self.occ.iter_mut().zip(&other.occ) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.trans += &other.trans;
        self.log_likelihood += other.log_likelihood;
    }
}

/// Forward-backward over one run.
fn run_stats(model: &GmmHmmModel, run: ArrayView2<f64>) -> Stats {
    let n = model.n_states();
    let t_len = run.nrows();
    let topo = &model.topology;
    let e = emission_table(model, run);
    let mut stats = Stats::zeros(model);

    let mut alpha = Array2::from_elem((t_len, n), f64::NEG_INFINITY);
    let mut beta = Array2::from_elem((t_len, n), f64::NEG_INFINITY);
    let mut buf = Vec::with_capacity(n);
    for j in 0..n {
        alpha[[0, j]] = topo.entry(j) + e[[0, j]];
    }
    for t in 1..t_len {
        for j in 0..n {
            buf.clear();
            buf.extend((0..n).map(|i| alpha[[t - 1, i]] + topo.trans(i, j)));
            alpha[[t, j]] = log_sum_exp(&buf) + e[[t, j]];
        }
    }
    for j in 0..n {
        beta[[t_len - 1, j]] = topo.exit(j);
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            buf.clear();
            buf.extend((0..n).map(|j| topo.trans(i, j) + e[[t + 1, j]] + beta[[t + 1, j]]));
            beta[[t, i]] = log_sum_exp(&buf);
        }
    }
    buf.clear();
    buf.extend((0..n).map(|j| alpha[[t_len - 1, j]] + topo.exit(j)));
    let ll = log_sum_exp(&buf);
    stats.log_likelihood = ll;
    if !ll.is_finite() {
        return stats;
    }

    for j in 0..n {
        stats.trans[[n, j]] += (alpha[[0, j]] + beta[[0, j]] - ll).exp();
        stats.trans[[j, n]] += (alpha[[t_len - 1, j]] + topo.exit(j) - ll).exp();
    }
    for t in 0..t_len.saturating_sub(1) {
        for i in 0..n {
            if alpha[[t, i]] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                let a = topo.trans(i, j);
                if a.is_finite() {
                    stats.trans[[i, j]] += (alpha[[t, i]] + a + e[[t + 1, j]] + beta[[t + 1, j]] - ll).exp();
                }
            }
        }
    }

    let mut comp = Vec::new();
    for (t, row) in run.rows().into_iter().enumerate() {
        let x = row.to_vec();
        for (j, g) in model.emissions.iter().enumerate() {
            let gamma = (alpha[[t, j]] + beta[[t, j]] - ll).exp();
            if gamma == 0.0 {
                continue;
            }
            g.component_log_densities(&x, &mut comp);
            for (m, c) in comp.iter().enumerate() {
                let r = gamma * (c - e[[t, j]]).exp();
                if r == 0.0 {
                    continue;
                }
                stats.occ[j][m] += r;
                let mut s = stats.sum[j].row_mut(m);
                s.iter_mut().zip(&x).for_each(|(a, v)| *a += r * v);
                let mut s2 = stats.sum_sq[j].row_mut(m);
                s2.iter_mut().zip(&x).for_each(|(a, v)| *a += r * v * v);
            }
        }
    }
    stats
}

/// E-step over all runs; per-run statistics are merged in run order so the
/// result does not depend on thread scheduling.
fn e_step(model: &GmmHmmModel, runs: &[ArrayView2<f64>]) -> Stats {
    let parts: Vec<Stats> = runs.par_iter().map(|r| run_stats(model, *r)).collect();
    let mut total = Stats::zeros(model);
    for p in &parts {
        total.merge(p);
    }
    total
}

fn m_step(model: &GmmHmmModel, stats: &Stats) -> GmmHmmModel {
    let n = model.n_states();
    let mut out = model.clone();
    for i in 0..=n {
        let allowed: Vec<usize> = (0..=n).filter(|&j| model.topology.log_trans[[i, j]].is_finite()).collect();
        let counts: Vec<f64> = allowed.iter().map(|&j| stats.trans[[i, j]]).collect();
        if counts.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let probs = floored_simplex(&counts, TRANSITION_FLOOR);
        for (&j, p) in allowed.iter().zip(probs) {
            out.topology.log_trans[[i, j]] = p.ln();
        }
    }
    for (j, g) in out.emissions.iter_mut().enumerate() {
        let occ = &stats.occ[j];
        if occ.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        g.weights = floored_simplex(occ, WEIGHT_FLOOR);
        for m in 0..g.n_mixtures() {
            let c = occ[m];
            if c <= 0.0 {
                continue;
            }
            for d in 0..model.n_dims() {
                let mean = stats.sum[j][[m, d]] / c;
                let var = stats.sum_sq[j][[m, d]] / c - mean * mean;
                g.means[[m, d]] = mean;
                g.variances[[m, d]] = var.max(model.variance_floor[d]);
            }
        }
    }
    out
}

fn split_all(model: &GmmHmmModel, target: usize) -> GmmHmmModel {
    let mut out = model.clone();
    out.emissions = model
        .emissions
        .iter()
        .map(|g| if g.n_mixtures() < target { g.split_heaviest() } else { g.clone() })
        .collect::<Vec<Gmm>>();
    out
}

/// Baum-Welch re-estimation over the runs labelled with the model's class.
///
/// A scheduled mixture split is kept only when one EM step from the split
/// model reaches at least the likelihood of the plain EM step, so the
/// recorded likelihood sequence never decreases.
pub fn em_train(
    model: &GmmHmmModel,
    features: &[FeatureMatrix],
    labels: &[FrameLabelSequence],
    n_iterations: usize,
    schedule: &MixupSchedule,
) -> Result<GmmHmmModel> {
    if n_iterations == 0 {
        return Err(Error::InvalidArgument("n_iterations must be at least 1".into()));
    }
    if let Some(f) = features.first() {
        model.check_dims(f)?;
    }
    let min_len = model.topology.min_duration();
    let runs: Vec<_> =
        class_runs(features, labels, &model.class_id)?.into_iter().filter(|r| r.nrows() >= min_len).collect();
    if runs.is_empty() {
        return Err(Error::NoDataForClass(model.class_id.to_string()));
    }

    let mut current = model.clone();
    let mut stats = e_step(&current, &runs);
    if !stats.log_likelihood.is_finite() {
        return Err(Error::NumericalUnderflow(format!(
            "initial log-likelihood of {} is {}",
            model.class_id, stats.log_likelihood
        )));
    }
    let mut history = vec![stats.log_likelihood];
    for it in 1..=n_iterations {
        let mut next = m_step(&current, &stats);
        let mut next_stats = e_step(&next, &runs);
        let wants_split = schedule.split_every > 0
            && it % schedule.split_every == 0
            && next.emissions.iter().any(|g| g.n_mixtures() < schedule.target_mixtures);
        if wants_split {
            let split = split_all(&next, schedule.target_mixtures);
            let split_stats = e_step(&split, &runs);
            let candidate = m_step(&split, &split_stats);
            let candidate_stats = e_step(&candidate, &runs);
            if candidate_stats.log_likelihood >= next_stats.log_likelihood {
                debug!("{}: split accepted at iteration {it}", model.class_id);
                next = candidate;
                next_stats = candidate_stats;
            } else {
                debug!("{}: split rejected at iteration {it}", model.class_id);
            }
        }
        if !next_stats.log_likelihood.is_finite() {
            return Err(Error::NumericalUnderflow(format!(
                "log-likelihood of {} became {} at iteration {it}",
                model.class_id, next_stats.log_likelihood
            )));
        }
        current = next;
        stats = next_stats;
        history.push(stats.log_likelihood);
    }
    current.meta.iterations = model.meta.iterations + n_iterations;
    current.meta.log_likelihoods = history;
    current.meta.n_runs = runs.len();
    current.meta.n_frames = runs.iter().map(|r| r.len_of(Axis(0))).sum();
    Ok(current)
}
