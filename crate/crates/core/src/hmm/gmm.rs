use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::log_sum_exp;

/// Smallest mixture weight kept after an update.
pub const WEIGHT_FLOOR: f64 = 1e-10;

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    /// `[n_mixtures, n_dims]`
    pub means: Array2<f64>,
    /// `[n_mixtures, n_dims]`
    pub variances: Array2<f64>,
}

pub(crate) fn diag_log_gauss(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += (2.0 * PI * vi).ln() + d * d / vi;
    }
    -0.5 * acc
}

impl Gmm {
    pub fn single(mean: &[f64], var: &[f64]) -> Self {
        let d = mean.len();
        Self {
            weights: vec![1.0],
            means: Array2::from_shape_vec((1, d), mean.to_vec()).unwrap(),
            variances: Array2::from_shape_vec((1, d), var.to_vec()).unwrap(),
        }
    }

    pub fn n_mixtures(&self) -> usize {
        self.weights.len()
    }

    pub fn n_dims(&self) -> usize {
        self.means.ncols()
    }

    /// `ln w_m + ln N(x; μ_m, Σ_m)` for every component.
    pub fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for m in 0..self.n_mixtures() {
            let mean = self.means.row(m);
            let var = self.variances.row(m);
            out.push(self.weights[m].ln() + diag_log_gauss(x, mean.as_slice().unwrap(), var.as_slice().unwrap()));
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.n_mixtures());
        self.component_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument(format!("mixture weights {:?} are not a positive simplex", self.weights)));
        }
        if self.means.dim() != self.variances.dim() || self.means.nrows() != self.weights.len() {
            return Err(Error::InvalidArgument("mixture parameter shapes disagree".into()));
        }
        if self.variances.iter().any(|v| !(*v > 0.0)) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("non-positive variance or non-finite mean".into()));
        }
        Ok(())
    }

    /// Splits the heaviest component into two with means shifted by ±0.2σ.
    pub fn split_heaviest(&self) -> Gmm {
        let m = (0..self.n_mixtures()).max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]).then(b.cmp(&a))).unwrap();
        let d = self.n_dims();
        let k = self.n_mixtures();
        let mut weights = self.weights.clone();
        weights[m] *= 0.5;
        weights.push(weights[m]);
        let mut means = Array2::zeros((k + 1, d));
        let mut variances = Array2::zeros((k + 1, d));
        means.slice_mut(ndarray::s![..k, ..]).assign(&self.means);
        variances.slice_mut(ndarray::s![..k, ..]).assign(&self.variances);
        variances.row_mut(k).assign(&self.variances.row(m));
        let sd: Array1<f64> = self.variances.row(m).mapv(f64::sqrt);
        let base = self.means.row(m).to_owned();
        means.row_mut(m).assign(&(&base + &(0.2 * &sd)));
        means.row_mut(k).assign(&(&base - &(0.2 * &sd)));
        Gmm { weights, means, variances }
    }
}

/// Maximizes `Σ c_m ln w_m` over the simplex subject to `w_m ≥ floor`.
pub(crate) fn floored_simplex(counts: &[f64], floor: f64) -> Vec<f64> {
    let k = counts.len();
    let mut pinned = vec![false; k];
    loop {
        let free_mass = 1.0 - floor * pinned.iter().filter(|p| **p).count() as f64;
        let free_count: f64 = counts.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(c, _)| c).sum();
        let mut w: Vec<f64> = counts
            .iter()
            .zip(&pinned)
            .map(|(c, p)| {
                if *p {
                    floor
                } else if free_count > 0.0 {
                    free_mass * c / free_count
                } else {
                    free_mass / k as f64
                }
            })
            .collect();
        let newly: Vec<usize> = (0..k).filter(|&i| !pinned[i] && w[i] < floor).collect();
        if newly.is_empty() {
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            return w;
        }
        for i in newly {
            pinned[i] = true;
        }
    }
}

/// Lloyd's k-means with seeded k-means++ initialisation; returns assignments.
pub(crate) fn kmeans<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R, max_iter: usize) -> Vec<usize> {
    let n = points.len();
    let d = points.first().map_or(0, |p| p.len());
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].to_vec()];
    while centers.len() < k {
        let dists: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = dists.iter().sum();
        if total <= 0.0 {
            centers.push(points[rng.random_range(0..n)].to_vec());
            continue;
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, dv) in dists.iter().enumerate() {
            if r < *dv {
                pick = i;
                break;
            }
            r -= dv;
        }
        centers.push(points[pick].to_vec());
    }
    let mut assign = vec![0usize; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])).then(a.cmp(&b)))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

/// Fits a mixture from hard assignments; empty clusters inherit the pooled
/// statistics at floor weight.
pub(crate) fn gmm_from_assignments(points: &[&[f64]], assign: &[usize], k: usize, floor: &[f64]) -> Gmm {
    let d = floor.len();
    let n = points.len() as f64;
    let mut pooled_mean = vec![0.0; d];
    for p in points {
        for (m, v) in pooled_mean.iter_mut().zip(p.iter()) {
            *m += v / n;
        }
    }
    let mut pooled_var = vec![0.0; d];
    for p in points {
        for ((s, v), m) in pooled_var.iter_mut().zip(p.iter()).zip(&pooled_mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let mut means = Array2::zeros((k, d));
    let mut variances = Array2::zeros((k, d));
    let mut counts = vec![0.0; k];
    for c in 0..k {
        let members: Vec<&[f64]> = points.iter().zip(assign).filter(|(_, a)| **a == c).map(|(p, _)| *p).collect();
        counts[c] = members.len() as f64;
        for j in 0..d {
            let (mean, var) = if members.is_empty() {
                (pooled_mean[j], pooled_var[j])
            } else {
                let cnt = members.len() as f64;
                let mean = members.iter().map(|p| p[j]).sum::<f64>() / cnt;
                (mean, members.iter().map(|p| (p[j] - mean) * (p[j] - mean)).sum::<f64>() / cnt)
            };
            means[[c, j]] = mean;
            variances[[c, j]] = var.max(floor[j]);
        }
    }
    Gmm { weights: floored_simplex(&counts, WEIGHT_FLOOR), means, variances }
}
