//! Symmetric FastICA with a `tanh` contrast and variance-ordered component
//! removal.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Recording;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcaParams {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Fail with `ConvergenceFailure` instead of returning the last iterate.
    pub strict: bool,
    /// Fit on at most this many evenly strided samples; the unmixing is then
    /// applied to every sample.
    pub max_fit_samples: Option<usize>,
}

impl Default for IcaParams {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-6, seed: 0, strict: true, max_fit_samples: Some(50_000) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcaDecomposition {
    /// `[n_components, n_channels]`, applied to mean-removed data.
    pub unmixing: Array2<f64>,
    /// `[n_channels, n_components]`, pseudo-inverse of `unmixing`.
    pub mixing: Array2<f64>,
    /// `[n_components, n_samples]`, unit variance.
    pub sources: Array2<f64>,
    /// Per-component variance contributed to the channels, descending.
    pub explained_variance: Vec<f64>,
    pub channel_means: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_array(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Full-rank FastICA decomposition of `[n_channels, n_samples]` data.
pub fn fast_ica(data: &Array2<f64>, params: &IcaParams) -> Result<IcaDecomposition> {
    let (c, n) = data.dim();
    if c == 0 || n < 10 * c {
        return Err(Error::InsufficientData(format!(
            "ICA needs at least {} samples for {c} channels, got {n}",
            10 * c
        )));
    }
    let channel_means: Vec<f64> = data.rows().into_iter().map(|r| r.sum() / n as f64).collect();
    let mut x = to_dmatrix(data);
    for (i, m) in channel_means.iter().enumerate() {
        x.row_mut(i).add_scalar_mut(-m);
    }
    let stride = params.max_fit_samples.map_or(1, |m| n.div_ceil(m.max(10 * c)));
    let fit = if stride > 1 { x.select_columns((0..n).step_by(stride).collect::<Vec<_>>().iter()) } else { x.clone() };
    let n_fit = fit.ncols();

    let cov = &fit * fit.transpose() / n_fit as f64;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0) || min_ev <= 1e-12 * max_ev {
        return Err(Error::RankDeficient(format!("covariance eigenvalues span [{min_ev:e}, {max_ev:e}]")));
    }
    let whitening = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * eig.eigenvectors.transpose();
    let z = &whitening * &fit;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = DMatrix::from_fn(c, c, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iter {
        iterations = it;
        let wz = &w * &z;
        let g = wz.map(f64::tanh);
        let g_prime_mean: Vec<f64> =
            (0..c).map(|i| g.row(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / n_fit as f64).collect();
        let mut w_new = &g * z.transpose() / n_fit as f64;
        for i in 0..c {
            let row = w.row(i) * g_prime_mean[i];
            let updated = w_new.row(i) - row;
            w_new.set_row(i, &updated);
        }
        let w_new = symmetric_decorrelation(&w_new);
        let lim = (&w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        if params.strict {
            return Err(Error::ConvergenceFailure(params.max_iter));
        }
        log::warn!("FastICA stopped after {} iterations without converging", params.max_iter);
    }

    let unmixing = &w * &whitening;
    let mixing = unmixing
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let sources = &unmixing * &x;

    let explained: Vec<f64> = (0..c).map(|k| mixing.column(k).norm_squared()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| explained[b].total_cmp(&explained[a]).then(a.cmp(&b)));

    let unmixing = DMatrix::from_fn(c, c, |i, j| unmixing[(order[i], j)]);
    let mixing = DMatrix::from_fn(c, c, |i, j| mixing[(i, order[j])]);
    let sources = DMatrix::from_fn(c, n, |i, j| sources[(order[i], j)]);
    Ok(IcaDecomposition {
        unmixing: to_array(&unmixing),
        mixing: to_array(&mixing),
        sources: to_array(&sources),
        explained_variance: order.iter().map(|&k| explained[k]).collect(),
        channel_means,
        iterations,
        converged,
    })
}

impl IcaDecomposition {
    /// Back-projects the sources with the first `n_remove` components zeroed.
    pub fn reconstruct_without(&self, n_remove: usize) -> Array2<f64> {
        let mut kept = self.sources.clone();
        for k in 0..n_remove.min(kept.nrows()) {
            kept.row_mut(k).fill(0.0);
        }
        let mut out = self.mixing.dot(&kept);
        for (mut row, m) in out.rows_mut().into_iter().zip(&self.channel_means) {
            row.mapv_inplace(|v| v + m);
        }
        out
    }
}

/// Removes the `n_remove` highest-variance independent components.
pub fn fast_ica_remove(
    recording: &Recording,
    n_remove: usize,
    params: &IcaParams,
) -> Result<(Recording, IcaDecomposition)> {
    if n_remove >= recording.n_channels() {
        return Err(Error::InvalidArgument(format!(
            "cannot remove {n_remove} of {} components",
            recording.n_channels()
        )));
    }
    let ica = fast_ica(&recording.samples, params)?;
    let mut out = recording.clone();
    out.samples = ica.reconstruct_without(n_remove);
    Ok((out, ica))
}
