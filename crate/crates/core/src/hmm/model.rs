use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Gmm;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::label::StateLabel;
use crate::util::log_sum_exp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyKind {
    LeftToRight,
    Grammar,
}

/// Transition structure with a non-emitting entry/exit node at index `n_states`.
///
/// Row `n_states` holds entry probabilities, column `n_states` exit
/// probabilities. Forbidden arcs are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmTopology {
    pub n_states: usize,
    pub log_trans: Array2<f64>,
    pub kind: TopologyKind,
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    n_states: usize,
    kind: TopologyKind,
    /// `null` marks a forbidden arc.
    log_trans: Vec<Vec<Option<f64>>>,
}

impl Serialize for HmmTopology {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let log_trans = self
            .log_trans
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect())
            .collect();
        TopologyFile { n_states: self.n_states, kind: self.kind, log_trans }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HmmTopology {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let f = TopologyFile::deserialize(deserializer)?;
        let n = f.n_states + 1;
        if f.log_trans.len() != n || f.log_trans.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("transition matrix has the wrong shape"));
        }
        let log_trans = Array2::from_shape_fn((n, n), |(i, j)| f.log_trans[i][j].unwrap_or(f64::NEG_INFINITY));
        Ok(HmmTopology { n_states: f.n_states, log_trans, kind: f.kind })
    }
}

impl HmmTopology {
    /// Entry into state 0, self-loop or advance, exit from the last state;
    /// uniform over the allowed arcs.
    pub fn left_to_right(n_states: usize) -> Self {
        let n = n_states;
        let mut log_trans = Array2::from_elem((n + 1, n + 1), f64::NEG_INFINITY);
        log_trans[[n, 0]] = 0.0;
        for i in 0..n {
            log_trans[[i, i]] = 0.5f64.ln();
            log_trans[[i, i + 1]] = 0.5f64.ln();
        }
        HmmTopology { n_states, log_trans, kind: TopologyKind::LeftToRight }
    }

    pub fn entry(&self, j: usize) -> f64 {
        self.log_trans[[self.n_states, j]]
    }

    pub fn exit(&self, j: usize) -> f64 {
        self.log_trans[[j, self.n_states]]
    }

    pub fn trans(&self, i: usize, j: usize) -> f64 {
        self.log_trans[[i, j]]
    }

    /// Fewest emitting frames on any entry-to-exit path.
    pub fn min_duration(&self) -> usize {
        let n = self.n_states;
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        for j in 0..n {
            if self.entry(j).is_finite() {
                dist[j] = 1;
                queue.push_back(j);
            }
        }
        while let Some(i) = queue.pop_front() {
            if self.exit(i).is_finite() {
                return dist[i];
            }
            for j in 0..n {
                if self.trans(i, j).is_finite() && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        usize::MAX
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if self.log_trans.dim() != (n + 1, n + 1) {
            return Err(Error::InvalidArgument("transition matrix shape".into()));
        }
        for (i, row) in self.log_trans.rows().into_iter().enumerate() {
            let total = log_sum_exp(row.as_slice().unwrap()).exp();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("transition row {i} sums to {total}")));
            }
        }
        if self.kind == TopologyKind::LeftToRight {
            for i in 0..n {
                for j in 0..n {
                    if self.trans(i, j).is_finite() && j != i && j != i + 1 {
                        return Err(Error::InvalidArgument(format!("left-to-right topology has arc {i}->{j}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// EM iterations run.
    pub iterations: usize,
    /// Total log-likelihood of the training runs, initial model first.
    pub log_likelihoods: Vec<f64>,
    pub n_runs: usize,
    pub n_frames: usize,
    pub seed: u64,
}

impl TrainingMeta {
    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.log_likelihoods.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmHmmModel {
    pub class_id: StateLabel,
    pub topology: HmmTopology,
    pub emissions: Vec<Gmm>,
    pub variance_floor: Vec<f64>,
    pub meta: TrainingMeta,
}

impl GmmHmmModel {
    pub fn n_states(&self) -> usize {
        self.topology.n_states
    }

    pub fn n_dims(&self) -> usize {
        self.variance_floor.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.emissions.len() != self.n_states() {
            return Err(Error::InvalidArgument(format!(
                "{} emissions for {} states",
                self.emissions.len(),
                self.n_states()
            )));
        }
        for g in &self.emissions {
            g.validate()?;
            if g.n_dims() != self.n_dims() {
                return Err(Error::DimMismatch { model: self.n_dims(), features: g.n_dims() });
            }
            for row in g.variances.rows() {
                if row.iter().zip(&self.variance_floor).any(|(v, f)| v < f) {
                    return Err(Error::InvalidArgument("variance below floor".into()));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_dims(&self, features: &FeatureMatrix) -> Result<()> {
        if features.n_dims() != self.n_dims() {
            return Err(Error::DimMismatch { model: self.n_dims(), features: features.n_dims() });
        }
        Ok(())
    }

    /// Forward-algorithm log-probability of a whole feature sequence.
    pub fn log_likelihood(&self, features: &FeatureMatrix) -> Result<f64> {
        self.check_dims(features)?;
        let ll = forward_log_likelihood(self, features.values.view());
        if ll.is_nan() {
            return Err(Error::NumericalUnderflow(format!("log-likelihood of {} is NaN", self.class_id)));
        }
        Ok(ll)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: GmmHmmModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Per-frame, per-state emission log-densities `[n_frames, n_states]`.
pub(crate) fn emission_table(model: &GmmHmmModel, frames: ndarray::ArrayView2<f64>) -> Array2<f64> {
    let t = frames.nrows();
    let mut out = Array2::zeros((t, model.n_states()));
    for (i, row) in frames.rows().into_iter().enumerate() {
        let x = row.to_vec();
        for (j, g) in model.emissions.iter().enumerate() {
            out[[i, j]] = g.log_density(&x);
        }
    }
    out
}

pub(crate) fn forward_log_likelihood(model: &GmmHmmModel, frames: ndarray::ArrayView2<f64>) -> f64 {
    let n = model.n_states();
    let t_len = frames.nrows();
    if t_len == 0 {
        return f64::NEG_INFINITY;
    }
    let e = emission_table(model, frames);
    let topo = &model.topology;
    let mut alpha: Vec<f64> = (0..n).map(|j| topo.entry(j) + e[[0, j]]).collect();
    let mut buf = Vec::with_capacity(n);
    for t in 1..t_len {
        let next: Vec<f64> = (0..n)
            .map(|j| {
                buf.clear();
                buf.extend((0..n).map(|i| alpha[i] + topo.trans(i, j)));
                log_sum_exp(&buf) + e[[t, j]]
            })
            .collect();
        alpha = next;
    }
    let ends: Vec<f64> = (0..n).map(|j| alpha[j] + topo.exit(j)).collect();
    log_sum_exp(&ends)
}
