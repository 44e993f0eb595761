use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::emission_table;
use super::GmmHmmModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::label::StateLabel;

pub type ModelSet = BTreeMap<StateLabel, GmmHmmModel>;

/// Word-level network of class-model instances. Each node expands into the
/// states of its class model; arc weights are log-probabilities, uniform over
/// each node's successors plus the end option.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodingGraph {
    pub nodes: Vec<StateLabel>,
    pub start: Vec<(usize, f64)>,
    pub arcs: Vec<Vec<(usize, f64)>>,
    pub end: Vec<(usize, f64)>,
}

impl DecodingGraph {
    pub fn new(nodes: Vec<StateLabel>, start: &[usize], edges: &[(usize, usize)], end: &[usize]) -> Result<Self> {
        let n = nodes.len();
        if start.iter().chain(end).any(|&i| i >= n) || edges.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::InvalidArgument("graph references a missing node".into()));
        }
        let start_w = -(start.len() as f64).ln();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            succ[a].push(b);
        }
        let is_end: Vec<bool> = (0..n).map(|i| end.contains(&i)).collect();
        let weight = |i: usize| -((succ[i].len() + usize::from(is_end[i])) as f64).ln();
        Ok(DecodingGraph {
            start: start.iter().map(|&i| (i, start_w)).collect(),
            arcs: (0..n).map(|i| succ[i].iter().map(|&j| (j, weight(i))).collect()).collect(),
            end: end.iter().map(|&i| (i, weight(i))).collect(),
            nodes,
        })
    }

    /// Straight chain visiting every label once, in order.
    pub fn chain(labels: &[StateLabel]) -> Self {
        let n = labels.len();
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        let end: Vec<usize> = n.checked_sub(1).into_iter().collect();
        let start: Vec<usize> = if n > 0 { vec![0] } else { vec![] };
        DecodingGraph::new(labels.to_vec(), &start, &edges, &end).expect("chain indices are in range")
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() || self.start.is_empty() || self.end.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// Pruning margin below the frame-best score, natural-log units.
    pub beam: f64,
    /// Multiplier on non-speech emission likelihoods; `None` leaves them untouched.
    pub ns_boost: Option<f64>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { beam: f64::INFINITY, ns_boost: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeHypothesis {
    /// `(class, state index)` per frame.
    pub state_path: Vec<(StateLabel, usize)>,
    /// Graph node per frame.
    pub node_path: Vec<usize>,
    pub log_likelihood: f64,
    /// `(class, start, len)`; a new run starts whenever the graph node changes.
    pub label_runs: Vec<(StateLabel, usize, usize)>,
}

impl DecodeHypothesis {
    pub fn frame_labels(&self) -> Vec<StateLabel> {
        self.state_path.iter().map(|(l, _)| l.clone()).collect()
    }

    /// Unit ids of the unit runs in order.
    pub fn unit_sequence(&self) -> Vec<String> {
        self.label_runs.iter().filter_map(|(l, _, _)| l.unit_id().map(str::to_string)).collect()
    }

    pub fn count_runs(&self, label: &StateLabel) -> usize {
        self.label_runs.iter().filter(|(l, _, _)| l == label).count()
    }

    pub fn ns_frames(&self) -> usize {
        self.state_path.iter().filter(|(l, _)| l.is_ns()).count()
    }

    /// Per-frame path dump followed by a run summary.
    pub fn to_columnar(&self) -> String {
        let mut out = String::from("frame\tnode\tclass\tstate\n");
        for (t, ((l, s), n)) in self.state_path.iter().zip(&self.node_path).enumerate() {
            writeln!(out, "{t}\t{n}\t{l}\t{s}").unwrap();
        }
        out.push_str("\nclass\tstart\tlen\n");
        for (l, s, n) in &self.label_runs {
            writeln!(out, "{l}\t{s}\t{n}").unwrap();
        }
        out
    }
}

fn boost_term(label: &StateLabel, boost: Option<f64>) -> Option<f64> {
    match boost {
        Some(b) if label.is_ns() => Some(b.ln()),
        _ => None,
    }
}

/// Flattened state network: expanded state `s` is `(node, state)`.
struct Network {
    owner: Vec<(usize, usize)>,
    init: Vec<f64>,
    fin: Vec<f64>,
    /// Incoming arcs `(from, weight)` per expanded state.
    incoming: Vec<Vec<(usize, f64)>>,
}

fn build_network(models: &ModelSet, graph: &DecodingGraph) -> Result<Network> {
    let mut base = Vec::with_capacity(graph.nodes.len());
    let mut owner = Vec::new();
    for (u, label) in graph.nodes.iter().enumerate() {
        let m = models.get(label).ok_or_else(|| Error::NoDataForClass(label.to_string()))?;
        base.push(owner.len());
        owner.extend((0..m.n_states()).map(|j| (u, j)));
    }
    let total = owner.len();
    let mut init = vec![f64::NEG_INFINITY; total];
    let mut fin = vec![f64::NEG_INFINITY; total];
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
    let model = |u: usize| &models[&graph.nodes[u]];

    for &(v, w) in &graph.start {
        let m = model(v);
        for k in 0..m.n_states() {
            let e = m.topology.entry(k);
            if e.is_finite() {
                init[base[v] + k] = init[base[v] + k].max(w + e);
            }
        }
    }
    for &(u, w) in &graph.end {
        let m = model(u);
        for j in 0..m.n_states() {
            let x = m.topology.exit(j);
            if x.is_finite() {
                fin[base[u] + j] = fin[base[u] + j].max(x + w);
            }
        }
    }
    for u in 0..graph.nodes.len() {
        let m = model(u);
        for i in 0..m.n_states() {
            for j in 0..m.n_states() {
                let a = m.topology.trans(i, j);
                if a.is_finite() {
                    incoming[base[u] + j].push((base[u] + i, a));
                }
            }
        }
        for &(v, w) in &graph.arcs[u] {
            let mv = model(v);
            for i in 0..m.n_states() {
                let x = m.topology.exit(i);
                if !x.is_finite() {
                    continue;
                }
                for k in 0..mv.n_states() {
                    let e = mv.topology.entry(k);
                    if e.is_finite() {
                        incoming[base[v] + k].push((base[u] + i, x + w + e));
                    }
                }
            }
        }
    }
    Ok(Network { owner, init, fin, incoming })
}

/// Emission log-densities per distinct class, boost included.
fn emission_cache(
    models: &ModelSet,
    graph: &DecodingGraph,
    features: &FeatureMatrix,
    boost: Option<f64>,
) -> Result<BTreeMap<StateLabel, Array2<f64>>> {
    let mut cache = BTreeMap::new();
    for label in &graph.nodes {
        if cache.contains_key(label) {
            continue;
        }
        let m = &models[label];
        m.check_dims(features)?;
        let mut table = emission_table(m, features.values.view());
        if let Some(b) = boost_term(label, boost) {
            table.mapv_inplace(|v| v + b);
        }
        cache.insert(label.clone(), table);
    }
    Ok(cache)
}

fn hypothesis(graph: &DecodingGraph, owner: &[(usize, usize)], states: &[usize], score: f64) -> DecodeHypothesis {
    let node_path: Vec<usize> = states.iter().map(|&s| owner[s].0).collect();
    let state_path = states.iter().map(|&s| (graph.nodes[owner[s].0].clone(), owner[s].1)).collect();
    let mut label_runs: Vec<(StateLabel, usize, usize)> = Vec::new();
    for (t, &u) in node_path.iter().enumerate() {
        if t > 0 && node_path[t - 1] == u {
            label_runs.last_mut().unwrap().2 += 1;
        } else {
            label_runs.push((graph.nodes[u].clone(), t, 1));
        }
    }
    DecodeHypothesis { state_path, node_path, log_likelihood: score, label_runs }
}

/// Viterbi best path through the expanded graph with beam pruning.
///
/// Hypotheses more than `beam` below the best score at a frame are dropped.
/// With an infinite beam the result is the exact best path.
pub fn viterbi_decode(
    models: &ModelSet,
    graph: &DecodingGraph,
    features: &FeatureMatrix,
    opts: &DecodeOptions,
) -> Result<DecodeHypothesis> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if !(opts.beam > 0.0) {
        return Err(Error::InvalidArgument(format!("beam must be positive, got {}", opts.beam)));
    }
    if let Some(b) = opts.ns_boost {
        if !(b > 0.0) {
            return Err(Error::InvalidArgument(format!("ns_boost must be positive, got {b}")));
        }
    }
    let t_len = features.n_frames();
    if t_len == 0 {
        return Err(Error::NoSurvivingPath);
    }
    let net = build_network(models, graph)?;
    let cache = emission_cache(models, graph, features, opts.ns_boost)?;
    let s_len = net.owner.len();
    let emit = |s: usize, t: usize| {
        let (u, j) = net.owner[s];
        cache[&graph.nodes[u]][[t, j]]
    };

    let mut delta: Vec<f64> = (0..s_len).map(|s| net.init[s] + emit(s, 0)).collect();
    prune(&mut delta, opts.beam);
    let mut back = Array2::<u32>::zeros((t_len, s_len));
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; s_len];
        for s in 0..s_len {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for &(r, w) in &net.incoming[s] {
                let v = delta[r] + w;
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            if best > f64::NEG_INFINITY {
                next[s] = best + emit(s, t);
                back[[t, s]] = arg as u32;
            }
        }
        prune(&mut next, opts.beam);
        delta = next;
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for s in 0..s_len {
        let v = delta[s] + net.fin[s];
        if v > best {
            best = v;
            last = s;
        }
    }
    if !best.is_finite() {
        return Err(Error::NoSurvivingPath);
    }
    let mut states = vec![0usize; t_len];
    states[t_len - 1] = last;
    for t in (1..t_len).rev() {
        states[t - 1] = back[[t, states[t]]] as usize;
    }
    Ok(hypothesis(graph, &net.owner, &states, best))
}

fn prune(delta: &mut [f64], beam: f64) {
    if beam.is_infinite() {
        return;
    }
    let best = delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return;
    }
    for v in delta.iter_mut() {
        if *v < best - beam {
            *v = f64::NEG_INFINITY;
        }
    }
}

/// Best path constrained to visit `sequence` in order, exact search.
pub fn forced_align(
    models: &ModelSet,
    sequence: &[StateLabel],
    features: &FeatureMatrix,
    ns_boost: Option<f64>,
) -> Result<DecodeHypothesis> {
    if sequence.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut needed = 0;
    for l in sequence {
        let m = models.get(l).ok_or_else(|| Error::NoDataForClass(l.to_string()))?;
        needed += m.topology.min_duration();
    }
    if needed > features.n_frames() {
        return Err(Error::ChainTooLong { needed, frames: features.n_frames() });
    }
    viterbi_decode(models, &DecodingGraph::chain(sequence), features, &DecodeOptions { beam: f64::INFINITY, ns_boost })
}

/// Scores a given path through `graph` term by term, independently of the
/// search. Returns `-inf` for a path the graph does not allow.
pub fn rescore_path(
    models: &ModelSet,
    graph: &DecodingGraph,
    features: &FeatureMatrix,
    node_path: &[usize],
    state_path: &[usize],
    ns_boost: Option<f64>,
) -> Result<f64> {
    let t_len = features.n_frames();
    if node_path.len() != t_len || state_path.len() != t_len || t_len == 0 {
        return Err(Error::InvalidArgument("path length differs from frame count".into()));
    }
    let model = |u: usize| -> Result<&GmmHmmModel> {
        let l = graph.nodes.get(u).ok_or_else(|| Error::InvalidArgument(format!("no node {u}")))?;
        models.get(l).ok_or_else(|| Error::NoDataForClass(l.to_string()))
    };
    let lookup = |list: &[(usize, f64)], u: usize| list.iter().find(|(v, _)| *v == u).map_or(f64::NEG_INFINITY, |p| p.1);

    let mut score = lookup(&graph.start, node_path[0]) + model(node_path[0])?.topology.entry(state_path[0]);
    for t in 0..t_len {
        let (u, j) = (node_path[t], state_path[t]);
        let m = model(u)?;
        m.check_dims(features)?;
        let mut e = m.emissions[j].log_density(features.frame(t));
        if let Some(b) = boost_term(&graph.nodes[u], ns_boost) {
            e += b;
        }
        score += e;
        if t + 1 < t_len {
            let (v, k) = (node_path[t + 1], state_path[t + 1]);
            let cross = m.topology.exit(j) + lookup(&graph.arcs[u], v) + model(v)?.topology.entry(k);
            score += if v == u { m.topology.trans(j, k).max(cross) } else { cross };
        }
    }
    let (u, j) = (node_path[t_len - 1], state_path[t_len - 1]);
    Ok(score + model(u)?.topology.exit(j) + lookup(&graph.end, u))
}
