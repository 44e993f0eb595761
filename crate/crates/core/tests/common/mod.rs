//! Random small models and graphs plus brute-force scoring oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use nsdecode::features::{FeatureMatrix, FrameSpec};
use nsdecode::hmm::{DecodingGraph, Gmm, GmmHmmModel, HmmTopology, ModelSet, TrainingMeta};
use nsdecode::StateLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const CLASS_POOL: [&str; 6] = ["NS_b", "a", "NS_i", "b", "NS_e", "c"];

/// Left-to-right model with random self-loop probabilities and 1-2 mixtures.
pub fn random_model<R: Rng>(rng: &mut R, label: StateLabel, n_states: usize, dims: usize) -> GmmHmmModel {
    let mut topo = HmmTopology::left_to_right(n_states);
    for i in 0..n_states {
        let p: f64 = rng.random_range(0.1..0.9);
        topo.log_trans[[i, i]] = p.ln();
        topo.log_trans[[i, i + 1]] = (1.0 - p).ln();
    }
    let emissions = (0..n_states)
        .map(|_| {
            let m = rng.random_range(1..=2);
            let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            Gmm {
                weights: w,
                means: Array2::from_shape_fn((m, dims), |_| rng.random_range(-2.0..2.0)),
                variances: Array2::from_shape_fn((m, dims), |_| rng.random_range(0.3..2.0)),
            }
        })
        .collect();
    GmmHmmModel {
        class_id: label,
        topology: topo,
        emissions,
        variance_floor: vec![1e-6; dims],
        meta: TrainingMeta::default(),
    }
}

pub fn random_features<R: Rng>(rng: &mut R, frames: usize, dims: usize) -> FeatureMatrix {
    FeatureMatrix {
        values: Array2::from_shape_fn((frames, dims), |_| rng.random_range(-3.0..3.0)),
        frame_spec: FrameSpec::default(),
        segment_id: "rand".into(),
    }
}

/// Random graph over up to `max_classes` distinct classes with out-degree ≤ 2.
pub fn random_graph<R: Rng>(rng: &mut R, max_classes: usize, max_states: usize, dims: usize) -> (ModelSet, DecodingGraph) {
    let n_classes = rng.random_range(1..=max_classes);
    let labels: Vec<StateLabel> = CLASS_POOL[..n_classes].iter().map(|s| s.parse().unwrap()).collect();
    let mut models = ModelSet::new();
    for l in &labels {
        let n = rng.random_range(1..=max_states);
        models.insert(l.clone(), random_model(rng, l.clone(), n, dims));
    }
    let n_nodes = rng.random_range(1..=4);
    let nodes: Vec<StateLabel> = (0..n_nodes).map(|_| labels[rng.random_range(0..n_classes)].clone()).collect();
    let mut edges = Vec::new();
    for a in 0..n_nodes {
        for _ in 0..rng.random_range(0..=2) {
            let b = rng.random_range(0..n_nodes);
            if b != a && !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
    }
    let mut start = vec![0];
    if n_nodes > 1 && rng.random_bool(0.5) {
        start.push(n_nodes - 1);
    }
    let mut end = vec![n_nodes - 1];
    if n_nodes > 1 && rng.random_bool(0.5) {
        end.push(0);
    }
    (models, DecodingGraph::new(nodes, &start, &edges, &end).unwrap())
}

/// Mixture density computed directly from the parameters.
pub fn oracle_log_density(g: &Gmm, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for m in 0..g.weights.len() {
        let mut p = g.weights[m];
        for (d, xv) in x.iter().enumerate() {
            let mu = g.means[[m, d]];
            let var = g.variances[[m, d]];
            p *= (-(xv - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        }
        total += p;
    }
    total.ln()
}

fn weight(list: &[(usize, f64)], u: usize) -> Option<f64> {
    list.iter().find(|(v, _)| *v == u).map(|p| p.1)
}

/// Maximum score over all legal `(node, state)` paths, by depth-first
/// enumeration. `ns_bonus` is added to every non-speech frame.
pub fn brute_force_best(models: &ModelSet, graph: &DecodingGraph, feats: &FeatureMatrix, ns_bonus: f64) -> f64 {
    let t_len = feats.values.nrows();
    let emit = |u: usize, j: usize, t: usize| {
        let l = &graph.nodes[u];
        let x: Vec<f64> = feats.values.row(t).to_vec();
        oracle_log_density(&models[l].emissions[j], &x) + if l.is_ns() { ns_bonus } else { 0.0 }
    };
    let mut best = f64::NEG_INFINITY;
    fn rec(
        models: &ModelSet,
        graph: &DecodingGraph,
        t: usize,
        t_len: usize,
        u: usize,
        j: usize,
        acc: f64,
        emit: &dyn Fn(usize, usize, usize) -> f64,
        best: &mut f64,
    ) {
        let acc = acc + emit(u, j, t);
        let topo = &models[&graph.nodes[u]].topology;
        if t + 1 == t_len {
            if let Some(w) = weight(&graph.end, u) {
                let v = acc + topo.exit(j) + w;
                if v > *best {
                    *best = v;
                }
            }
            return;
        }
        for k in 0..topo.n_states {
            let a = topo.trans(j, k);
            if a.is_finite() {
                rec(models, graph, t + 1, t_len, u, k, acc + a, emit, best);
            }
        }
        if topo.exit(j).is_finite() {
            for &(v, w) in &graph.arcs[u] {
                let tv = &models[&graph.nodes[v]].topology;
                for k in 0..tv.n_states {
                    if tv.entry(k).is_finite() {
                        rec(models, graph, t + 1, t_len, v, k, acc + topo.exit(j) + w + tv.entry(k), emit, best);
                    }
                }
            }
        }
    }
    for &(u, w) in &graph.start {
        let topo = &models[&graph.nodes[u]].topology;
        for j in 0..topo.n_states {
            if topo.entry(j).is_finite() {
                rec(models, graph, 0, t_len, u, j, w + topo.entry(j), &emit, &mut best);
            }
        }
    }
    best
}
