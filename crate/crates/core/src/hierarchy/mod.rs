//! Phrase classifiers built from unit models.
//!
//! * `BL`: unit models only, phrase graphs are plain unit chains.
//! * `DNS`: one merged non-speech model, optional between and around units.
//! * `DNS3`: NS_b / NS_i / NS_e models in their positional slots.
//! * `HC`: an activity detector over {S, NS_b, NS_i, NS_e} runs first; only
//!   phrases whose gap count matches the detected NS_i runs are decoded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusItem};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FrameLabelSequence, LabelScheme};
use crate::hmm::{
    em_train, flat_start, forced_align, viterbi_decode, DecodeHypothesis, DecodeOptions, DecodingGraph,
    GmmHmmModel, MixupSchedule, ModelSet,
};
use crate::label::StateLabel;
use crate::util::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "BL")]
    Bl,
    #[serde(rename = "DNS")]
    Dns,
    #[serde(rename = "DNS3")]
    Dns3,
    #[serde(rename = "HC")]
    Hc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Bl, Scheme::Dns, Scheme::Dns3, Scheme::Hc];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bl => "BL",
            Scheme::Dns => "DNS",
            Scheme::Dns3 => "DNS3",
            Scheme::Hc => "HC",
        }
    }

    /// Label scheme the phrase-level models train on.
    pub fn label_scheme(self) -> LabelScheme {
        match self {
            Scheme::Bl => LabelScheme::Bl,
            Scheme::Dns => LabelScheme::Dns,
            Scheme::Dns3 | Scheme::Hc => LabelScheme::Dns3,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BL" => Ok(Scheme::Bl),
            "DNS" => Ok(Scheme::Dns),
            "DNS3" => Ok(Scheme::Dns3),
            "HC" => Ok(Scheme::Hc),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// States per unit model.
    pub unit_states: usize,
    /// States per non-speech model.
    pub ns_states: usize,
    /// States of the generic speech model in activity detection.
    pub speech_states: usize,
    pub mixup: MixupSchedule,
    pub n_iterations: usize,
    /// Training rounds; every round after the first re-segments the training
    /// data by forced alignment with the current models.
    pub align_rounds: usize,
    pub floor_scale: f64,
    pub beam: f64,
    /// Non-speech boost for activity detection and forced alignment.
    pub ns_boost: f64,
    /// Non-speech boost for phrase decoding.
    pub phrase_ns_boost: Option<f64>,
    /// Decode `ln(STE + log_floor)` instead of raw energies.
    pub log_features: bool,
    pub log_floor: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            unit_states: 3,
            ns_states: 1,
            speech_states: 3,
            mixup: MixupSchedule::default(),
            n_iterations: 40,
            align_rounds: 2,
            floor_scale: 1e-4,
            beam: 4.0,
            ns_boost: 1.28,
            phrase_ns_boost: None,
            log_features: true,
            log_floor: 1e-3,
            seed: 0,
        }
    }
}

impl HyperParams {
    fn n_states(&self, label: &StateLabel) -> usize {
        match label {
            StateLabel::Unit(_) => self.unit_states,
            StateLabel::S => self.speech_states,
            _ => self.ns_states,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.unit_states == 0 || self.ns_states == 0 || self.speech_states == 0 {
            return Err(Error::InvalidArgument("state counts must be at least 1".into()));
        }
        if self.n_iterations == 0 || self.align_rounds == 0 {
            return Err(Error::InvalidArgument("n_iterations and align_rounds must be at least 1".into()));
        }
        if !(self.beam > 0.0) || !(self.ns_boost > 0.0) || self.phrase_ns_boost.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::InvalidArgument("beam and boosts must be positive".into()));
        }
        if self.log_features && !(self.log_floor > 0.0) {
            return Err(Error::InvalidArgument("log_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub units: Vec<String>,
    pub expected_ns_i: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitInventory {
    pub phrases: BTreeMap<String, PhraseEntry>,
}

impl UnitInventory {
    pub fn new(phrases: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (id, units) in phrases {
            if units.is_empty() {
                return Err(Error::InvalidArgument(format!("phrase {id} has no units")));
            }
            out.insert(id.clone(), PhraseEntry { units: units.clone(), expected_ns_i: units.len() - 1 });
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty phrase inventory".into()));
        }
        Ok(Self { phrases: out })
    }

    pub fn units(&self) -> BTreeSet<String> {
        self.phrases.values().flat_map(|p| p.units.iter().cloned()).collect()
    }
}

/// Grammar `NS_b? (S NS_i)* S NS_e?` over the four activity classes.
pub fn ad_grammar() -> DecodingGraph {
    let nodes = vec![StateLabel::NsB, StateLabel::S, StateLabel::NsI, StateLabel::NsE];
    DecodingGraph::new(nodes, &[0, 1], &[(0, 1), (1, 2), (2, 1), (1, 3)], &[1, 3]).expect("fixed grammar")
}

/// Phrase network for a scheme: units in order, with optional non-speech
/// slots before, between and after them (none for BL).
pub fn phrase_graph(units: &[String], scheme: Scheme) -> DecodingGraph {
    let unit_labels: Vec<StateLabel> = units.iter().map(|u| StateLabel::unit(u.clone())).collect();
    if scheme == Scheme::Bl {
        return DecodingGraph::chain(&unit_labels);
    }
    let n = units.len();
    let gap = |k: usize| match scheme {
        Scheme::Dns => StateLabel::Ns,
        _ if k == 0 => StateLabel::NsB,
        _ if k == n => StateLabel::NsE,
        _ => StateLabel::NsI,
    };
    // node 2k is gap k, node 2k+1 is unit k
    let mut nodes = Vec::with_capacity(2 * n + 1);
    for k in 0..n {
        nodes.push(gap(k));
        nodes.push(unit_labels[k].clone());
    }
    nodes.push(gap(n));
    let mut edges = Vec::new();
    for k in 0..n {
        edges.push((2 * k, 2 * k + 1));
        edges.push((2 * k + 1, 2 * k + 2));
        if k + 1 < n {
            edges.push((2 * k + 1, 2 * k + 3));
        }
    }
    DecodingGraph::new(nodes, &[0, 1], &edges, &[2 * n - 1, 2 * n]).expect("indices in range")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdModel {
    pub models: ModelSet,
    pub graph: DecodingGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBundle {
    pub scheme: Scheme,
    pub hyper: HyperParams,
    pub inventory: UnitInventory,
    /// Activity detector, HC only.
    pub ad: Option<AdModel>,
    /// Unit and non-speech models used by the phrase graphs.
    pub models: ModelSet,
    pub graphs: BTreeMap<String, DecodingGraph>,
}

/// Outcome of classifying one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub phrase_id: String,
    /// Viterbi score per decoded phrase; `-inf` where no path survived.
    pub scores: BTreeMap<String, f64>,
    pub units: Vec<String>,
    pub hypothesis: DecodeHypothesis,
    pub ad: Option<DecodeHypothesis>,
    /// Phrases that were decoded.
    pub candidates: BTreeSet<String>,
}

fn prepare(hyper: &HyperParams, features: &FeatureMatrix) -> FeatureMatrix {
    if hyper.log_features {
        features.log_compressed(hyper.log_floor)
    } else {
        features.clone()
    }
}

/// Trains one model per class present in `labels`, then refines them by
/// forced-alignment re-segmentation.
fn train_models(
    features: &[FeatureMatrix],
    labels: &[FrameLabelSequence],
    hyper: &HyperParams,
    key: &str,
) -> Result<ModelSet> {
    let classes: BTreeSet<StateLabel> = labels.iter().flat_map(|l| l.labels.iter().cloned()).collect();
    let classes: Vec<StateLabel> = classes.into_iter().collect();
    let mut labels = labels.to_vec();
    let mut models: Option<ModelSet> = None;
    for round in 0..hyper.align_rounds {
        if let Some(current) = &models {
            labels = features
                .par_iter()
                .zip(labels.par_iter())
                .map(|(f, l)| {
                    let seq: Vec<StateLabel> = l.runs().into_iter().map(|r| r.0).collect();
                    match forced_align(current, &seq, f, Some(hyper.ns_boost)) {
                        Ok(h) => Ok(FrameLabelSequence { labels: h.frame_labels(), scheme: l.scheme }),
                        Err(Error::ChainTooLong { .. } | Error::NoSurvivingPath) => Ok(l.clone()),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
        }
        let trained: Vec<GmmHmmModel> = classes
            .par_iter()
            .map(|class| {
                let start = match models.as_ref().and_then(|m| m.get(class)) {
                    Some(m) => m.clone(),
                    None => flat_start(
                        features,
                        &labels,
                        class,
                        hyper.n_states(class),
                        1,
                        hyper.floor_scale,
                        derive_seed(hyper.seed, &format!("{key}/{class}")),
                    )?,
                };
                em_train(&start, features, &labels, hyper.n_iterations, &hyper.mixup)
            })
            .collect::<Result<_>>()?;
        debug!("{key}: round {round} trained {} models", trained.len());
        models = Some(trained.into_iter().map(|m| (m.class_id.clone(), m)).collect());
    }
    Ok(models.expect("align_rounds >= 1"))
}

/// Trains a bundle of the given scheme on the labelled items among `train_ids`.
pub fn train_bundle(
    corpus: &Corpus,
    train_ids: &BTreeSet<String>,
    scheme: Scheme,
    hyper: &HyperParams,
) -> Result<ClassifierBundle> {
    hyper.validate()?;
    let inventory = UnitInventory::new(&corpus.inventory)?;
    let items: Vec<&CorpusItem> = corpus.select(train_ids).into_iter().filter(|i| i.labels.is_some()).collect();
    if items.is_empty() {
        return Err(Error::NoDataForClass("no labelled training segments".into()));
    }
    let features: Vec<FeatureMatrix> = items.iter().map(|i| prepare(hyper, &i.features)).collect();
    let phrase_labels: Vec<FrameLabelSequence> = items
        .iter()
        .map(|i| i.labels_for(scheme.label_scheme()).expect("filtered to labelled items"))
        .collect();

    let models = train_models(&features, &phrase_labels, hyper, scheme.label_scheme().name())?;
    for u in inventory.units() {
        if !models.contains_key(&StateLabel::unit(u.clone())) {
            return Err(Error::NoDataForClass(u));
        }
    }
    let ad = if scheme == Scheme::Hc {
        let ad_labels: Vec<FrameLabelSequence> = phrase_labels.iter().map(|l| l.convert(LabelScheme::Activity)).collect();
        let ad_models = train_models(&features, &ad_labels, hyper, "AD")?;
        let graph = ad_grammar();
        for l in &graph.nodes {
            if !ad_models.contains_key(l) {
                return Err(Error::NoDataForClass(l.to_string()));
            }
        }
        Some(AdModel { models: ad_models, graph })
    } else {
        None
    };
    let graphs = inventory.phrases.iter().map(|(id, p)| (id.clone(), phrase_graph(&p.units, scheme))).collect();
    let bundle = ClassifierBundle { scheme, hyper: hyper.clone(), inventory, ad, models, graphs };
    bundle.validate()?;
    info!("trained {scheme} bundle on {} segments", items.len());
    Ok(bundle)
}

impl ClassifierBundle {
    /// Applies the bundle's feature transform.
    pub fn prepare(&self, features: &FeatureMatrix) -> FeatureMatrix {
        prepare(&self.hyper, features)
    }

    pub fn n_ns_models(&self) -> usize {
        self.models.keys().filter(|l| l.is_ns()).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::Hc {
            let ad = self.ad.as_ref().ok_or_else(|| Error::InvalidArgument("HC bundle without AD model".into()))?;
            for l in &ad.graph.nodes {
                if !ad.models.contains_key(l) {
                    return Err(Error::NoDataForClass(l.to_string()));
                }
            }
        }
        for (id, p) in &self.inventory.phrases {
            let g = self.graphs.get(id).ok_or_else(|| Error::InvalidArgument(format!("no graph for phrase {id}")))?;
            for l in &g.nodes {
                if !self.models.contains_key(l) {
                    return Err(Error::NoDataForClass(format!("{l} (phrase {id})")));
                }
            }
            debug_assert!(!p.units.is_empty());
        }
        for m in self.models.values().chain(self.ad.iter().flat_map(|a| a.models.values())) {
            m.validate()?;
        }
        Ok(())
    }

    fn phrase_options(&self) -> DecodeOptions {
        DecodeOptions { beam: self.hyper.beam, ns_boost: self.hyper.phrase_ns_boost }
    }

    /// Activity detection over the four AD classes (HC bundles only).
    pub fn ad_decode(&self, features: &FeatureMatrix) -> Result<DecodeHypothesis> {
        let ad = match (&self.ad, self.scheme) {
            (Some(ad), Scheme::Hc) => ad,
            _ => return Err(Error::SchemeMismatch { expected: "HC".into(), found: self.scheme.to_string() }),
        };
        let opts = DecodeOptions { beam: self.hyper.beam, ns_boost: Some(self.hyper.ns_boost) };
        viterbi_decode(&ad.models, &ad.graph, &self.prepare(features), &opts)
    }

    /// Decodes one phrase graph; `None` when no path survives the beam.
    pub fn decode_phrase(&self, phrase_id: &str, features: &FeatureMatrix) -> Result<Option<DecodeHypothesis>> {
        let graph = self.graphs.get(phrase_id).ok_or_else(|| Error::InvalidArgument(format!("unknown phrase {phrase_id}")))?;
        match viterbi_decode(&self.models, graph, &self.prepare(features), &self.phrase_options()) {
            Ok(h) => Ok(Some(h)),
            Err(Error::NoSurvivingPath) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Picks the best-scoring phrase; HC first narrows the candidates by the
    /// detected NS_i count. Ties go to the lexicographically smallest id.
    pub fn classify(&self, features: &FeatureMatrix) -> Result<Classification> {
        let (ad, candidates) = if self.scheme == Scheme::Hc {
            let ad = self.ad_decode(features)?;
            let c = restrict_search_space(&self.inventory, &ad);
            (Some(ad), c)
        } else {
            (None, self.inventory.phrases.keys().cloned().collect())
        };
        let prepared = self.prepare(features);
        let mut scores = BTreeMap::new();
        let mut best: Option<(String, DecodeHypothesis)> = None;
        for id in &candidates {
            let h = match viterbi_decode(&self.models, &self.graphs[id], &prepared, &self.phrase_options()) {
                Ok(h) => h,
                Err(Error::NoSurvivingPath) => {
                    scores.insert(id.clone(), f64::NEG_INFINITY);
                    continue;
                }
                Err(e) => return Err(e),
            };
            scores.insert(id.clone(), h.log_likelihood);
            if best.as_ref().is_none_or(|(_, b)| h.log_likelihood > b.log_likelihood) {
                best = Some((id.clone(), h));
            }
        }
        let (phrase_id, hypothesis) = best.ok_or(Error::NoSurvivingPath)?;
        Ok(Classification { units: hypothesis.unit_sequence(), phrase_id, scores, hypothesis, ad, candidates })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("models"))?;
        let write_set = |set: &ModelSet, prefix: &str| -> Result<BTreeMap<String, String>> {
            let mut files = BTreeMap::new();
            for (k, (label, model)) in set.iter().enumerate() {
                let safe: String =
                    label.as_str().chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect();
                let rel = format!("models/{prefix}{k:03}-{safe}.json");
                model.save(&dir.join(&rel))?;
                files.insert(label.to_string(), rel);
            }
            Ok(files)
        };
        let descriptor = BundleDescriptor {
            format_version: 1,
            scheme: self.scheme,
            seed: self.hyper.seed,
            hyper: self.hyper.clone(),
            models: write_set(&self.models, "")?,
            ad_models: match &self.ad {
                Some(ad) => write_set(&ad.models, "ad-")?,
                None => BTreeMap::new(),
            },
        };
        let grammar = GrammarFile { phrases: self.graphs.clone(), ad: self.ad.as_ref().map(|a| a.graph.clone()) };
        std::fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&descriptor)? + "\n")?;
        std::fs::write(dir.join("grammar.json"), serde_json::to_string_pretty(&grammar)? + "\n")?;
        std::fs::write(dir.join("inventory.json"), serde_json::to_string_pretty(&self.inventory)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> { Ok(std::fs::read_to_string(dir.join(name))?) };
        let d: BundleDescriptor = serde_json::from_str(&read("bundle.json")?)?;
        let grammar: GrammarFile = serde_json::from_str(&read("grammar.json")?)?;
        let inventory: UnitInventory = serde_json::from_str(&read("inventory.json")?)?;
        let load_set = |files: &BTreeMap<String, String>| -> Result<ModelSet> {
            files
                .values()
                .map(|rel| GmmHmmModel::load(&dir.join(rel)).map(|m| (m.class_id.clone(), m)))
                .collect()
        };
        let ad = match grammar.ad {
            Some(graph) => Some(AdModel { models: load_set(&d.ad_models)?, graph }),
            None => None,
        };
        let bundle =
            ClassifierBundle { scheme: d.scheme, hyper: d.hyper, inventory, ad, models: load_set(&d.models)?, graphs: grammar.phrases };
        bundle.validate()?;
        Ok(bundle)
    }
}

#[derive(Serialize, Deserialize)]
struct BundleDescriptor {
    format_version: u32,
    scheme: Scheme,
    seed: u64,
    hyper: HyperParams,
    /// Class label to model file.
    models: BTreeMap<String, String>,
    ad_models: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    phrases: BTreeMap<String, DecodingGraph>,
    ad: Option<DecodingGraph>,
}

/// Free-function form of [`ClassifierBundle::ad_decode`].
pub fn ad_decode(bundle: &ClassifierBundle, features: &FeatureMatrix) -> Result<DecodeHypothesis> {
    bundle.ad_decode(features)
}

/// Free-function form of [`ClassifierBundle::classify`].
pub fn classify_segment(bundle: &ClassifierBundle, features: &FeatureMatrix) -> Result<Classification> {
    bundle.classify(features)
}

/// Phrases whose gap count equals the number of NS_i runs in `ad`; when none
/// match, the phrases with the nearest gap count.
pub fn restrict_search_space(inventory: &UnitInventory, ad: &DecodeHypothesis) -> BTreeSet<String> {
    let observed = ad.count_runs(&StateLabel::NsI);
    let nearest = inventory.phrases.values().map(|p| p.expected_ns_i.abs_diff(observed)).min().unwrap_or(0);
    inventory
        .phrases
        .iter()
        .filter(|(_, p)| p.expected_ns_i.abs_diff(observed) == nearest)
        .map(|(id, _)| id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::satisfies_ns_grammar;

    fn inventory(counts: &[(&str, usize)]) -> UnitInventory {
        let m = counts
            .iter()
            .map(|(id, n)| (id.to_string(), (0..*n).map(|k| format!("{id}u{k}")).collect()))
            .collect();
        UnitInventory::new(&m).unwrap()
    }

    fn ad_hyp(labels: &[StateLabel]) -> DecodeHypothesis {
        let runs = crate::label::label_runs(labels);
        DecodeHypothesis {
            state_path: labels.iter().map(|l| (l.clone(), 0)).collect(),
            node_path: vec![0; labels.len()],
            log_likelihood: 0.0,
            label_runs: runs,
        }
    }

    #[test]
    fn restriction_counts_gaps() {
        use StateLabel::*;
        let inv = inventory(&[("P1", 2), ("P2", 3), ("P3", 2)]);
        let h = ad_hyp(&[NsB, S, NsI, S, NsE]);
        assert_eq!(restrict_search_space(&inv, &h), BTreeSet::from(["P1".to_string(), "P3".to_string()]));
        let h = ad_hyp(&[S, NsI, S, NsI, S, NsI, S]);
        assert_eq!(restrict_search_space(&inv, &h), BTreeSet::from(["P2".to_string()]));
        let same = inventory(&[("A", 2), ("B", 2)]);
        for h in [ad_hyp(&[S]), ad_hyp(&[S, NsI, S, NsI, S])] {
            assert_eq!(restrict_search_space(&same, &h).len(), 2);
        }
    }

    #[test]
    fn phrase_graph_shapes() {
        let units: Vec<String> = vec!["a".into(), "b".into()];
        let g = phrase_graph(&units, Scheme::Bl);
        assert_eq!(g.nodes.len(), 2);
        let g = phrase_graph(&units, Scheme::Dns3);
        assert_eq!(g.nodes, vec![StateLabel::NsB, StateLabel::unit("a"), StateLabel::NsI, StateLabel::unit("b"), StateLabel::NsE]);
        let g = phrase_graph(&units, Scheme::Dns);
        assert!(g.nodes.iter().filter(|l| l.is_ns()).all(|l| *l == StateLabel::Ns));
    }

    /// Enumerates node sequences accepted by a graph, up to `max_len` nodes.
    fn accepted(g: &DecodingGraph, max_len: usize) -> Vec<Vec<StateLabel>> {
        let mut out = Vec::new();
        let mut stack: Vec<Vec<usize>> = g.start.iter().map(|&(s, _)| vec![s]).collect();
        while let Some(p) = stack.pop() {
            let u = *p.last().unwrap();
            if g.end.iter().any(|&(e, _)| e == u) {
                out.push(p.iter().map(|&i| g.nodes[i].clone()).collect());
            }
            if p.len() < max_len {
                for &(v, _) in &g.arcs[u] {
                    let mut q = p.clone();
                    q.push(v);
                    stack.push(q);
                }
            }
        }
        out
    }

    #[test]
    fn ad_grammar_language() {
        use StateLabel::*;
        let g = ad_grammar();
        let lang = accepted(&g, 9);
        for seq in &lang {
            assert!(satisfies_ns_grammar(seq), "{seq:?}");
            assert!(seq.first() != Some(&NsI) && seq.first() != Some(&NsE));
        }
        // every DNS3 run sequence maps into the language once adjacent speech merges
        for n in 1..=3 {
            let units: Vec<String> = (0..n).map(|k| k.to_string()).collect();
            for seq in accepted(&phrase_graph(&units, Scheme::Dns3), 2 * n + 1) {
                let mut act: Vec<StateLabel> = seq.iter().map(StateLabel::to_activity).collect();
                act.dedup();
                assert!(lang.contains(&act), "{act:?}");
            }
        }
    }

    #[test]
    fn scheme_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
    }
}
