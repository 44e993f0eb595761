//! GMM-HMM class models: flat-start initialisation, Baum-Welch training with
//! mixture splitting, forward scoring and beam-pruned Viterbi decoding over a
//! graph of class-model instances.

mod decode;
mod gmm;
mod model;
mod train;

pub use decode::{
    forced_align, rescore_path, viterbi_decode, DecodeHypothesis, DecodeOptions, DecodingGraph, ModelSet,
};
pub use gmm::{Gmm, WEIGHT_FLOOR};
pub use model::{GmmHmmModel, HmmTopology, TopologyKind, TrainingMeta};
pub use train::{class_runs, em_train, flat_start, variance_floor, MixupSchedule, TRANSITION_FLOOR};
