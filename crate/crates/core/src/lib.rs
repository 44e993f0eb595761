//! Non-speech state detection and hierarchical unit decoding for
//! speech-related EEG.
//!
//! The crate covers the whole offline chain:
//!
//! ```text
//! synth::generate_dataset      synthetic recordings + audio + truth
//!   │
//!   ├─ preprocess              bandpass, notch, baseline, interpolation, ICA
//!   ├─ features                short-term energy, audio VAD, frame labels
//!   ├─ hmm                     GMM-HMM flat start, Baum-Welch, Viterbi beam
//!   ├─ hierarchy               activity detection + NS_i-count pruning
//!   ├─ eval                    edit alignment, 1 - UER reports
//!   └─ warp                    DTW / CED class profiles, topographic data
//! ```

pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod hierarchy;
pub mod hmm;
pub mod label;
pub mod preprocess;
pub mod synth;
pub mod util;
pub mod warp;

pub use error::{Error, Result};
pub use label::StateLabel;
