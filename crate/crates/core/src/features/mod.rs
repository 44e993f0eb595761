//! Framing, short-term energy, audio VAD and frame-level label construction.

mod labels;
mod ste;
mod vad;

pub use labels::{
    build_frame_labels, labels_from_timeline, project_labels_to_imagined, FrameLabelSequence, LabelScheme,
};
pub use ste::{frame_signal, hamming, short_term_energy, FeatureMatrix, FrameSpec, WindowKind};
pub use vad::{vad_energy, VadIntervals, VadParams};
