use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("recording file not found: {}", .0.display())]
    MissingRecordingFile(PathBuf),
    #[error("channel count mismatch for {id}: expected {expected}, found {found}")]
    ChannelCountMismatch { id: String, expected: usize, found: usize },
    #[error("malformed recording container: {0}")]
    MalformedRecording(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unpaired marker {kind} for phrase {phrase_id} at sample {sample_index}")]
    UnpairedMarker { kind: String, phrase_id: String, sample_index: usize },

    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("unstable filter design: pole magnitude {0}")]
    UnstableDesign(f64),
    #[error("signal too short: length {len}, need more than {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("recording too short for spectral estimate: {len} samples, need {min}")]
    TooShortForSpectrum { len: usize, min: usize },
    #[error("too many bad channels: {bad} of {total}")]
    TooManyBadChannels { bad: usize, total: usize },
    #[error("ICA did not converge after {0} iterations")]
    ConvergenceFailure(usize),
    #[error("rank deficient data: {0}")]
    RankDeficient(String),

    #[error("series too short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("{units} units but {intervals} activity intervals")]
    UnitIntervalMismatch { units: usize, intervals: usize },
    #[error("cannot fit {runs} label runs into {frames} frames")]
    TooFewFrames { runs: usize, frames: usize },

    #[error("no training data for class {0}")]
    NoDataForClass(String),
    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),
    #[error("dimension mismatch: model has {model} dims, features have {features}")]
    DimMismatch { model: usize, features: usize },
    #[error("decoding graph is empty")]
    EmptyGraph,
    #[error("no path survived decoding")]
    NoSurvivingPath,
    #[error("model chain needs {needed} frames, only {frames} available")]
    ChainTooLong { needed: usize, frames: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation needs a {expected} bundle, got {found}")]
    SchemeMismatch { expected: String, found: String },
    #[error("class {0} has no decoded frames")]
    EmptyClass(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("unknown segment {0}")]
    UnknownSegment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical procedures rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnstableDesign(_)
                | Error::ConvergenceFailure(_)
                | Error::RankDeficient(_)
                | Error::NumericalUnderflow(_)
                | Error::NoSurvivingPath
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
