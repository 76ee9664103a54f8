//! End-to-end commands behind the CLI: synthesize, segment, extract
//! features, train, evaluate and predict. Every command is a pure function
//! of its [`RunConfig`]; outputs are written atomically under `out`.

mod commands;
mod config;
mod stages;

pub use commands::{
    cmd_evaluate, cmd_features, cmd_predict, cmd_segment, cmd_synth, cmd_train, EvaluateOutcome, PredictionRow, TrainSummary,
};
pub use config::{parse_features, ClassWeight, FeatureChoice, RunConfig, KEYS};
pub use crate::util::par_map;
pub use stages::{prepare_recording, Example, InputSpec};

use std::fmt;

use crate::data::DataError;
use crate::dsp::DspError;
use crate::ensemble::EnsembleError;
use crate::features::FeatureError;
use crate::hmm::HmmError;
use crate::nn::NnError;
use crate::segment::SegmentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

/// A failure tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, kind: ErrorKind, message: impl Into<String>) -> Self {
        PipelineError { stage, kind, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ErrorKind::Config => "configuration error",
            ErrorKind::Data => "data error",
            ErrorKind::Numeric => "numeric failure",
        };
        write!(f, "{} [{}]: {}", what, self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

/// Maps a module error onto the CLI error classes.
pub trait Classify: fmt::Display {
    fn kind(&self) -> ErrorKind;
}

impl Classify for DataError {
    fn kind(&self) -> ErrorKind {
        match self {
            DataError::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for DspError {
    fn kind(&self) -> ErrorKind {
        match self {
            DspError::Signal(e) => e.kind(),
            DspError::Design(_) => ErrorKind::Config,
            DspError::Unstable(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for SegmentError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for FeatureError {
    fn kind(&self) -> ErrorKind {
        match self {
            FeatureError::Config(_) => ErrorKind::Config,
            FeatureError::Unstable { .. } | FeatureError::NonFinite { .. } | FeatureError::NonPositiveEnergy(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for NnError {
    fn kind(&self) -> ErrorKind {
        match self {
            NnError::Config(_) | NnError::Shape { .. } => ErrorKind::Config,
            NnError::NonFinite { .. } | NnError::NonFiniteLoss { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for HmmError {
    fn kind(&self) -> ErrorKind {
        match self {
            HmmError::Config(_) => ErrorKind::Config,
            HmmError::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for EnsembleError {
    fn kind(&self) -> ErrorKind {
        match self {
            EnsembleError::Config(_) | EnsembleError::Input(_) | EnsembleError::MissingInput { .. } => ErrorKind::Config,
            EnsembleError::Nn(e) => e.kind(),
            EnsembleError::Hmm(e) => e.kind(),
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for std::io::Error {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, PipelineError>;
}

impl<T, E: Classify> AtStage<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e.kind(), e.to_string()))
    }
}
