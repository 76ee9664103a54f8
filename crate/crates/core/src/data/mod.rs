//! Recording ingestion: WAV files, state annotations, dataset manifests and a
//! synthetic PCG generator for desk-scale experiments.

mod annotations;
mod manifest;
mod synth;
mod wav;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use annotations::{load_annotations, parse_annotations, write_annotations, HeartState, StateSequence};
pub use manifest::{
    build_manifest, load_label_index, DatasetManifest, LabelRow, RecordingEntry, Split,
    ANNOTATION_SUFFIX, LABEL_INDEX_FILE, MANIFEST_FILE, SPLIT_LIST_FILE,
};
pub use synth::{synth_pcg, SynthConfig, SynthRecording};
pub use wav::{load_wav, read_wav, save_wav, write_wav};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    WavFormat(String),
    #[error("unsupported WAV: {0}")]
    WavUnsupported(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("invalid state sequence: {0}")]
    InvalidStates(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("recordings without a label: {}", .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("missing file for recording {id}: {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }
}

/// Binary recording class. ABNORMAL is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Abnormal];

    /// Class index used by the networks' output layer.
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    /// Accepts `normal`/`abnormal` in any case, and the PhysioNet `-1`/`1` codes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "-1" | "n" => Ok(Label::Normal),
            "abnormal" | "1" | "a" => Ok(Label::Abnormal),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

/// A sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::InvalidSignal("no samples".into()));
        }
        if sample_rate_hz == 0 {
            return Err(DataError::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(DataError::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        Ok(Signal { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}
