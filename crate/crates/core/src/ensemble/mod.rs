//! The classifiers assembled: 1D and 2D CNN builders, score
//! fusion for the ensemble, evaluation metrics and model persistence.

mod builders;
mod container;
mod metrics;
mod model;

pub use builders::{
    build_1dcnn, build_1dcnn_with, build_2dcnn, build_2dcnn_with, cnn1d_input, cnn1d_specs, cnn2d_specs, layer_table, CnnShape,
    CNN2D_INPUT, DENSE_DROPOUT, MAP_FRAMES,
};
pub use container::{Block, Container, FORMAT_VERSION, MAGIC};
pub use metrics::{evaluate, Confusion, EvalReport, CSV_HEADER};
pub use model::{Classifier, ModelMeta, ModelSet};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::Label;
use crate::hmm::HmmError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("{0}")]
    Config(String),
    #[error("{model} needs {what}")]
    MissingInput { model: ModelKind, what: &'static str },
    #[error("input mismatch: {0}")]
    Input(String),
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("model format version {found} is not supported (this build reads version {supported})")]
    Version { found: u16, supported: u16 },
    #[error("model file is corrupt: {0}")]
    Integrity(String),
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Cnn1d,
    Cnn2d,
    Ecnn,
    Hmm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Cnn1d, ModelKind::Cnn2d, ModelKind::Ecnn, ModelKind::Hmm];

    /// Kind byte in the container header.
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Cnn1d => 1,
            ModelKind::Cnn2d => 2,
            ModelKind::Ecnn => 3,
            ModelKind::Hmm => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.code() == c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Cnn2d => "cnn2d",
            ModelKind::Ecnn => "ecnn",
            ModelKind::Hmm => "hmm",
        }
    }

    /// Report name, e.g. `1D-CNN`.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Cnn1d => "1D-CNN",
            ModelKind::Cnn2d => "2D-CNN",
            ModelKind::Ecnn => "ECNN",
            ModelKind::Hmm => "HMM",
        }
    }

    pub fn needs_raw(self) -> bool {
        matches!(self, ModelKind::Cnn1d | ModelKind::Ecnn)
    }

    pub fn needs_features(self) -> bool {
        !matches!(self, ModelKind::Cnn1d)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model '{s}' (cnn1d, cnn2d, ecnn, hmm)"))
    }
}

/// Class scores of one beat. CNN scores are softmax outputs; ensemble scores
/// are the unnormalized sum of two such vectors; HMM scores are the logistic
/// of the log-likelihood difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub p_normal: f64,
    pub p_abnormal: f64,
    pub source: ModelKind,
}

const SUM_TOL: f64 = 1e-6;

impl ClassScores {
    pub fn new(p_normal: f64, p_abnormal: f64, source: ModelKind) -> Result<Self, EnsembleError> {
        let expect = if source == ModelKind::Ecnn { 2.0 } else { 1.0 };
        let ok = |p: f64| p.is_finite() && (0.0..=expect + SUM_TOL).contains(&p);
        if !ok(p_normal) || !ok(p_abnormal) || (p_normal + p_abnormal - expect).abs() > SUM_TOL * expect {
            return Err(EnsembleError::Input(format!(
                "{source} scores [{p_normal}, {p_abnormal}] do not sum to {expect}"
            )));
        }
        Ok(ClassScores { p_normal, p_abnormal, source })
    }

    pub(crate) fn from_hmm(loglik_normal: f64, loglik_abnormal: f64) -> Self {
        let d = loglik_abnormal - loglik_normal;
        let p_abnormal = if d >= 0.0 { 1.0 / (1.0 + (-d).exp()) } else { d.exp() / (1.0 + d.exp()) };
        ClassScores { p_normal: 1.0 - p_abnormal, p_abnormal, source: ModelKind::Hmm }
    }

    /// Argmax; ties go to ABNORMAL.
    pub fn label(&self) -> Label {
        if self.p_abnormal >= self.p_normal {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    /// Scores scaled to sum to one (ensemble sums are divided by two).
    pub fn renormalized(&self) -> ClassScores {
        if self.source == ModelKind::Ecnn {
            ClassScores { p_normal: self.p_normal / 2.0, p_abnormal: self.p_abnormal / 2.0, source: self.source }
        } else {
            *self
        }
    }
}

/// Sums two CNN probability vectors.
pub fn fuse_scores(p1: ClassScores, p2: ClassScores) -> Result<ClassScores, EnsembleError> {
    for p in [p1, p2] {
        if !matches!(p.source, ModelKind::Cnn1d | ModelKind::Cnn2d) {
            return Err(EnsembleError::Input(format!("cannot fuse {} scores; only CNN outputs", p.source)));
        }
    }
    Ok(ClassScores {
        p_normal: p1.p_normal + p2.p_normal,
        p_abnormal: p1.p_abnormal + p2.p_abnormal,
        source: ModelKind::Ecnn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cnn(p_normal: f64, source: ModelKind) -> ClassScores {
        ClassScores::new(p_normal, 1.0 - p_normal, source).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let f = fuse_scores(cnn(0.9, ModelKind::Cnn1d), cnn(0.2, ModelKind::Cnn2d)).unwrap();
        assert!((f.p_normal - 1.1).abs() < 1e-12 && (f.p_abnormal - 0.9).abs() < 1e-12);
        assert_eq!(f.label(), Label::Normal);
        let r = f.renormalized();
        assert!((r.p_normal + r.p_abnormal - 1.0).abs() < 1e-12);

        let tie = fuse_scores(cnn(0.6, ModelKind::Cnn1d), cnn(0.4, ModelKind::Cnn2d)).unwrap();
        assert_eq!(tie.label(), Label::Abnormal);
        assert!(ClassScores::new(tie.p_normal, tie.p_abnormal, ModelKind::Ecnn).is_ok());
    }

    #[test]
    fn fusion_rejects_non_cnn_inputs() {
        let h = ClassScores::from_hmm(-3.0, -4.0);
        assert!(fuse_scores(h, cnn(0.5, ModelKind::Cnn2d)).is_err());
        let e = fuse_scores(cnn(0.5, ModelKind::Cnn1d), cnn(0.5, ModelKind::Cnn2d)).unwrap();
        assert!(fuse_scores(e, cnn(0.5, ModelKind::Cnn2d)).is_err());
    }

    #[test]
    fn score_validation() {
        assert!(ClassScores::new(0.7, 0.2, ModelKind::Cnn1d).is_err());
        assert!(ClassScores::new(1.2, 0.8, ModelKind::Ecnn).is_ok());
        assert!(ClassScores::new(f64::NAN, 1.0, ModelKind::Cnn2d).is_err());
    }

    #[test]
    fn hmm_scores_follow_loglik() {
        let s = ClassScores::from_hmm(-1000.0, -1002.0);
        assert_eq!(s.label(), Label::Normal);
        assert!((s.p_normal + s.p_abnormal - 1.0).abs() < 1e-15);
        assert_eq!(ClassScores::from_hmm(-5.0, -5.0).label(), Label::Abnormal);
        let far = ClassScores::from_hmm(0.0, 1e6);
        assert_eq!((far.p_normal, far.p_abnormal), (0.0, 1.0));
    }

    #[test]
    fn kind_codes_and_names() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::from_code(k.code()), Some(k));
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    proptest! {
        #[test]
        fn fusion_dominance(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (p1, p2) = (cnn(a, ModelKind::Cnn1d), cnn(b, ModelKind::Cnn2d));
            let f = fuse_scores(p1, p2).unwrap();
            if p1.label() == p2.label() {
                prop_assert_eq!(f.label(), p1.label());
            }
            let same = fuse_scores(p1, cnn(a, ModelKind::Cnn2d)).unwrap();
            prop_assert_eq!(same.label(), p1.label());
            prop_assert!((f.p_normal + f.p_abnormal - 2.0).abs() < 1e-12);
        }
    }
}
