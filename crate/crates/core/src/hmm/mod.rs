//! Left-to-right GMM-HMM baseline over MFCC frames: one model per class,
//! maximum-likelihood decision.

mod gmm;
mod model;
mod train;

pub use gmm::{DiagGmm, VAR_FLOOR};
pub use model::HmmModel;
pub use train::{baum_welch, init_hmm, kmeans_gmm, total_loglik, train_hmm, BaumWelchReport, HmmConfig};

use crate::data::Label;

#[derive(Debug, thiserror::Error)]
pub enum HmmError {
    #[error("hmm config: {0}")]
    Config(String),
    #[error("observation length {got} is not a positive multiple of dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{frames} frames cannot cover {states} states")]
    TooShort { frames: usize, states: usize },
    #[error("hmm data: {0}")]
    NoData(String),
    #[error("hmm numeric failure: {0}")]
    Numeric(String),
}

/// Per-model statistic used for the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HmmScore {
    #[default]
    Forward,
    Viterbi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmDecision {
    pub label: Label,
    pub loglik_normal: f64,
    pub loglik_abnormal: f64,
}

/// Picks the class whose model scores higher; ties go to ABNORMAL.
pub fn classify_hmm(normal: &HmmModel, abnormal: &HmmModel, obs: &[f64], score: HmmScore) -> Result<HmmDecision, HmmError> {
    if normal.dim() != abnormal.dim() {
        return Err(HmmError::Dimension { expected: normal.dim(), got: abnormal.dim() });
    }
    let eval = |m: &HmmModel| match score {
        HmmScore::Forward => m.forward_loglik(obs),
        HmmScore::Viterbi => m.viterbi(obs).map(|(_, s)| s),
    };
    let (ln, la) = (eval(normal)?, eval(abnormal)?);
    Ok(HmmDecision { label: decide(ln, la), loglik_normal: ln, loglik_abnormal: la })
}

fn decide(ln: f64, la: f64) -> Label {
    if la >= ln {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(shift: f64, label: Label) -> HmmModel {
        let em = (0..2)
            .map(|i| DiagGmm::new(vec![1.0], vec![vec![i as f64 + shift]], vec![vec![0.5]]).unwrap())
            .collect();
        HmmModel::new(vec![vec![0.9, 0.1], vec![0.0, 1.0]], vec![1.0, 0.0], em, label).unwrap()
    }

    #[test]
    fn samples_from_normal_model_classify_normal() {
        let (n, a) = (model(0.0, Label::Normal), model(1.5, Label::Abnormal));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..200)
            .filter(|_| {
                let (obs, _) = n.sample(20, &mut rng);
                classify_hmm(&n, &a, &obs, HmmScore::Forward).unwrap().label == Label::Normal
            })
            .count();
        assert!(hits >= 190, "{hits}/200");
    }

    #[test]
    fn identical_models_tie_to_abnormal() {
        let m = model(0.0, Label::Normal);
        let d = classify_hmm(&m, &m, &[0.1, 0.4, 1.0], HmmScore::Forward).unwrap();
        assert_eq!(d.label, Label::Abnormal);
        assert_eq!(classify_hmm(&m, &m, &[0.1], HmmScore::Viterbi).unwrap().label, Label::Abnormal);
    }

    #[test]
    fn decision_ignores_common_offset() {
        for (ln, la) in [(-10.0, -12.0), (-5.0, -4.0), (3.0, 3.0)] {
            assert_eq!(decide(ln, la), decide(ln + 1234.5, la + 1234.5));
        }
    }
}
