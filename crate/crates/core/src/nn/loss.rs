use super::{NnError, Scalar, Tensor};
use crate::data::Label;

/// Probability clamp inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over the batch of `w(label) · −ln p_label`, with the gradient with
/// respect to the softmax logits, `w(label) · (p − onehot) / B`.
/// `class_weights` is indexed by `Label::index`.
pub fn weighted_cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[Label],
    class_weights: [f64; 2],
) -> Result<(f64, Tensor<T>), NnError> {
    let k = *probs.shape().last().unwrap();
    let b = probs.shape()[0];
    if probs.shape().len() != 2 || k != 2 || labels.len() != b {
        return Err(NnError::Config(format!(
            "probabilities {:?} do not match {} labels",
            probs.shape(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (row, label) in probs.data().chunks(k).zip(labels) {
        let w = class_weights[label.index()];
        loss += w * -(row[label.index()].as_f64().max(PROB_FLOOR)).ln();
        for (j, &p) in row.iter().enumerate() {
            let target = if j == label.index() { 1.0 } else { 0.0 };
            grad.push(T::of(w * (p.as_f64() - target) / b as f64));
        }
    }
    Ok((loss / b as f64, Tensor::new(probs.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_costs_nothing() {
        let p = Tensor::new(vec![2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let (loss, g) = weighted_cross_entropy(&p, &[Label::Normal, Label::Abnormal], [1.0, 4.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_by_hand() {
        let p = Tensor::new(vec![1, 2], vec![0.5f64, 0.5]).unwrap();
        let (loss, g) = weighted_cross_entropy(&p, &[Label::Abnormal], [1.0, 4.0]).unwrap();
        assert!((loss - 4.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.data(), &[2.0, -2.0]);
    }

    #[test]
    fn unit_weights_are_plain_cross_entropy() {
        let p = Tensor::new(vec![3, 2], vec![0.2f64, 0.8, 0.6, 0.4, 0.9, 0.1]).unwrap();
        let labels = [Label::Abnormal, Label::Normal, Label::Abnormal];
        let (loss, _) = weighted_cross_entropy(&p, &labels, [1.0, 1.0]).unwrap();
        let plain = -(0.8f64.ln() + 0.6f64.ln() + 0.1f64.ln()) / 3.0;
        assert!((loss - plain).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Tensor::new(vec![1, 2], vec![1.0f64, 0.0]).unwrap();
        let (loss, _) = weighted_cross_entropy(&p, &[Label::Abnormal], [1.0, 1.0]).unwrap();
        assert!((loss - -(PROB_FLOOR.ln())).abs() < 1e-9);
    }
}
