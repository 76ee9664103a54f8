use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{weighted_cross_entropy, LayerSpec, Mode, Network, NnError, Tensor};
use crate::data::Label;

const STEP: f64 = 1e-5;

fn loss(net: &mut Network<f64>, x: &Tensor<f64>, labels: &[Label], w: [f64; 2]) -> Result<(f64, u64), NnError> {
    let p = net.forward(x, Mode::Train)?;
    Ok((weighted_cross_entropy(&p, labels, w)?.0, net.kink_signature()))
}

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative error `|num - ana| / max(|num|, |ana|, 1e-6)`.
    pub worst: f64,
    /// Probes compared.
    pub checked: usize,
    /// Probes dropped because the perturbation crossed a ReLU or pooling kink.
    pub skipped: usize,
}

/// Compares backprop against central finite differences (step 1e-5) on
/// `probes` randomly chosen parameters of a freshly seeded `f64` network,
/// using a batch of three random inputs and a class-weighted loss.
pub fn check_gradients(input: &[usize], specs: &[LayerSpec], seed: u64, probes: usize) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net0 = Network::<f64>::new(input, specs, seed)?;
    let batch = 3;
    let mut shape = vec![batch];
    shape.extend(input);
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let labels = [Label::Normal, Label::Abnormal, Label::Abnormal];
    let w = [1.0, 2.5];

    let mut base = net0.clone();
    let p = base.forward(&x, Mode::Train)?;
    let sig = base.kink_signature();
    let (_, g) = weighted_cross_entropy(&p, &labels, w)?;
    base.backward(&g)?;
    let grads: Vec<Vec<f64>> = base.grads().iter().map(|t| t.data().to_vec()).collect();

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let mut attempts = 0;
    while checked < probes && attempts < probes * 4 {
        attempts += 1;
        let t = rng.random_range(0..grads.len());
        let e = rng.random_range(0..grads[t].len());
        let mut plus = net0.clone();
        plus.params_mut()[t].data_mut()[e] += STEP;
        let (lp, sp) = loss(&mut plus, &x, &labels, w)?;
        let mut minus = net0.clone();
        minus.params_mut()[t].data_mut()[e] -= STEP;
        let (lm, sm) = loss(&mut minus, &x, &labels, w)?;
        if sp != sig || sm != sig {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * STEP);
        let analytic = grads[t][e];
        let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(GradCheck { worst, checked, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head() -> LayerSpec {
        LayerSpec::Softmax { units: 2 }
    }

    #[test]
    fn every_layer_kind_matches_finite_differences() {
        let stacks: Vec<(Vec<usize>, Vec<LayerSpec>)> = vec![
            (vec![6], vec![LayerSpec::Dense { units: 4 }, head()]),
            (vec![6], vec![LayerSpec::Dense { units: 5 }, LayerSpec::Relu, head()]),
            (vec![6], vec![LayerSpec::Dense { units: 5 }, LayerSpec::Dropout { ratio: 0.4 }, head()]),
            (vec![7, 2], vec![LayerSpec::Conv1d { kernel: 4, filters: 3 }, LayerSpec::Flatten, head()]),
            (vec![7, 2], vec![LayerSpec::Conv1d { kernel: 3, filters: 3 }, LayerSpec::BatchNorm, LayerSpec::Flatten, head()]),
            (vec![8, 2], vec![LayerSpec::Conv1d { kernel: 2, filters: 2 }, LayerSpec::MaxPool1d { size: 2, stride: 2 }, LayerSpec::Flatten, head()]),
            (vec![5, 4, 1], vec![LayerSpec::Conv2d { kernel: (4, 3), filters: 2 }, LayerSpec::Flatten, head()]),
            (vec![5, 4, 2], vec![LayerSpec::Conv2d { kernel: (2, 2), filters: 2 }, LayerSpec::BatchNorm, LayerSpec::MaxPool2d { size: 2, stride: 2 }, LayerSpec::Flatten, head()]),
        ];
        for (i, (input, specs)) in stacks.iter().enumerate() {
            let GradCheck { worst, checked, .. } = check_gradients(input, specs, 100 + i as u64, 40).unwrap();
            assert!(checked >= 30, "stack {i}: only {checked} smooth probes");
            assert!(worst < 1e-4, "stack {i}: relative error {worst}");
        }
    }

    #[test]
    fn dropout_mask_is_reused_in_backward() {
        let specs = [LayerSpec::Dense { units: 6 }, LayerSpec::Relu, LayerSpec::Dropout { ratio: 0.5 }, head()];
        let GradCheck { worst, checked, .. } = check_gradients(&[5], &specs, 9, 60).unwrap();
        assert!(checked >= 40 && worst < 1e-4, "{worst} over {checked}");
    }

    #[test]
    fn gradients_scale_with_loss_weight() {
        let specs = [LayerSpec::Conv1d { kernel: 3, filters: 2 }, LayerSpec::BatchNorm, LayerSpec::Relu, LayerSpec::Flatten, head()];
        let x = Tensor::new(vec![2, 6, 1], (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let labels = [Label::Normal, Label::Abnormal];
        let grads = |w: [f64; 2]| {
            let mut net = Network::<f64>::new(&[6, 1], &specs, 4).unwrap();
            let p = net.forward(&x, Mode::Train).unwrap();
            net.backward(&weighted_cross_entropy(&p, &labels, w).unwrap().1).unwrap();
            net.grads().iter().flat_map(|t| t.data().to_vec()).collect::<Vec<f64>>()
        };
        let one = grads([1.0, 1.0]);
        let two = grads([2.0, 2.0]);
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn saturated_correct_prediction_has_zero_gradient() {
        let specs = [LayerSpec::Dense { units: 3 }, LayerSpec::Relu, head()];
        let mut net = Network::<f64>::new(&[3], &specs, 1).unwrap();
        // a huge normal-class bias saturates the softmax to exactly [1, 0]
        net.params_mut()[3].data_mut().copy_from_slice(&[800.0, 0.0]);
        let x = Tensor::new(vec![2, 3], vec![0.5, -0.2, 0.1, 0.3, 0.3, -0.9]).unwrap();
        let p = net.forward(&x, Mode::Train).unwrap();
        let (loss, g) = weighted_cross_entropy(&p, &[Label::Normal, Label::Normal], [1.0, 3.0]).unwrap();
        assert_eq!(loss, 0.0);
        net.backward(&g).unwrap();
        assert!(net.grads().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }
}
