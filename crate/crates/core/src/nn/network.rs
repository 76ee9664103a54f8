use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, LayerSpec};
use super::{Mode, NnError, Scalar, Tensor};
use crate::sub_seed;

/// Sequential network ending in a `Softmax` head.
#[derive(Clone)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    dropout_rng: ChaCha8Rng,
    caches: Option<Vec<Cache<T>>>,
}

impl<T> Clone for Cache<T>
where
    T: Clone,
{
    fn clone(&self) -> Self {
        match self {
            Cache::Empty => Cache::Empty,
            Cache::Input(t) => Cache::Input(t.clone()),
            Cache::Mask(m) => Cache::Mask(m.clone()),
            Cache::Argmax(i) => Cache::Argmax(i.clone()),
            Cache::Norm { xhat, inv_std, batch } => Cache::Norm { xhat: xhat.clone(), inv_std: inv_std.clone(), batch: *batch },
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("input_shape", &self.input_shape)
            .field("layers", &self.specs())
            .finish()
    }
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes the stack. Weights are Glorot-uniform from
    /// `sub_seed(seed, "init")`; dropout masks come from `sub_seed(seed, "dropout")`.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        match specs.last() {
            Some(LayerSpec::Softmax { .. }) => {}
            _ => return Err(NnError::Config("the last layer must be Softmax".into())),
        }
        if specs[..specs.len() - 1].iter().any(|s| matches!(s, LayerSpec::Softmax { .. })) {
            return Err(NnError::Config("Softmax is only allowed as the last layer".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::Config(format!("bad input shape {input_shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "init"));
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, &spec) in specs.iter().enumerate() {
            let layer = Layer::build(spec, &shape, i, &mut rng)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            dropout_rng: ChaCha8Rng::seed_from_u64(sub_seed(seed, "dropout")),
            caches: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Per-sample output shape of every layer.
    pub fn output_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|l| l.out_shape.clone()).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().out_shape[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(|p| p.len()).sum()
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Forward pass that caches activations for `backward`. Training mode
    /// also updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        self.caches = None;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for i in 0..self.layers.len() {
            let f = self.layers[i].forward(&cur, mode, &mut self.dropout_rng, i)?;
            if !f.out.is_finite() {
                return Err(NnError::NonFinite { layer: i });
            }
            if let Some((m, v)) = &f.bn_stats {
                self.layers[i].apply_bn_stats(m, v);
            }
            caches.push(f.cache);
            cur = f.out;
        }
        self.caches = Some(caches);
        Ok(cur)
    }

    /// Inference without caching; class probabilities `[B, classes]`.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut rng = self.dropout_rng.clone();
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur, Mode::Infer, &mut rng, i)?.out;
            if !cur.is_finite() {
                return Err(NnError::NonFinite { layer: i });
            }
        }
        Ok(cur)
    }

    /// Back-propagates the gradient of the loss with respect to the head's
    /// logits through the last cached forward pass.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<(), NnError> {
        let caches = self.caches.take().ok_or(NnError::NoForward)?;
        let mut g = dlogits.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&caches).rev() {
            g = layer.backward(cache, &g);
        }
        Ok(())
    }

    /// Parameter tensors paired with their latest gradients, in a fixed order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut().zip(l.grads.iter()))
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| &l.params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| &mut l.params).collect()
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| &l.grads).collect()
    }

    /// Hash of every ReLU mask and pooling choice in the cached forward
    /// pass. Finite-difference checks compare it across perturbations to
    /// detect crossing a non-differentiable point.
    pub fn kink_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (layer, cache) in self.layers.iter().zip(self.caches.iter().flatten()) {
            match (layer.spec, cache) {
                (LayerSpec::Relu, Cache::Mask(m)) => m.iter().for_each(|v| (*v > T::zero()).hash(&mut h)),
                (_, Cache::Argmax(idx)) => idx.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Named parameter and running-statistic tensors, e.g. `L0.weight`,
    /// `L1.running_var`, `L1.updates`.
    pub fn state_dict(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, p) in l.param_names().iter().zip(&l.params) {
                out.push((format!("L{i}.{name}"), p.clone()));
            }
            if !l.running.is_empty() {
                out.push((format!("L{i}.running_mean"), l.running[0].clone()));
                out.push((format!("L{i}.running_var"), l.running[1].clone()));
                let updates = l.bn_updates.min(1 << 24) as f64;
                out.push((format!("L{i}.updates"), Tensor { shape: vec![1], data: vec![T::of(updates)] }.clone()));
            }
        }
        out
    }

    /// Replaces every entry of `state_dict`; names and shapes must match.
    pub fn load_state_dict(&mut self, entries: Vec<(String, Tensor<T>)>) -> Result<(), NnError> {
        let expected = self.state_dict();
        if entries.len() != expected.len() {
            return Err(NnError::Config(format!("{} tensors given, network has {}", entries.len(), expected.len())));
        }
        for ((name, t), (want, cur)) in entries.iter().zip(&expected) {
            if name != want || t.shape() != cur.shape() {
                return Err(NnError::Config(format!(
                    "tensor {name} {:?} does not match {want} {:?}",
                    t.shape(),
                    cur.shape()
                )));
            }
        }
        let mut it = entries.into_iter().map(|(_, t)| t);
        for l in &mut self.layers {
            for p in &mut l.params {
                *p = it.next().unwrap();
            }
            if !l.running.is_empty() {
                l.running[0] = it.next().unwrap();
                l.running[1] = it.next().unwrap();
                l.bn_updates = it.next().unwrap().data()[0].as_f64() as u64;
            }
        }
        self.caches = None;
        Ok(())
    }
}
