//! Minimal CNN engine: channels-last tensors, the layer set used by the 1D
//! and 2D classifiers, reverse-mode gradients, weighted cross-entropy, Adam
//! and a seeded training loop.
//!
//! Batch tensors are `[B, L, C]` for 1D signals, `[B, H, W, C]` for maps and
//! `[B, N]` after flattening. Training runs in `f32`; `f64` exists for
//! gradient checks.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod train;

pub use gradcheck::{check_gradients, GradCheck};
pub use layers::{softmax_rows, LayerSpec};
pub use loss::weighted_cross_entropy;
pub use network::Network;
pub use optim::{Adam, AdamConfig};
pub use train::{class_weights_from, train, EpochStats, Samples, TrainConfig, TrainOutcome};

pub trait Scalar:
    num_traits::Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Debug + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> f32 {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> f64 {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("network config: {0}")]
    Config(String),
    #[error("layer {layer}: batch norm has no running statistics yet; train before inference")]
    NotTrained { layer: usize },
    #[error("backward called without a cached training forward pass")]
    NoForward,
    #[error("layer {layer} produced a non-finite activation")]
    NonFinite { layer: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}{}", layer.map(|l| format!(", first bad layer {l}")).unwrap_or_default())]
    NonFiniteLoss { epoch: usize, batch: usize, layer: Option<usize> },
    #[error("training data: {0}")]
    Data(String),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(NnError::Config(format!("zero dimension in shape {shape:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::Config(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); n] }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self, NnError> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub(crate) fn reshaped(mut self, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }
}
