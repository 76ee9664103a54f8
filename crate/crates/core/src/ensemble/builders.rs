use crate::features::N_COEFFS;
use crate::nn::{LayerSpec, Network, NnError, Scalar};
use crate::segment::{LengthPolicy, NORM_LEN, ZPAD_LEN};

/// Frames in a feature map of a duration-normalized beat.
pub const MAP_FRAMES: usize = 96;
pub const DENSE_DROPOUT: f64 = 0.5;

/// Width and regularization knobs shared by both CNN stacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnShape {
    pub filters: usize,
    pub dense_units: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
}

impl CnnShape {
    pub fn cnn1d(policy: LengthPolicy) -> Self {
        let conv_dropout = if policy == LengthPolicy::Zpad1200 { 0.8 } else { 0.4 };
        CnnShape { filters: 8, dense_units: 512, conv_dropout, dense_dropout: DENSE_DROPOUT }
    }

    pub fn cnn2d() -> Self {
        CnnShape { filters: 16, dense_units: 256, conv_dropout: 0.5, dense_dropout: DENSE_DROPOUT }
    }
}

fn stack(conv: impl Fn() -> LayerSpec, pool: LayerSpec, s: CnnShape) -> Vec<LayerSpec> {
    use LayerSpec::*;
    vec![
        conv(),
        BatchNorm,
        Relu,
        pool,
        conv(),
        Relu,
        Dropout { ratio: s.conv_dropout },
        pool,
        conv(),
        Relu,
        Dropout { ratio: s.conv_dropout },
        pool,
        Flatten,
        Dense { units: s.dense_units },
        Relu,
        Dropout { ratio: s.dense_dropout },
        Softmax { units: 2 },
    ]
}

pub fn cnn1d_specs(s: CnnShape) -> Vec<LayerSpec> {
    stack(
        || LayerSpec::Conv1d { kernel: 6, filters: s.filters },
        LayerSpec::MaxPool1d { size: 2, stride: 2 },
        s,
    )
}

pub fn cnn2d_specs(s: CnnShape) -> Vec<LayerSpec> {
    stack(
        || LayerSpec::Conv2d { kernel: (4, 4), filters: s.filters },
        LayerSpec::MaxPool2d { size: 2, stride: 2 },
        s,
    )
}

/// Per-sample input shape of the 1D network for a beat policy.
pub fn cnn1d_input(policy: LengthPolicy) -> Result<[usize; 2], NnError> {
    match policy {
        LengthPolicy::Norm1000 => Ok([NORM_LEN, 1]),
        LengthPolicy::Zpad1200 => Ok([ZPAD_LEN, 1]),
        LengthPolicy::Raw => Err(NnError::Config("the 1D-CNN needs fixed-length beats (norm1000 or zpad1200)".into())),
    }
}

pub const CNN2D_INPUT: [usize; 3] = [MAP_FRAMES, N_COEFFS, 1];

/// The raw-signal network.
pub fn build_1dcnn<T: Scalar>(policy: LengthPolicy, seed: u64) -> Result<Network<T>, NnError> {
    build_1dcnn_with(policy, CnnShape::cnn1d(policy), seed)
}

pub fn build_1dcnn_with<T: Scalar>(policy: LengthPolicy, shape: CnnShape, seed: u64) -> Result<Network<T>, NnError> {
    Network::new(&cnn1d_input(policy)?, &cnn1d_specs(shape), seed)
}

/// The feature-map network.
pub fn build_2dcnn<T: Scalar>(seed: u64) -> Result<Network<T>, NnError> {
    build_2dcnn_with(CnnShape::cnn2d(), seed)
}

pub fn build_2dcnn_with<T: Scalar>(shape: CnnShape, seed: u64) -> Result<Network<T>, NnError> {
    Network::new(&CNN2D_INPUT, &cnn2d_specs(shape), seed)
}

/// `(type, output shape)` for each structural layer, in table order.
pub fn layer_table<T: Scalar>(net: &Network<T>) -> Vec<(&'static str, Vec<usize>)> {
    net.specs()
        .iter()
        .zip(net.output_shapes())
        .filter(|(s, _)| s.is_structural())
        .map(|(s, shape)| (s.name(), shape))
        .collect()
}
