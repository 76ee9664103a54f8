//! Short-segment heart sound classification.
//!
//! The pipeline runs recordings through resampling, band-pass filtering and
//! standardization, cuts them into single heartbeats using state annotations,
//! and classifies each beat with a raw-signal 1D-CNN, an MFCC/TVAR 2D-CNN,
//! their score-fused ensemble, or a GMM-HMM baseline.
//!
//! ```text
//! WAV -> dsp::preprocess -> segment::segment_beats -> features -> ensemble / hmm
//! ```

pub mod data;
pub mod dsp;
pub mod ensemble;
pub mod features;
pub mod hmm;
pub mod nn;
pub mod pipeline;
pub mod segment;
mod util;

pub use data::{Label, Signal};
pub use util::{round2, sub_seed};
