//! Recording preprocessing: down-sampling, Butterworth band-pass, standardization.

mod butterworth;
mod resample;

pub use butterworth::{design_butterworth_bandpass, filter_zero_phase, Biquad, BiquadChain, FilterSpec};
pub use resample::{lowpass_fir, resample, resample_to_len, ANTI_ALIAS_CUTOFF, ANTI_ALIAS_TAPS};

use crate::data::{DataError, Signal};

/// Rate every recording is brought to before segmentation.
pub const TARGET_RATE_HZ: u32 = 1000;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("filter design: {0}")]
    Design(String),
    #[error("section {0} is unstable")]
    Unstable(usize),
    #[error("signal has {len} samples, filtering needs at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate signal: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Signal(#[from] DataError),
}

/// Zero mean, unit population standard deviation.
pub fn standardize(signal: &Signal) -> Result<Signal, DspError> {
    let x = signal.samples();
    if x.len() < 2 {
        return Err(DspError::Degenerate("need at least two samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 || std <= 1e-12 * mean.abs() {
        return Err(DspError::Degenerate("zero variance".into()));
    }
    let mut out: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
    // second pass removes the rounding residue of the first mean estimate
    let residual = out.iter().sum::<f64>() / n;
    out.iter_mut().for_each(|v| *v -= residual);
    Ok(Signal::new(out, signal.sample_rate_hz())?)
}

/// Resample to 1 kHz, band-pass 25–400 Hz (zero phase), standardize.
pub fn preprocess(signal: &Signal) -> Result<Signal, DspError> {
    let chain = design_butterworth_bandpass(&FilterSpec::pcg_default())?;
    preprocess_with(signal, &chain)
}

/// [`preprocess`] with a pre-designed 1 kHz filter chain.
pub fn preprocess_with(signal: &Signal, chain: &BiquadChain) -> Result<Signal, DspError> {
    if signal.sample_rate_hz() < TARGET_RATE_HZ {
        return Err(DspError::Unsupported(format!(
            "input rate {} Hz below {TARGET_RATE_HZ} Hz",
            signal.sample_rate_hz()
        )));
    }
    let resampled = resample(signal, TARGET_RATE_HZ)?;
    let filtered = filter_zero_phase(&resampled, chain)?;
    standardize(&filtered)
}
