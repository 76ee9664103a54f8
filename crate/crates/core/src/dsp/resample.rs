//! Anti-aliased linear-interpolation resampling.

use std::f64::consts::PI;

use super::DspError;
use crate::data::Signal;

/// Anti-alias FIR length.
pub const ANTI_ALIAS_TAPS: usize = 31;
/// Cutoff as a fraction of the output sample rate.
pub const ANTI_ALIAS_CUTOFF: f64 = 0.45;

/// Hamming-windowed sinc low-pass with unit DC gain. `cutoff` is in cycles
/// per input sample.
pub fn lowpass_fir(cutoff: f64, taps: usize) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 { 2.0 * cutoff } else { (2.0 * PI * cutoff * t).sin() / (PI * t) };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Centered ("same") convolution, replicating edge samples outward.
fn fir_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = (h.len() / 2) as isize;
    let last = x.len() as isize - 1;
    (0..x.len() as isize)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| hk * x[(i + half - k as isize).clamp(0, last) as usize])
                .sum()
        })
        .collect()
}

fn interp_at(x: &[f64], t: f64) -> f64 {
    let last = x.len() - 1;
    if t <= 0.0 {
        return x[0];
    }
    if t >= last as f64 {
        return x[last];
    }
    let i = t.floor() as usize;
    let frac = t - i as f64;
    x[i] + frac * (x[i + 1] - x[i])
}

/// Band-limits `x` when shrinking by `ratio = out/in < 1`.
fn anti_alias(x: &[f64], ratio: f64) -> Vec<f64> {
    if ratio < 1.0 && x.len() > 1 {
        fir_same(x, &lowpass_fir(ANTI_ALIAS_CUTOFF * ratio, ANTI_ALIAS_TAPS))
    } else {
        x.to_vec()
    }
}

/// Down-samples to `target_rate_hz`. Output sample `n` sits at input time
/// `n * source / target`; the output has `round(len * target / source)` samples.
pub fn resample(signal: &Signal, target_rate_hz: u32) -> Result<Signal, DspError> {
    let source = signal.sample_rate_hz();
    if target_rate_hz == 0 {
        return Err(DspError::Unsupported("target rate must be positive".into()));
    }
    if target_rate_hz > source {
        return Err(DspError::Unsupported(format!(
            "upsampling {source} Hz -> {target_rate_hz} Hz"
        )));
    }
    if target_rate_hz == source {
        return Ok(signal.clone());
    }
    let ratio = target_rate_hz as f64 / source as f64;
    let filtered = anti_alias(signal.samples(), ratio);
    let out_len = ((signal.len() as f64 * ratio).round() as usize).max(1);
    let step = source as f64 / target_rate_hz as f64;
    let out = (0..out_len).map(|n| interp_at(&filtered, n as f64 * step)).collect();
    Ok(Signal::new(out, target_rate_hz)?)
}

/// Stretches or shrinks `x` to exactly `target_len` samples. Output sample `n`
/// sits at input position `n * len / target_len`; positions past the last
/// sample continue the final interpolation segment, so ramps stay exact.
/// Shrinking applies the anti-alias filter first.
pub fn resample_to_len(x: &[f64], target_len: usize) -> Vec<f64> {
    assert!(x.len() >= 2 && target_len >= 1, "need at least two input samples");
    if x.len() == target_len {
        return x.to_vec();
    }
    let filtered = anti_alias(x, target_len as f64 / x.len() as f64);
    let step = x.len() as f64 / target_len as f64;
    let last = filtered.len() - 1;
    (0..target_len)
        .map(|n| {
            let t = n as f64 * step;
            if t > last as f64 {
                let slope = filtered[last] - filtered[last - 1];
                filtered[last] + (t - last as f64) * slope
            } else {
                interp_at(&filtered, t)
            }
        })
        .collect()
}
