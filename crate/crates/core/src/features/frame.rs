use std::f64::consts::PI;

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hamming if len == 1 => vec![1.0],
            Window::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Short-time framing parameters, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for FrameConfig {
    /// 50 ms Hamming frames with a 10 ms hop at 1 kHz: 96 frames per 1000-sample beat.
    fn default() -> Self {
        FrameConfig { frame_len: 50, hop: 10, window: Window::Hamming }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.frame_len == 0 || self.hop == 0 || self.hop > self.frame_len {
            return Err(FeatureError::Config(format!(
                "need 0 < hop ({}) <= frame_len ({})",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    /// `floor((len - frame_len) / hop) + 1`, or `None` when the signal is shorter than a frame.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.frame_len).then(|| (len - self.frame_len) / self.hop + 1)
    }
}

/// Cuts `x` into windowed frames.
pub fn frame_signal(x: &[f64], cfg: &FrameConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    cfg.validate()?;
    let count = cfg
        .frame_count(x.len())
        .ok_or(FeatureError::TooShort { len: x.len(), frame_len: cfg.frame_len })?;
    let w = cfg.window.coefficients(cfg.frame_len);
    Ok((0..count)
        .map(|t| {
            let start = t * cfg.hop;
            x[start..start + cfg.frame_len].iter().zip(&w).map(|(a, b)| a * b).collect()
        })
        .collect())
}
