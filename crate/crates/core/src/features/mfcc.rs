//! Mel filterbank, orthonormal DCT-II and short-time MFCC maps.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{frame_signal, FeatureError, FeatureKind, FeatureMap, FrameConfig, N_COEFFS};

pub const N_FFT: usize = 64;
pub const N_MEL_FILTERS: usize = 26;
pub const MEL_LOW_HZ: f64 = 25.0;
pub const MEL_HIGH_HZ: f64 = 400.0;
/// Floor applied to filterbank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the Mel scale. Each triangle rises
/// from its left neighbour's center to its own center and falls to its right
/// neighbour's center, evaluated at the FFT bin frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    edges_hz: Vec<f64>,
    n_fft: usize,
    sample_rate_hz: u32,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, n_fft: usize, sample_rate_hz: u32, low_hz: f64, high_hz: f64) -> Result<Self, FeatureError> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if n_filters == 0 || n_fft < 2 || !(0.0 <= low_hz && low_hz < high_hz && high_hz <= nyquist) {
            return Err(FeatureError::Config(format!(
                "bad filterbank: {n_filters} filters, n_fft {n_fft}, band {low_hz}-{high_hz} Hz at {sample_rate_hz} Hz"
            )));
        }
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges_hz: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let mut fb = MelFilterbank {
            weights: Vec::with_capacity(n_filters),
            centers_hz: edges_hz[1..=n_filters].to_vec(),
            edges_hz,
            n_fft,
            sample_rate_hz,
        };
        for m in 0..n_filters {
            let row: Vec<f64> = (0..n_bins).map(|k| fb.weight_at(m, fb.bin_hz(k))).collect();
            if row.iter().sum::<f64>() <= 0.0 {
                return Err(FeatureError::Config(format!(
                    "mel filter {m} covers no FFT bin; use fewer filters or a longer FFT"
                )));
            }
            fb.weights.push(row);
        }
        Ok(fb)
    }

    /// 26 filters over 25–400 Hz for a 64-point FFT at 1 kHz.
    pub fn pcg_default() -> Self {
        Self::new(N_MEL_FILTERS, N_FFT, 1000, MEL_LOW_HZ, MEL_HIGH_HZ).expect("default filterbank is valid")
    }

    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate_hz as f64 / self.n_fft as f64
    }

    /// Continuous triangle of filter `m` at `freq_hz`.
    pub fn weight_at(&self, m: usize, freq_hz: f64) -> f64 {
        let (l, c, r) = (self.edges_hz[m], self.edges_hz[m + 1], self.edges_hz[m + 2]);
        if freq_hz <= l || freq_hz >= r {
            0.0
        } else if freq_hz <= c {
            (freq_hz - l) / (c - l)
        } else {
            (r - freq_hz) / (r - c)
        }
    }

    /// Filter energies for a one-sided power spectrum of `n_fft/2 + 1` bins.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Orthonormal DCT-II matrix, row `k` is basis vector `k`.
pub fn dct_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// Reusable MFCC pipeline: FFT plan, filterbank and DCT basis.
#[derive(Clone)]
pub struct MfccExtractor {
    filterbank: MelFilterbank,
    frame: FrameConfig,
    fft: Arc<dyn Fft<f64>>,
    dct: Vec<Vec<f64>>,
    include_c0: bool,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("filterbank", &self.filterbank)
            .field("frame", &self.frame)
            .field("include_c0", &self.include_c0)
            .finish()
    }
}

impl MfccExtractor {
    /// `include_c0` keeps c0..c11 instead of the default c1..c12.
    pub fn new(filterbank: MelFilterbank, frame: FrameConfig, include_c0: bool) -> Result<Self, FeatureError> {
        frame.validate()?;
        if filterbank.n_fft() < frame.frame_len {
            return Err(FeatureError::Config(format!(
                "n_fft {} shorter than frame {}",
                filterbank.n_fft(),
                frame.frame_len
            )));
        }
        if filterbank.n_filters() < N_COEFFS + 1 {
            return Err(FeatureError::Config("need more filters than kept coefficients".into()));
        }
        let fft = FftPlanner::new().plan_fft_forward(filterbank.n_fft());
        let dct = dct_matrix(filterbank.n_filters());
        Ok(MfccExtractor { filterbank, frame, fft, dct, include_c0 })
    }

    pub fn pcg_default() -> Self {
        Self::new(MelFilterbank::pcg_default(), FrameConfig::default(), false).expect("valid defaults")
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// One-sided power spectrum of a frame zero-padded to `n_fft`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.filterbank.n_fft();
        let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Log Mel energies of one frame.
    pub fn log_mel(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank
            .apply(&self.power_spectrum(frame))
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect()
    }

    /// Cepstral coefficients of one frame's log Mel energies.
    pub fn cepstrum(&self, log_mel: &[f64]) -> Vec<f64> {
        // AC terms are taken relative to the first band; a constant offset
        // only moves c0, and this keeps gain changes exactly out of c1..
        let first = log_mel[0];
        let first_k = if self.include_c0 { 0 } else { 1 };
        (first_k..first_k + N_COEFFS)
            .map(|k| {
                let basis = &self.dct[k];
                if k == 0 {
                    basis.iter().zip(log_mel).map(|(b, v)| b * v).sum()
                } else {
                    basis.iter().zip(log_mel).map(|(b, v)| b * (v - first)).sum()
                }
            })
            .collect()
    }

    /// T × 12 MFCC map of a duration-normalized beat.
    pub fn mfcc_map(&self, x: &[f64]) -> Result<FeatureMap, FeatureError> {
        let frames = frame_signal(x, &self.frame)?;
        let t = frames.len();
        let mut values = Vec::with_capacity(t * N_COEFFS);
        for f in &frames {
            values.extend(self.cepstrum(&self.log_mel(f)));
        }
        FeatureMap::new(values, t, N_COEFFS, FeatureKind::Mfcc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filterbank_shape_and_triangles() {
        let fb = MelFilterbank::pcg_default();
        assert_eq!(fb.n_filters(), 26);
        assert!(fb.weights().iter().all(|r| r.len() == 33));
        assert!(fb.weights().iter().all(|r| r.iter().all(|&w| w >= 0.0) && r.iter().sum::<f64>() > 0.0));
        // adjacent filters overlap
        for m in 0..25 {
            let mid = 0.5 * (fb.centers_hz()[m] + fb.centers_hz()[m + 1]);
            assert!(fb.weight_at(m, mid) > 0.0 && fb.weight_at(m + 1, mid) > 0.0);
        }
    }

    #[test]
    fn filterbank_covers_passband() {
        let fb = MelFilterbank::pcg_default();
        for k in 0..=32 {
            let f = fb.bin_hz(k);
            if (MEL_LOW_HZ..=MEL_HIGH_HZ).contains(&f) {
                let total: f64 = fb.weights().iter().map(|r| r[k]).sum();
                assert!(total > 0.2, "bin {k} ({f} Hz) weight {total}");
            }
        }
    }

    #[test]
    fn tone_at_center_selects_its_filter() {
        let fb = MelFilterbank::pcg_default();
        for (m, &c) in fb.centers_hz().iter().enumerate() {
            // analytic line spectrum: all power at the tone frequency
            let energies: Vec<f64> = (0..fb.n_filters()).map(|j| fb.weight_at(j, c)).collect();
            let best = energies.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(best, m);
            assert!(energies.iter().enumerate().all(|(j, &e)| j == m || e < energies[m]));
        }
    }

    #[test]
    fn tone_energy_peaks_near_its_filter() {
        let ex = MfccExtractor::pcg_default();
        let fb = ex.filterbank();
        for &m in &[4usize, 10, 16, 22] {
            let f = fb.centers_hz()[m];
            let frame: Vec<f64> = (0..50).map(|n| (2.0 * PI * f * n as f64 / 1000.0).sin()).collect();
            let e = fb.apply(&ex.power_spectrum(&frame));
            let best = e.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!((best as i64 - m as i64).abs() <= 2, "filter {m}: peak at {best}");
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix(26);
        for i in 0..26 {
            for j in 0..26 {
                let dot: f64 = (0..26).map(|n| d[i][n] * d[j][n]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn dct_transpose_inverts(x in prop::collection::vec(-50.0f64..50.0, 26)) {
            let d = dct_matrix(26);
            let y: Vec<f64> = d.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
            for n in 0..26 {
                let back: f64 = (0..26).map(|k| d[k][n] * y[k]).sum();
                prop_assert!((back - x[n]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn silence_gives_zero_ac_coefficients() {
        let map = MfccExtractor::pcg_default().mfcc_map(&vec![0.0; 1000]).unwrap();
        assert_eq!((map.frames(), map.dims()), (96, 12));
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gain_only_moves_c0() {
        let ex = MfccExtractor::pcg_default();
        let x: Vec<f64> = (0..1000)
            .map(|n| {
                let t = n as f64 / 1000.0;
                (2.0 * PI * 40.0 * t).sin() * (-(t - 0.1).powi(2) / 0.001).exp() + 0.2 * (2.0 * PI * 170.0 * t).sin()
            })
            .collect();
        let a = ex.mfcc_map(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = ex.mfcc_map(&scaled).unwrap();
        let diff = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");

        // log energies themselves shift by ln 4
        let frame = &crate::features::frame_signal(&x, &FrameConfig::default()).unwrap()[3];
        let la = ex.log_mel(frame);
        let lb = ex.log_mel(&frame.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        for (p, q) in la.iter().zip(&lb) {
            assert!((q - p - 4f64.ln()).abs() < 1e-9);
        }

        // with c0 kept, the first column carries the shift
        let ex0 = MfccExtractor::new(MelFilterbank::pcg_default(), FrameConfig::default(), true).unwrap();
        let a0 = ex0.mfcc_map(&x).unwrap();
        let b0 = ex0.mfcc_map(&scaled).unwrap();
        let shift = 4f64.ln() * 26f64.sqrt();
        assert!((b0.get(5, 0) - a0.get(5, 0) - shift).abs() < 1e-9);
    }

    #[test]
    fn permuting_frames_permutes_rows() {
        let ex = MfccExtractor::pcg_default();
        let x: Vec<f64> = (0..1000).map(|n| ((n * n) as f64 * 1e-4).sin()).collect();
        let map = ex.mfcc_map(&x).unwrap();
        let frames = frame_signal(&x, &FrameConfig::default()).unwrap();
        for &t in &[0usize, 17, 95] {
            let row = ex.cepstrum(&ex.log_mel(&frames[t]));
            assert_eq!(row.as_slice(), map.row(t));
        }
    }
}
