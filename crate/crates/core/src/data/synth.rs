//! Synthetic PCG recordings with known state boundaries.
//!
//! Each beat carries an S1 burst (≈40 Hz) and an S2 burst (≈60 Hz), both
//! Gaussian-windowed tones. Abnormal recordings add a systolic murmur built
//! from random-phase sinusoids in the 100–300 Hz band under a half-sine
//! envelope spanning the systolic interval.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, HeartState, Label, Signal, StateSequence};
use crate::util::sub_seed;

const S1_FREQ_HZ: f64 = 40.0;
const S2_FREQ_HZ: f64 = 60.0;
const S1_DURATION: f64 = 0.10;
const S2_DURATION: f64 = 0.08;
const MURMUR_BAND_HZ: (f64, f64) = (100.0, 300.0);
const MURMUR_PARTIALS: usize = 24;
/// Beat-to-beat rate variation around the recording's base rate.
const RATE_JITTER: f64 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Recordings generated for each class.
    pub n_recordings: usize,
    /// Complete cardiac cycles per recording.
    pub beats_per_recording: usize,
    pub heart_rate_bpm_range: (f64, f64),
    /// Murmur RMS amplitude, applied to abnormal recordings only.
    pub murmur_amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub recordings_per_subject: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_recordings: 60,
            beats_per_recording: 8,
            heart_rate_bpm_range: (60.0, 100.0),
            murmur_amplitude: 0.35,
            noise_std: 0.05,
            seed: 0,
            sample_rate_hz: 2000,
            recordings_per_subject: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let (lo, hi) = self.heart_rate_bpm_range;
        let fail = |m: String| Err(DataError::Config(m));
        if self.n_recordings == 0 {
            return fail("n_recordings must be positive".into());
        }
        if self.beats_per_recording == 0 {
            return fail("beats_per_recording must be positive".into());
        }
        if !(lo > 0.0 && lo <= hi && hi <= 200.0) {
            return fail(format!("heart rate range ({lo}, {hi}) invalid; need 0 < lo <= hi <= 200"));
        }
        if !(self.murmur_amplitude >= 0.0 && self.murmur_amplitude.is_finite()) {
            return fail("murmur_amplitude must be >= 0".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be >= 0".into());
        }
        if self.sample_rate_hz < 1000 {
            return fail("sample_rate_hz must be at least 1000".into());
        }
        if self.recordings_per_subject == 0 {
            return fail("recordings_per_subject must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub id: String,
    pub subject_id: String,
    pub label: Label,
    pub signal: Signal,
    pub states: StateSequence,
}

/// Generates `n_recordings` normal then `n_recordings` abnormal recordings.
pub fn synth_pcg(config: &SynthConfig) -> Result<Vec<SynthRecording>, DataError> {
    config.validate()?;
    let mut out = Vec::with_capacity(2 * config.n_recordings);
    for label in Label::ALL {
        let prefix = match label {
            Label::Normal => "n",
            Label::Abnormal => "a",
        };
        for i in 0..config.n_recordings {
            let id = format!("{prefix}{i:04}");
            let subject_id = format!("s{prefix}{:04}", i / config.recordings_per_subject);
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, &id));
            let (signal, states) = synth_recording(config, label, &mut rng)?;
            out.push(SynthRecording { id, subject_id, label, signal, states });
        }
    }
    Ok(out)
}

fn synth_recording(
    config: &SynthConfig,
    label: Label,
    rng: &mut ChaCha8Rng,
) -> Result<(Signal, StateSequence), DataError> {
    let fs = config.sample_rate_hz as f64;
    let (lo, hi) = config.heart_rate_bpm_range;
    let base_bpm = if hi > lo { rng.random_range(lo..=hi) } else { lo };

    let lead_in = rng.random_range(0.1..0.3);
    let mut cycles = Vec::with_capacity(config.beats_per_recording);
    let mut t = lead_in;
    for _ in 0..config.beats_per_recording {
        let bpm = base_bpm * rng.random_range(1.0 - RATE_JITTER..1.0 + RATE_JITTER);
        let period = 60.0 / bpm;
        cycles.push((t, period));
        t += period;
    }
    let last_onset = t;
    let total = ((last_onset + 0.2) * fs).ceil() as usize;
    let mut x = vec![0.0; total];

    let to_index = |sec: f64| (sec * fs).round() as usize;
    let mut entries = vec![(0, HeartState::Diastole)];
    for &(onset, period) in &cycles {
        let s2_onset = onset + (0.35 * period).max(0.2);
        entries.push((to_index(onset), HeartState::S1));
        entries.push((to_index(onset + S1_DURATION), HeartState::Systole));
        entries.push((to_index(s2_onset), HeartState::S2));
        entries.push((to_index(s2_onset + S2_DURATION), HeartState::Diastole));

        let a1 = rng.random_range(0.8..1.2);
        let a2 = rng.random_range(0.5..0.9);
        let p1 = rng.random_range(0.0..2.0 * PI);
        let p2 = rng.random_range(0.0..2.0 * PI);
        add_burst(&mut x, fs, onset + 0.05, 0.02, S1_FREQ_HZ, a1, p1);
        add_burst(&mut x, fs, s2_onset + 0.04, 0.015, S2_FREQ_HZ, a2, p2);

        if label == Label::Abnormal && config.murmur_amplitude > 0.0 {
            add_murmur(&mut x, fs, onset + S1_DURATION, s2_onset, config.murmur_amplitude, rng);
        }
    }
    entries.push((to_index(last_onset), HeartState::S1));
    entries.push((to_index(last_onset + S1_DURATION), HeartState::Systole));

    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).expect("validated std");
        for v in x.iter_mut() {
            *v += noise.sample(rng);
        }
    }

    Ok((Signal::new(x, config.sample_rate_hz)?, StateSequence::new(entries)?))
}

fn add_burst(x: &mut [f64], fs: f64, center: f64, sigma: f64, freq: f64, amp: f64, phase: f64) {
    let lo = ((center - 4.0 * sigma) * fs).floor().max(0.0) as usize;
    let hi = (((center + 4.0 * sigma) * fs).ceil() as usize).min(x.len());
    for (n, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = n as f64 / fs - center;
        *v += amp * (-dt * dt / (2.0 * sigma * sigma)).exp() * (2.0 * PI * freq * dt + phase).sin();
    }
}

fn add_murmur(x: &mut [f64], fs: f64, start: f64, end: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let partials: Vec<(f64, f64)> = (0..MURMUR_PARTIALS)
        .map(|_| {
            (
                rng.random_range(MURMUR_BAND_HZ.0..MURMUR_BAND_HZ.1),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    // unit-RMS sum of sinusoids
    let norm = (2.0 / MURMUR_PARTIALS as f64).sqrt();
    let lo = (start * fs).round() as usize;
    let hi = ((end * fs).round() as usize).min(x.len());
    let span = (hi - lo).max(1) as f64;
    for (k, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let t = k as f64 / fs;
        let env = (PI * (k - lo) as f64 / span).sin();
        let s: f64 = partials.iter().map(|&(f, p)| (2.0 * PI * f * t + p).sin()).sum();
        *v += amp * env * norm * s;
    }
}
